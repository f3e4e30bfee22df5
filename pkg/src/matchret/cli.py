"""Command-line pipelines: ``synth -> gen-gt -> aggregate -> index -> query -> evaluate``.

Every subcommand reads and writes files only, and drops a JSON run manifest
next to its outputs. ``matchret rerun <manifest>`` replays a run.

Scene directories hold ``scene.txt``, ``fmaps/<image>.fmap`` and, after
``gen-gt``, ``visibility.txt``, ``overlap.txt`` and ``masks/<i>_<j>.mask``.
The directory name is the scene id; items are addressed as
``<scene_id>/<image_id>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from .aggregation import (fit_whitening, apply_whitening, l2_normalize, mac, regional_vectors, rmac,
                          rmac_regions, spoc, RegionalVectorSet)
from .errors import FormatError, MatchRetError
from .geometry import (DEFAULT_TAU_VIS, DEFAULT_ZBUF_RESOLUTION, ThresholdConfig,
                       compute_overlap_table, compute_visibility, overlap_masks)
from .retrieval import build_index, mean_ap_at_k, query, query_expansion, rerank_prc
from .sampling import sample_batch
from .synth import SceneSpec, brute_force_ground_truth, generate_scene

# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def worker_count() -> int:
    """Thread cap from ``MIRROR_THREADS`` (unset or 0 means one per CPU)."""
    raw = os.environ.get("MIRROR_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise MatchRetError(f"MIRROR_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise MatchRetError("MIRROR_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def pmap(fn, items):
    """Order-preserving map over a thread pool sized by :func:`worker_count`."""
    items = list(items)
    n = min(worker_count(), max(len(items), 1))
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as ex:
        return list(ex.map(fn, items))


def _ints(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _pair(text: str) -> tuple[int, int]:
    vals = _ints(text.replace("x", ","))
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two integers like 16,16, got {text!r}")
    return tuple(vals)


class SceneDir:
    """Lazy view of a scene directory on disk."""

    def __init__(self, path):
        self.path = Path(path)
        if not (self.path / "scene.txt").exists():
            raise FormatError(f"{self.path}: no scene.txt")
        self.scene_id = self.path.name
        self.cameras, self.mesh, self.tracks = mio.read_scene(self.path / "scene.txt")

    @property
    def image_ids(self):
        return sorted(self.cameras)

    def item_id(self, i) -> str:
        return f"{self.scene_id}/{i}"

    def fmap(self, i) -> np.ndarray:
        return mio.read_fmap(self.path / "fmaps" / f"{i}.fmap")

    def track_sets(self) -> dict:
        out = {i: set() for i in self.cameras}
        for tid, obs in self.tracks.items():
            for i in obs:
                out[i].add(tid)
        return out

    def overlap(self, cfg=ThresholdConfig(), zbuf=DEFAULT_ZBUF_RESOLUTION, tau_vis=DEFAULT_TAU_VIS):
        """Visibility and overlap table recomputed from the scene geometry."""
        ids = self.image_ids
        vis = dict(zip(ids, pmap(lambda i: compute_visibility(self.cameras[i], self.mesh, zbuf, tau_vis), ids)))
        table = compute_overlap_table(ids, self.track_sets(), vis, cfg, scene_id=self.scene_id)
        return vis, table


def _load_table_with_masks(scene: Path):
    table = mio.read_overlap(scene / "overlap.txt", scene_id=scene.name)
    pos = {i: k for k, i in enumerate(table.image_ids)}
    for f in sorted((scene / "masks").glob("*.mask")):
        i, j = (int(x) for x in f.stem.split("_"))
        table.masks[(pos[i], pos[j])] = mio.read_mask_pair(f)
    return table


def _manifest(path, args, inputs, outputs, seed=None):
    cfg = {k: v for k, v in vars(args).items() if k != "func" and not k.startswith("_")}
    cfg["argv"] = list(args._argv)
    mio.write_manifest(path, args.command, cfg, inputs, outputs, seed)


def _read_embeddings(prefix):
    prefix = Path(prefix)
    vecs = mio.read_emb(prefix.with_suffix(".emb"))
    ids = mio.read_ids(prefix.with_suffix(".ids"))
    if len(ids) != len(vecs):
        raise FormatError(f"{prefix}: {len(ids)} ids for {len(vecs)} vectors")
    return ids, vecs


def _group_regional(ids, vecs) -> dict:
    out: dict = {}
    for item, v in zip(ids, vecs):
        out.setdefault(item, []).append(np.asarray(v, dtype=np.float64))
    return {k: RegionalVectorSet([], np.array(v)) for k, v in out.items()}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SceneSpec(
        seed=args.seed, cameras=args.cameras, mesh_kind=args.mesh, triangles=args.triangles,
        tracks=args.tracks, channels=args.channels, map_size=args.map_size, noise=args.noise,
        altitude_spread=args.altitude_spread, noisy_channels=args.noisy_channels,
    )
    scene = generate_scene(spec)
    out = Path(args.out or spec.scene_id)
    (out / "fmaps").mkdir(parents=True, exist_ok=True)
    mio.write_scene(out / "scene.txt", scene.cameras, scene.mesh, scene.tracks)
    outputs = [out / "scene.txt"]
    for i in scene.image_ids:
        p = out / "fmaps" / f"{i}.fmap"
        mio.write_fmap(p, scene.features[i])
        outputs.append(p)
    _manifest(out / "synth.manifest.json", args, [], outputs, seed=args.seed)
    print(f"scene {out.name}: {len(scene.cameras)} cameras, {len(scene.mesh)} triangles, {len(scene.tracks)} tracks")
    return 0


def cmd_gen_gt(args) -> int:
    for path in args.scenes:
        scene = SceneDir(path)
        vis, table = scene.overlap(zbuf=args.zbuf, tau_vis=args.tau_vis)
        mio.write_visibility(scene.path / "visibility.txt", vis)
        mio.write_overlap(scene.path / "overlap.txt", table)
        mask_res = args.mask_size
        if mask_res is None:
            mask_res = scene.fmap(scene.image_ids[0]).shape[:2]
        mdir = scene.path / "masks"
        mdir.mkdir(exist_ok=True)
        for old in mdir.glob("*.mask"):
            old.unlink()
        ids = scene.image_ids
        pairs = [(a, b) for x, a in enumerate(ids) for b in ids[x + 1 :] if vis[a] & vis[b]]

        def build(pair):
            a, b = pair
            return overlap_masks(scene.cameras[a], scene.cameras[b], scene.mesh, vis[a], vis[b], mask_res)

        outputs = [scene.path / "visibility.txt", scene.path / "overlap.txt"]
        for (a, b), masks in zip(pairs, pmap(build, pairs)):
            p = mdir / f"{a}_{b}.mask"
            mio.write_mask_pair(p, masks)
            outputs.append(p)
        _manifest(scene.path / "gen-gt.manifest.json", args, [scene.path / "scene.txt"], outputs)
        print(f"{scene.scene_id}: {len(table.records())} pairs, {len(pairs)} mask pairs")
    return 0


def cmd_sample(args) -> int:
    tables = [_load_table_with_masks(Path(p)) for p in args.scenes]
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    mdir = out.parent / (out.stem + "_masks")
    mdir.mkdir(parents=True, exist_ok=True)
    lines, outputs = [], [out]
    for b in range(args.batches):
        batch = sample_batch(tables, args.n_b, rng=rng)
        for k, col in enumerate(batch.columns):
            refs = []
            for kind, masks in (("strong", col.strong_masks), ("weak", col.weak_masks)):
                p = mdir / f"b{b}_c{k}_{kind}.mask"
                mio.write_mask_pair(p, masks)
                refs.append(str(p.relative_to(out.parent)))
                outputs.append(p)
            lines.append(f"{col.scene_id} {col.anchor} {col.strong} {col.weak} {refs[0]} {refs[1]}\n")
        lines.append("\n")
    out.write_text("".join(lines))
    _manifest(out.with_suffix(".manifest.json"), args, args.scenes, outputs, seed=args.seed)
    print(f"{args.batches} batch(es) of {args.n_b} columns -> {out}")
    return 0


def _aggregate_one(args, scene: SceneDir, i, grid):
    f = scene.fmap(i)
    if args.method == "mac":
        return [mac(f)]
    if args.method == "spoc":
        return [spoc(f)]
    if args.method == "rmac":
        return [rmac(f, grid)]
    return list(regional_vectors(f, grid).vectors)


def cmd_aggregate(args) -> int:
    scenes = [SceneDir(p) for p in args.scenes]
    jobs = [(s, i) for s in scenes for i in s.image_ids]
    grids = {}

    def run(job):
        s, i = job
        shape = s.fmap(i).shape[:2]
        grid = grids.get(shape) or rmac_regions(*shape, scales=args.scales)
        grids[shape] = grid
        return _aggregate_one(args, s, i, grid)

    results = pmap(run, jobs)
    ids, vecs = [], []
    for (s, i), vs in zip(jobs, results):
        ids.extend([s.item_id(i)] * len(vs))
        vecs.extend(vs)
    vecs = np.array(vecs, dtype=np.float64)
    if args.whiten:
        model = fit_whitening(vecs, args.whiten)
        vecs = apply_whitening(model, vecs)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mio.write_emb(prefix.with_suffix(".emb"), vecs)
    mio.write_ids(prefix.with_suffix(".ids"), ids)
    _manifest(prefix.with_suffix(".manifest.json"), args, args.scenes,
              [prefix.with_suffix(".emb"), prefix.with_suffix(".ids")])
    print(f"{args.method}: {len(vecs)} vectors of dimension {vecs.shape[1] if len(vecs) else 0} -> {prefix}")
    return 0


def cmd_index(args) -> int:
    ids, vecs = _read_embeddings(args.emb)
    if len(set(ids)) != len(ids):
        raise FormatError(f"{args.emb}: duplicate ids; regional vector sets go to query --regional")
    index = build_index(ids, vecs)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mio.write_emb(prefix.with_suffix(".emb"), index.vectors)
    mio.write_ids(prefix.with_suffix(".ids"), index.ids)
    _manifest(prefix.with_suffix(".manifest.json"), args, [args.emb],
              [prefix.with_suffix(".emb"), prefix.with_suffix(".ids")])
    print(f"index of {len(index)} items, dimension {index.dim} -> {prefix}")
    return 0


def cmd_query(args) -> int:
    ids, vecs = _read_embeddings(args.index)
    regional = _group_regional(*_read_embeddings(args.regional)) if args.regional else {}
    index = build_index(ids, vecs, regional)
    queries = args.queries.split(",") if args.queries else list(index.ids)
    k = min(args.k, len(index) - 1)

    def run(q):
        rl = query(index, k=max(k, args.shortlist if args.rerank_prc else 0, args.qe), query_id=q)
        if args.qe:
            rl = query_expansion(index, rl, m=args.qe, k=len(rl))
        if args.rerank_prc:
            rl = rerank_prc(index, rl, m=args.shortlist)
        rl.items, rl.distances = rl.items[:k], rl.distances[:k]
        return rl

    lists = pmap(run, queries)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mio.write_rank_lists(out, lists)
    inputs = [args.index] + ([args.regional] if args.regional else [])
    _manifest(out.with_suffix(".manifest.json"), args, inputs, [out])
    print(f"{len(lists)} queries, k={k} -> {out}")
    return 0


def _report_text(per_scene, overall, evaluated, skipped) -> str:
    lines = []
    for sid in sorted(per_scene):
        for k in sorted(per_scene[sid]):
            lines.append(f"scene {sid} mAP@{k} {per_scene[sid][k]:.6f}")
    for k in sorted(overall):
        lines.append(f"overall mAP@{k} {overall[k]:.6f}")
    lines.append(f"queries evaluated {evaluated} skipped {skipped}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    scenes = [SceneDir(p) for p in args.scenes]
    gt, scene_of = {}, {}
    for s in scenes:
        _, table = s.overlap(zbuf=args.zbuf, tau_vis=args.tau_vis)
        for i, rel in brute_force_ground_truth(table, args.t_pos).items():
            gt[s.item_id(i)] = {s.item_id(j) for j in rel}
            scene_of[s.item_id(i)] = s.scene_id
    lists = mio.read_rank_lists(args.ranks)
    per_scene: dict = {}
    overall, evaluated, skipped = {}, 0, 0
    for k in args.k:
        rep = mean_ap_at_k(lists, gt, k)
        overall[k] = rep.mean_ap
        evaluated, skipped = rep.evaluated, rep.skipped
        by_scene: dict = {}
        for q, ap in rep.per_query.items():
            by_scene.setdefault(scene_of.get(q, "?"), []).append(ap)
        for sid, aps in by_scene.items():
            per_scene.setdefault(sid, {})[k] = float(np.mean(aps))
    text = _report_text(per_scene, overall, evaluated, skipped)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    outputs = [out]
    if not args.no_figure:
        from .plotting import plot_map_report

        fig = out.with_suffix(".png")
        plot_map_report(per_scene, overall, fig)
        outputs.append(fig)
    _manifest(out.with_suffix(".manifest.json"), args, [args.ranks, *args.scenes], outputs)
    sys.stdout.write("---\n" + text + "---\n")
    return 0


def _load_training_scenes(paths):
    from .synth import SyntheticScene

    scenes = []
    for p in paths:
        s = SceneDir(p)
        table = _load_table_with_masks(s.path)
        feats = {i: s.fmap(i) for i in s.image_ids}
        scenes.append(SyntheticScene(s.scene_id, s.cameras, s.mesh, s.tracks, {}, feats, table))
    return scenes


def cmd_train(args) -> int:
    from .plotting import plot_loss_curves
    from .trainer import LinearEmbeddingModel, TrainConfig, evaluate_model, train

    scenes = _load_training_scenes(args.scenes)
    cfg = TrainConfig(lr=args.lr, steps=args.steps, batch_size=args.n_b, seed=args.seed,
                      embed_dim=args.dim, loss_kind=args.loss, decay_interval=args.decay_interval)
    channels = next(iter(scenes[0].features.values())).shape[-1]
    init = LinearEmbeddingModel.init(channels, cfg.embed_dim, cfg.seed)
    result = train(scenes, cfg, init=init)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    mio.write_lemb(out, result.model.weights)
    hist = out.with_suffix(".history.txt")
    mio.write_history(hist, result.history)
    outputs = [out, hist]
    curves = {cfg.loss_kind: result.losses}
    if args.compare:
        other = "tl" if cfg.loss_kind == "mtl" else "mtl"
        alt = train(scenes, replace(cfg, loss_kind=other), init=init)
        curves[other] = alt.losses
        ahist = out.with_suffix(f".{other}.history.txt")
        mio.write_history(ahist, alt.history)
        outputs.append(ahist)
    if not args.no_figure and cfg.steps:
        fig = out.with_suffix(".loss.png")
        plot_loss_curves(curves, fig, window=min(50, cfg.steps))
        outputs.append(fig)
    before = evaluate_model(init, scenes, k=args.eval_k).mean_ap
    after = evaluate_model(result.model, scenes, k=args.eval_k).mean_ap
    _manifest(out.with_suffix(".manifest.json"), args, args.scenes, outputs, seed=args.seed)
    sys.stdout.write(f"---\ninit mAP@{args.eval_k} {before:.6f}\ntrained mAP@{args.eval_k} {after:.6f}\n---\n")
    return 0


def cmd_embed(args) -> int:
    """Embed scene feature maps with a trained linear model (MAC on the projection)."""
    from .trainer import LinearEmbeddingModel

    model = LinearEmbeddingModel(mio.read_lemb(args.model).astype(np.float64))
    scenes = [SceneDir(p) for p in args.scenes]
    ids, vecs = [], []
    for s in scenes:
        for i in s.image_ids:
            ids.append(s.item_id(i))
            vecs.append(l2_normalize(model.project(s.fmap(i)).max(axis=(0, 1))))
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    mio.write_emb(prefix.with_suffix(".emb"), np.array(vecs))
    mio.write_ids(prefix.with_suffix(".ids"), ids)
    _manifest(prefix.with_suffix(".manifest.json"), args, [args.model, *args.scenes],
              [prefix.with_suffix(".emb"), prefix.with_suffix(".ids")])
    print(f"{len(ids)} embeddings -> {prefix}")
    return 0


def cmd_grad_check(args) -> int:
    from . import gradcheck

    errors = gradcheck.run(args.kernels, instances=args.instances, seed=args.seed, h=args.h, n_b=args.n_b)
    text = gradcheck.format_report(errors, args.tol)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        _manifest(out.with_suffix(".manifest.json"), args, [], [out], seed=args.seed)
    sys.stdout.write("---\n" + text + "---\n")
    return 0 if all(max(e) < args.tol for e in errors.values() if e) else 1


def cmd_rerun(args) -> int:
    manifest = mio.read_manifest(args.manifest)
    argv = manifest.get("config", {}).get("argv")
    if not argv:
        raise FormatError(f"{args.manifest}: no recorded argv")
    return main(argv)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="matchret", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a seeded synthetic scene directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cameras", type=int, default=12)
    s.add_argument("--mesh", choices=("plane", "sphere", "city"), default="plane")
    s.add_argument("--triangles", type=int, default=200)
    s.add_argument("--tracks", type=int, default=3000)
    s.add_argument("--channels", type=int, default=32)
    s.add_argument("--map-size", type=_pair, default=(16, 16))
    s.add_argument("--noise", type=float, default=0.05)
    s.add_argument("--noisy-channels", type=int, default=8)
    s.add_argument("--altitude-spread", type=float, default=1.0)
    s.add_argument("--out", help="scene directory (default: scene<seed>)")
    s.set_defaults(func=cmd_synth)

    g = sub.add_parser("gen-gt", help="visibility, overlap table and overlap masks")
    g.add_argument("scenes", nargs="+")
    g.add_argument("--zbuf", type=_pair, default=DEFAULT_ZBUF_RESOLUTION)
    g.add_argument("--tau-vis", type=float, default=DEFAULT_TAU_VIS)
    g.add_argument("--mask-size", type=_pair, default=None, help="default: feature map size")
    g.set_defaults(func=cmd_gen_gt)

    b = sub.add_parser("sample", help="draw triplet batches from distinct scenes")
    b.add_argument("scenes", nargs="+")
    b.add_argument("--n-b", type=int, default=4)
    b.add_argument("--batches", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="batch.txt")
    b.set_defaults(func=cmd_sample)

    a = sub.add_parser("aggregate", help="MAC / SPoC / R-MAC / regional vectors")
    a.add_argument("scenes", nargs="+")
    a.add_argument("--method", choices=("mac", "spoc", "rmac", "regional"), default="mac")
    a.add_argument("--scales", type=_ints, default=[1, 2])
    a.add_argument("--whiten", type=int, default=0, metavar="D", help="PCA-whiten to D dimensions")
    a.add_argument("--out", default="embeddings")
    a.set_defaults(func=cmd_aggregate)

    e = sub.add_parser("embed", help="embed scenes with a trained linear model")
    e.add_argument("scenes", nargs="+")
    e.add_argument("--model", required=True)
    e.add_argument("--out", default="embeddings")
    e.set_defaults(func=cmd_embed)

    x = sub.add_parser("index", help="build an exact L2 index from an embedding file")
    x.add_argument("emb", help="embedding prefix (<prefix>.emb + <prefix>.ids)")
    x.add_argument("--out", default="index")
    x.set_defaults(func=cmd_index)

    q = sub.add_parser("query", help="rank lists for indexed items")
    q.add_argument("index", help="index prefix")
    q.add_argument("--k", type=int, default=100)
    q.add_argument("--qe", type=int, default=0, metavar="M", help="query expansion with the top M")
    q.add_argument("--rerank-prc", action="store_true")
    q.add_argument("--shortlist", type=int, default=200)
    q.add_argument("--regional", help="regional vector prefix, needed by --rerank-prc")
    q.add_argument("--queries", help="comma-separated query ids (default: all)")
    q.add_argument("--out", default="ranks.txt")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("evaluate", help="mAP@k report against geometric ground truth")
    v.add_argument("ranks")
    v.add_argument("scenes", nargs="+")
    v.add_argument("--k", type=_ints, default=[100, 200])
    v.add_argument("--t-pos", type=float, default=0.5)
    v.add_argument("--zbuf", type=_pair, default=DEFAULT_ZBUF_RESOLUTION)
    v.add_argument("--tau-vis", type=float, default=DEFAULT_TAU_VIS)
    v.add_argument("--no-figure", action="store_true")
    v.add_argument("--out", default="report.txt")
    v.set_defaults(func=cmd_evaluate)

    t = sub.add_parser("train", help="SGD on the batched triplet loss")
    t.add_argument("scenes", nargs="+")
    t.add_argument("--steps", type=int, default=5000)
    t.add_argument("--n-b", type=int, default=4)
    t.add_argument("--lr", type=float, default=0.002)
    t.add_argument("--decay-interval", type=int, default=1000)
    t.add_argument("--dim", type=int, default=32)
    t.add_argument("--loss", choices=("mtl", "tl"), default="mtl")
    t.add_argument("--compare", action="store_true", help="also train the other loss and plot both")
    t.add_argument("--eval-k", type=int, default=10)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-figure", action="store_true")
    t.add_argument("--out", default="model.lemb")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("grad-check", help="analytic vs central-difference gradients")
    c.add_argument("--kernels", type=lambda s: s.split(","),
                   default=["triplet", "anchor_swap", "mask_triplet", "batched"])
    c.add_argument("--instances", type=int, default=20)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--n-b", type=int, default=2)
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")
    c.set_defaults(func=cmd_grad_check)

    r = sub.add_parser("rerun", help="replay the command recorded in a run manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = argv
    try:
        return args.func(args)
    except (MatchRetError, ValueError, OSError) as err:
        print(f"matchret {args.command}: error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
