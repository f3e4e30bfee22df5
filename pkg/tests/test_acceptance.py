"""Acceptance criteria 1-10; a PASS/FAIL line per criterion is printed at the end of the run."""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import scene
from matchret import gradcheck, io as mio
from matchret.aggregation import regional_vectors, rmac, rmac_regions
from matchret.geometry import (ThresholdConfig, combining_overlap, common_track_ratio, mesh_overlap_ratio)
from matchret.losses import LossConfig, anchor_swap_loss, triplet_loss
from matchret.oracles import brute_force_overlap, brute_force_visibility, exhaustive_ranking
from matchret.retrieval import (average_precision_at_k, build_index, mean_ap_at_k, prmac_ranking, query,
                                rerank_prc)
from matchret.sampling import MarginSchedule
from matchret.synth import SceneSpec, brute_force_ground_truth, generate_scene
from matchret.trainer import LinearEmbeddingModel, TrainConfig, evaluate_model, smoothed, train

REPORTS = Path(__file__).resolve().parent.parent / "reports"


def test_criterion_1_gradients(acceptance):
    t0 = time.perf_counter()
    errors = gradcheck.run(gradcheck.KERNELS, instances=20, seed=0, h=1e-5)
    elapsed = time.perf_counter() - t0
    worst = max(max(e) for e in errors.values())
    counts = {k: len(e) for k, e in errors.items()}
    ok = worst < 1e-4 and all(n >= 20 for n in counts.values()) and elapsed < 30
    acceptance.record(1, ok, f"max rel error {worst:.2e} over {counts}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_overlap_oracles(acceptance):
    t0 = time.perf_counter()
    mismatches = 0
    for seed in range(200, 210):
        sc = generate_scene(SceneSpec(seed=seed))
        assert len(sc.cameras) <= 12 and len(sc.mesh) <= 200
        spec = sc.spec
        for i, c in sc.cameras.items():
            if sc.visibility[i] != brute_force_visibility(c, sc.mesh, spec.zbuf_resolution, spec.tau_vis):
                mismatches += 1
        ref = brute_force_overlap(sc.track_sets(), sc.visibility)
        pos = {i: k for k, i in enumerate(sc.image_ids)}
        for (i, j), (ct, mo, co) in ref.items():
            a, b = pos[i], pos[j]
            if (sc.overlap.ct[a, b], sc.overlap.mo[a, b], sc.overlap.co[a, b]) != (ct, mo, co):
                mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 60
    acceptance.record(2, ok, f"{mismatches} mismatches over 10 scenes, {elapsed:.1f}s")
    assert ok


def _ap_from_scratch(ranked, relevant, k):
    precisions = []
    for r in range(1, min(k, len(ranked)) + 1):
        if ranked[r - 1] in relevant:
            precisions.append(sum(1 for x in ranked[:r] if x in relevant) / r)
    return sum(precisions) / min(k, len(relevant))


def test_criterion_3_retrieval(acceptance):
    rng = np.random.default_rng(3)
    ids = [f"item{k:04d}" for k in range(1000)]
    vecs = rng.normal(size=(1000, 32))
    index = build_index(ids, vecs)
    worst, order_ok = 0.0, True
    for qn in range(100):
        q = rng.normal(size=32)
        rl = query(index, q, k=50)
        ref = exhaustive_ranking(ids, vecs, q, 50)
        order_ok &= rl.items == [i for _, i in ref]
        worst = max(worst, float(np.max(np.abs(rl.distances - [d for d, _ in ref]))))
    ap_ok = True
    for n in range(50):
        length = 1 + n % 12
        ranked = [f"x{j}" for j in rng.permutation(20)[:length]]
        relevant = {f"x{j}" for j in rng.choice(20, size=1 + n % 6, replace=False)}
        k = 1 + (n * 7) % 15
        ap_ok &= average_precision_at_k(ranked, relevant, k) == _ap_from_scratch(ranked, relevant, k)
    ok = order_ok and worst <= 1e-12 and ap_ok
    acceptance.record(3, ok, f"order match {order_ok}, max distance gap {worst:.1e}, 50 AP lists exact {ap_ok}")
    assert ok


def test_criterion_4_spot_values(acceptance):
    ct = common_track_ratio({1, 2, 3, 4}, {3, 4, 5, 6, 7, 8})
    mo = mesh_overlap_ratio(set(range(10)), set(range(5, 25)))
    branch = (combining_overlap(0.25, 0.4), combining_overlap(0.1, 0.4), combining_overlap(0.2, 0.4),
              combining_overlap(0.0, 0.0))
    ok = round(ct, 5) == 0.40825 and round(mo, 5) == 0.35355 and branch == (1.0, 0.4, 1.0, 0.0)
    acceptance.record(4, ok, f"ct {ct:.5f}, mo {mo:.5f}, co branches {branch}")
    assert ok


def test_criterion_5_constants(acceptance):
    loss, sched, th = LossConfig(), MarginSchedule(), ThresholdConfig()
    got = dict(beta=loss.beta, lam=loss.lam, lambda1=loss.lambda1, lambda2=loss.lambda2,
               margins=(sched.alpha_easy, sched.alpha_weak, sched.alpha_hard), t_sfm=th.t_sfm,
               strong=(th.t_s1, th.t_s2), weak=(th.t_w1, th.t_w2), t_pos=th.t_pos)
    want = dict(beta=0.1, lam=0.5, lambda1=1.0, lambda2=1.0, margins=(1.0, 0.5, 0.5), t_sfm=0.2,
                strong=(0.5, 1.0), weak=(0.05, 0.2), t_pos=0.5)
    ok = got == want
    acceptance.record(5, ok, "defaults match" if ok else f"got {got}")
    assert ok


def test_criterion_6_anchor_swap_dominance(acceptance):
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(10_000):
        a, p, n = rng.normal(size=(3, 8))
        alpha = rng.uniform(0.1, 2.0)
        if anchor_swap_loss(a, p, n, alpha).value < triplet_loss(a, p, n, alpha).value:
            violations += 1
    ok = violations == 0
    acceptance.record(6, ok, f"{violations} violations in 10000 triplets")
    assert ok


def _prmac_benchmark(b, kind="sphere", spread=3.0, scales=(1, 2)):
    """mAP@10 of R-MAC and PR-MAC over four scenes sharing one index."""
    scenes = [generate_scene(SceneSpec(seed=1000 + b * 4 + s, mesh_kind=kind, altitude_spread=spread))
              for s in range(4)]
    grid = rmac_regions(16, 16, scales)
    ids, glob, reg, gt = [], [], {}, {}
    for sc in scenes:
        rel = brute_force_ground_truth(sc, 0.5)
        for i in sc.image_ids:
            item = sc.item_id(i)
            ids.append(item)
            glob.append(rmac(sc.features[i], grid))
            reg[item] = regional_vectors(sc.features[i], grid)
            gt[item] = {sc.item_id(j) for j in rel[i]}
    index = build_index(ids, glob, reg)
    r = mean_ap_at_k([query(index, k=10, query_id=q) for q in ids], gt, 10).mean_ap
    p = mean_ap_at_k([prmac_ranking(index, q, 10) for q in ids], gt, 10).mean_ap
    return r, p


@pytest.mark.slow
def test_criterion_7_prmac_direction(acceptance):
    t0 = time.perf_counter()
    results = [_prmac_benchmark(b) for b in range(5)]
    elapsed = time.perf_counter() - t0
    r_mean = float(np.mean([r for r, _ in results]))
    p_mean = float(np.mean([p for _, p in results]))
    print(f"\nper benchmark (rmac, prmac) mAP@10: {[(round(r, 3), round(p, 3)) for r, p in results]}")
    ok = p_mean >= r_mean and elapsed < 300
    acceptance.record(7, ok, f"mean mAP@10 PR-MAC {p_mean:.3f} vs R-MAC {r_mean:.3f}, {elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def training_scenes():
    return [scene(s) for s in range(100, 108)]


@pytest.mark.slow
def test_criterion_8_training(acceptance, training_scenes):
    gains, times, curves = {}, {}, {}
    for seed in (1, 2, 3):
        t0 = time.perf_counter()
        cfg = TrainConfig(steps=5000, seed=seed)
        init = LinearEmbeddingModel.init(32, cfg.embed_dim, seed)
        res = train(training_scenes, cfg, init=init)
        before = evaluate_model(init, training_scenes, k=10).mean_ap
        after = evaluate_model(res.model, training_scenes, k=10).mean_ap
        times[seed] = time.perf_counter() - t0
        gains[seed] = after - before
        if seed == 1:
            curves["mtl"] = res.losses
    # MTL vs TL convergence is written out for inspection only
    tl = train(training_scenes, TrainConfig(steps=5000, seed=1, loss_kind="tl"),
               init=LinearEmbeddingModel.init(32, 32, 1))
    curves["tl"] = tl.losses
    from matchret.plotting import plot_loss_curves

    REPORTS.mkdir(exist_ok=True)
    plot_loss_curves(curves, REPORTS / "mtl_vs_tl_loss.png")
    for kind, c in curves.items():
        s = smoothed(c, 50)
        print(f"\n{kind}: smoothed loss start {s[0]:.4f} end {s[-1]:.4f}")
    ok = all(g >= 0.15 for g in gains.values()) and all(t < 300 for t in times.values())
    detail = ", ".join(f"seed {s}: +{g:.3f} in {times[s]:.0f}s" for s, g in gains.items())
    acceptance.record(8, ok, f"mAP@10 gain {detail}")
    assert ok


def test_criterion_9_rerank_consistency(acceptance):
    grid = rmac_regions(16, 16, (1, 2, 3))
    ids, glob, reg = [], [], {}
    for sc in (scene(0), scene(1)):
        for i in sc.image_ids:
            item = sc.item_id(i)
            ids.append(item)
            glob.append(rmac(sc.features[i], grid))
            reg[item] = regional_vectors(sc.features[i], grid)
    index = build_index(ids, glob, reg)
    same = True
    for q in ids:
        rl = query(index, k=len(ids), query_id=q)
        out = rerank_prc(index, rl, m=len(ids))
        ref = prmac_ranking(index, q)
        same &= out.items == ref.items and np.array_equal(out.distances, ref.distances)
    acceptance.record(9, same, f"{len(ids)} queries, full-shortlist rerank identical: {same}")
    assert same


def test_criterion_10_round_trips(acceptance, tmp_path):
    sc = scene(0)
    rng = np.random.default_rng(10)
    checks = {}
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    mio.write_scene(p1, sc.cameras, sc.mesh, sc.tracks)
    mio.write_scene(p2, *mio.read_scene(p1))
    checks["scene"] = p1.read_bytes() == p2.read_bytes()
    arrays = {"fmap": sc.features[0], "emb": rng.normal(size=(7, 5)).astype(np.float32),
              "lemb": rng.normal(size=(32, 16)).astype(np.float32)}
    io_pairs = {"fmap": (mio.write_fmap, mio.read_fmap), "emb": (mio.write_emb, mio.read_emb),
                "lemb": (mio.write_lemb, mio.read_lemb)}
    for name, (write, read) in io_pairs.items():
        a, b = tmp_path / f"a.{name}", tmp_path / f"b.{name}"
        write(a, arrays[name])
        write(b, read(a))
        checks[name] = a.read_bytes() == b.read_bytes() and read(a).tobytes() == arrays[name].tobytes()
    ok = all(checks.values())
    acceptance.record(10, ok, ", ".join(f"{k} {'ok' if v else 'differs'}" for k, v in checks.items()))
    assert ok


def test_ap_scratch_oracle_sanity():
    assert math.isclose(_ap_from_scratch(["a", "b", "c"], {"a", "c"}, 3), (1 + 2 / 3) / 2)
