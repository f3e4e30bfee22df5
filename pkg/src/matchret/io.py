"""Readers and writers for every on-disk format.

Text formats (one record per line, whitespace separated)::

    camera <id> fx fy cx cy w h r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2
    v x y z
    f i j k                                   (0-indexed vertices)
    track <track_id> <img_id> ...
    pair <i> <j> <ct> <mo> <co>               (overlap table, 6 decimals)
    vis <img_id> <tri> ...                    (visibility sets)
    <query_id> <item_id> <rank> <distance>    (rank lists, 6 decimals)
    <step> <loss> <lr>                        (loss history)

Binary formats are little-endian with a 4-byte magic: ``FMAP`` (u32 H, W, C
then f32 in (h, w, c) order), ``EMB1`` (u32 count, dim then f32 rows) and
``LEMB`` (u32 C, d then f32 row-major weights).

Scene geometry floats are written with ``repr`` so text round-trips are
lossless.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError
from .geometry import CameraView, OverlapMask, OverlapTable, TriangleMesh

# ---------------------------------------------------------------------------
# scene text
# ---------------------------------------------------------------------------


def _f(x) -> str:
    return repr(float(x))


def format_scene(cameras: dict, mesh: TriangleMesh, tracks: dict) -> str:
    lines = []
    for cid in sorted(cameras):
        c = cameras[cid]
        fields = [*c.focal, *c.principal]
        lines.append(
            " ".join(
                ["camera", str(cid)]
                + [_f(x) for x in fields]
                + [str(c.width), str(c.height)]
                + [_f(x) for x in c.rotation.ravel()]
                + [_f(x) for x in c.translation]
            )
        )
    for v in mesh.vertices:
        lines.append("v " + " ".join(_f(x) for x in v))
    for t in mesh.triangles:
        lines.append("f " + " ".join(str(int(i)) for i in t))
    for tid in sorted(tracks):
        lines.append("track " + " ".join(str(x) for x in (tid, *tracks[tid])))
    return "\n".join(lines) + "\n"


def parse_scene(text: str):
    cameras, verts, faces, tracks = {}, [], [], {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "camera":
                if len(tok) != 20:
                    raise FormatError(f"line {n}: camera needs 19 fields, got {len(tok) - 1}")
                vals = [float(x) for x in tok[2:]]
                cameras[int(tok[1])] = CameraView(
                    (vals[0], vals[1]), (vals[2], vals[3]),
                    np.array(vals[6:15]).reshape(3, 3), np.array(vals[15:18]),
                    (int(tok[6]), int(tok[7])),
                )
            elif tok[0] == "v":
                verts.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                faces.append([int(x) for x in tok[1:4]])
            elif tok[0] == "track":
                tracks[int(tok[1])] = tuple(int(x) for x in tok[2:])
            else:
                raise FormatError(f"line {n}: unknown record {tok[0]!r}")
        except (ValueError, IndexError) as err:
            if isinstance(err, FormatError):
                raise
            raise FormatError(f"line {n}: {err}") from err
    mesh = TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))
    return cameras, mesh, tracks


def write_scene(path, cameras, mesh, tracks) -> None:
    Path(path).write_text(format_scene(cameras, mesh, tracks))


def read_scene(path):
    return parse_scene(Path(path).read_text())


# ---------------------------------------------------------------------------
# overlap / visibility / masks
# ---------------------------------------------------------------------------


def format_overlap(table: OverlapTable) -> str:
    return "".join(
        f"pair {r.i} {r.j} {r.ct:.6f} {r.mo:.6f} {r.co:.6f}\n" for r in table.records()
    )


def write_overlap(path, table: OverlapTable) -> None:
    Path(path).write_text(format_overlap(table))


def read_overlap(path, scene_id: str = "") -> OverlapTable:
    """Rebuild a full symmetric table (diagonal = 1) from ``pair`` lines."""
    rows = []
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = raw.split()
        if not tok:
            continue
        if tok[0] != "pair" or len(tok) != 6:
            raise FormatError(f"{path}:{n}: expected 'pair i j ct mo co'")
        rows.append((int(tok[1]), int(tok[2]), float(tok[3]), float(tok[4]), float(tok[5])))
    ids = sorted({r[0] for r in rows} | {r[1] for r in rows})
    pos = {i: k for k, i in enumerate(ids)}
    mats = [np.eye(len(ids)) for _ in range(3)]
    for i, j, *vals in rows:
        for m, v in zip(mats, vals):
            m[pos[i], pos[j]] = m[pos[j], pos[i]] = v
    return OverlapTable(ids, *mats, scene_id=scene_id)


def write_visibility(path, visibility: dict) -> None:
    Path(path).write_text(
        "".join(f"vis {i} " + " ".join(str(t) for t in sorted(visibility[i])) + "\n" for i in sorted(visibility))
    )


def read_visibility(path) -> dict:
    out = {}
    for raw in Path(path).read_text().splitlines():
        tok = raw.split()
        if tok:
            if tok[0] != "vis":
                raise FormatError(f"{path}: expected 'vis' record")
            out[int(tok[1])] = frozenset(int(t) for t in tok[2:])
    return out


def format_mask(mask: OverlapMask) -> str:
    mh, mw = mask.resolution
    return f"mask {mh} {mw}\n" + "".join("".join(str(int(x)) for x in row) + "\n" for row in mask.grid)


def write_mask_pair(path, masks) -> None:
    Path(path).write_text("".join(format_mask(m) for m in masks))


def read_mask_pair(path):
    lines = Path(path).read_text().splitlines()
    masks, k = [], 0
    while k < len(lines):
        head = lines[k].split()
        if not head:
            k += 1
            continue
        if head[0] != "mask":
            raise FormatError(f"{path}: expected 'mask mh mw'")
        mh, mw = int(head[1]), int(head[2])
        rows = lines[k + 1 : k + 1 + mh]
        grid = np.array([[int(ch) for ch in row.strip()] for row in rows], dtype=np.uint8).reshape(mh, mw)
        masks.append(OverlapMask(grid))
        k += 1 + mh
    return tuple(masks)


# ---------------------------------------------------------------------------
# binaries
# ---------------------------------------------------------------------------


def _read_header(data: bytes, magic: bytes, n_fields: int, path):
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    end = 4 + 4 * n_fields
    if len(data) < end:
        raise FormatError(f"{path}: truncated header")
    return struct.unpack("<" + "I" * n_fields, data[4:end]), end


def _payload(data, offset, count, path):
    body = np.frombuffer(data, dtype="<f4", offset=offset)
    if body.size != count:
        raise FormatError(f"{path}: expected {count} floats, found {body.size}")
    return body.astype(np.float32)


def write_fmap(path, fmap) -> None:
    a = np.ascontiguousarray(fmap, dtype="<f4")
    if a.ndim != 3:
        raise ValueError("feature map must be (H, W, C)")
    Path(path).write_bytes(b"FMAP" + struct.pack("<III", *a.shape) + a.tobytes())


def read_fmap(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (h, w, c), off = _read_header(data, b"FMAP", 3, path)
    return _payload(data, off, h * w * c, path).reshape(h, w, c)


def write_emb(path, vectors) -> None:
    a = np.ascontiguousarray(vectors, dtype="<f4")
    if a.ndim != 2:
        raise ValueError("embeddings must be (count, dim)")
    Path(path).write_bytes(b"EMB1" + struct.pack("<II", *a.shape) + a.tobytes())


def read_emb(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (n, d), off = _read_header(data, b"EMB1", 2, path)
    return _payload(data, off, n * d, path).reshape(n, d)


def write_lemb(path, weights) -> None:
    a = np.ascontiguousarray(weights, dtype="<f4")
    Path(path).write_bytes(b"LEMB" + struct.pack("<II", *a.shape) + a.tobytes())


def read_lemb(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (c, d), off = _read_header(data, b"LEMB", 2, path)
    return _payload(data, off, c * d, path).reshape(c, d)


def write_ids(path, ids) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids))


def read_ids(path) -> list[str]:
    return [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# rank lists, histories, manifests
# ---------------------------------------------------------------------------


def format_rank_lists(rank_lists) -> str:
    out = []
    for rl in rank_lists:
        for r, (item, d) in enumerate(rl, start=1):
            out.append(f"{rl.query_id} {item} {r} {float(d):.6f}\n")
    return "".join(out)


def write_rank_lists(path, rank_lists) -> None:
    Path(path).write_text(format_rank_lists(rank_lists))


def read_rank_lists(path):
    from .retrieval import RankList

    grouped: dict = {}
    for n, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        tok = raw.split()
        if not tok:
            continue
        if len(tok) != 4:
            raise FormatError(f"{path}:{n}: expected 'query_id item_id rank distance'")
        grouped.setdefault(tok[0], []).append((int(tok[2]), tok[1], float(tok[3])))
    lists = []
    for q, rows in grouped.items():
        rows.sort()
        lists.append(RankList(q, [r[1] for r in rows], np.array([r[2] for r in rows])))
    return lists


def write_history(path, history) -> None:
    Path(path).write_text("".join(f"{step} {loss:.8f} {lr:.8g}\n" for step, loss, lr in history))


def read_history(path):
    out = []
    for raw in Path(path).read_text().splitlines():
        tok = raw.split()
        if tok:
            out.append((int(tok[0]), float(tok[1]), float(tok[2])))
    return out


def _jsonable(x):
    if is_dataclass(x):
        return {k: _jsonable(v) for k, v in asdict(x).items()}
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Path):
        return str(x)
    if isinstance(x, np.generic):
        return x.item()
    return x


def write_manifest(path, command: str, config: dict, inputs, outputs, seed=None) -> dict:
    """Run manifest next to an artifact; contains no timestamps so reruns match byte for byte."""
    manifest = {
        "command": command,
        "config": _jsonable(config),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
