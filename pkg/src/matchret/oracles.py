"""Brute-force reference computations used to cross-check the fast paths.

These deliberately avoid the per-triangle bounding-box rasterizer and the
incidence-matrix overlap code: visibility is recomputed sample by sample
against every triangle whose vertical extent reaches the sample row, and
overlap ratios with plain Python sets.
They share only the projection primitive with the code they check.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import DEPTH_EPSILON, CameraView, ThresholdConfig, TriangleMesh, project_point
from .errors import BehindCamera


def _project_all(camera: CameraView, mesh: TriangleMesh):
    uv = np.full((len(mesh.vertices), 2), np.nan)
    depth = np.empty(len(mesh.vertices))
    for k, p in enumerate(mesh.vertices):
        try:
            (u, v), d = project_point(camera, p, depth_epsilon=DEPTH_EPSILON)
            uv[k] = (u, v)
        except BehindCamera:
            q = camera.rotation @ p + camera.translation
            d = min(float(q[2]), DEPTH_EPSILON)
        depth[k] = d
    return uv, depth


def dense_owner_buffer(camera: CameraView, mesh: TriangleMesh, resolution):
    """Owner triangle per sample and per-triangle coverage, by exhaustive depth comparison."""
    rows, cols = resolution
    uv, depth = _project_all(camera, mesh)
    F = mesh.triangles
    T = len(F)
    usable = (depth[F] > DEPTH_EPSILON).all(axis=1)
    sx, sy = cols / camera.width, rows / camera.height
    X = uv[:, 0] * sx
    Y = uv[:, 1] * sy
    x0, x1, x2 = X[F[:, 0]], X[F[:, 1]], X[F[:, 2]]
    y0, y1, y2 = Y[F[:, 0]], Y[F[:, 1]], Y[F[:, 2]]
    z0, z1, z2 = depth[F[:, 0]], depth[F[:, 1]], depth[F[:, 2]]
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    usable &= ~(np.abs(area) < 1e-12)
    owner = np.full((rows, cols), -1, dtype=np.int64)
    coverage = np.zeros(T, dtype=np.int64)
    px = (np.arange(cols) + 0.5)[None, :, None]
    ylo = np.fmin(np.fmin(y0, y1), y2)
    yhi = np.fmax(np.fmax(y0, y1), y2)
    block = 16
    with np.errstate(invalid="ignore", divide="ignore"):
        for r0 in range(0, rows, block):
            r1 = min(r0 + block, rows)
            # only triangles whose vertical extent reaches this band of rows can cover it
            t = np.flatnonzero(usable & (yhi >= r0 + 0.5) & (ylo <= r1 - 0.5))
            if not len(t):
                continue
            py = (np.arange(r0, r1) + 0.5)[:, None, None]
            a0, a1, a2, b0, b1, b2 = x0[t], x1[t], x2[t], y0[t], y1[t], y2[t]
            ar = area[t]
            w0 = ((a2 - a1) * (py - b1) - (b2 - b1) * (px - a1)) / ar
            w1 = ((a0 - a2) * (py - b2) - (b0 - b2) * (px - a2)) / ar
            w2 = ((a1 - a0) * (py - b0) - (b1 - b0) * (px - a0)) / ar
            inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
            np.add.at(coverage, t, inside.sum(axis=(0, 1)))
            inv_z = np.where(inside, w0 * (1.0 / z0[t]) + w1 * (1.0 / z1[t]) + w2 * (1.0 / z2[t]), -np.inf)
            best = t[np.argmax(inv_z, axis=2)]
            hit = inside.any(axis=2)
            owner[r0:r1][hit] = best[hit]
    return owner, coverage


def brute_force_visibility(camera, mesh, resolution=(256, 256), tau_vis=0.5) -> frozenset:
    uv, depth = _project_all(camera, mesh)
    owner, coverage = dense_owner_buffer(camera, mesh, resolution)
    C = camera.center
    seen = set()
    for t, (a, b, c) in enumerate(mesh.triangles):
        if min(depth[a], depth[b], depth[c]) <= DEPTH_EPSILON:
            continue
        if not all(0 <= uv[v, 0] <= camera.width and 0 <= uv[v, 1] <= camera.height for v in (a, b, c)):
            continue
        va, vb, vc = mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]
        normal = np.cross(vb - va, vc - va)
        if float(normal @ ((va + vb + vc) / 3.0 - C)) >= 0.0:
            continue
        if coverage[t] == 0:
            continue
        won = int((owner == t).sum())
        if won >= tau_vis * coverage[t]:
            seen.add(t)
    return frozenset(seen)


def set_ratio(a, b) -> float:
    a, b = set(a), set(b)
    shared = len(a & b)
    return math.sqrt((shared / len(a)) * (shared / len(b)))


def brute_force_overlap(track_sets: dict, visibility: dict, cfg: ThresholdConfig = ThresholdConfig()):
    """``{(i, j): (ct, mo, co)}`` for every unordered pair ``i < j``."""
    ids = sorted(track_sets)
    out = {}
    for x in range(len(ids)):
        for y in range(x + 1, len(ids)):
            i, j = ids[x], ids[y]
            ct = set_ratio(track_sets[i], track_sets[j])
            mo = set_ratio(visibility[i], visibility[j])
            out[(i, j)] = (ct, mo, 1.0 if ct >= cfg.t_sfm else mo)
    return out


def exhaustive_ranking(ids, vectors, q, k, exclude=None):
    """O(N) scan with Python-level distance sums; ties by ascending id."""
    qn = math.sqrt(sum(float(x) ** 2 for x in q))
    qu = [float(x) / qn for x in q]
    scored = []
    for item, v in zip(ids, vectors):
        if item == exclude:
            continue
        vn = math.sqrt(sum(float(x) ** 2 for x in v))
        d = math.sqrt(sum((float(x) / vn - y) ** 2 for x, y in zip(v, qu)))
        scored.append((d, item))
    scored.sort()
    return scored[:k]
