"""Deterministic desk-scale scenes with known geometry, tracks and feature maps.

A scene is a triangle mesh (plane grid, sphere patch or block city), a set of
pinhole cameras placed so that pairwise overlaps fall into every band
(strong, weak, gap, zero), SfM-like tracks sampled on visible triangles, and
per-camera feature maps whose channels respond to the triangles seen through
each cell. Geometry overlap therefore induces feature similarity without any
learned network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleSpec
from .geometry import (
    CameraView,
    OverlapTable,
    ThresholdConfig,
    TriangleMesh,
    compute_overlap_table,
    compute_visibility,
    overlap_masks,
    render_triangle_ids,
)

MESH_KINDS = ("plane", "sphere", "city")
MIN_CAMERAS = 6
MAX_ATTEMPTS = 40


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    cameras: int = 12
    mesh_kind: str = "plane"
    triangles: int = 200
    tracks: int = 3000
    channels: int = 32
    map_size: tuple[int, int] = (16, 16)
    noise: float = 0.05
    image_size: tuple[int, int] = (320, 320)
    zbuf_resolution: tuple[int, int] = (256, 256)
    tau_vis: float = 0.5
    detect_prob: float = 0.6
    patches: int = 20
    channels_per_patch: int = 2
    altitude_spread: float = 1.0  # max/min ratio of camera distances to the surface
    noisy_channels: int = 8  # leading channels that carry only high-level noise
    noisy_level: float = 0.5

    def __post_init__(self):
        if self.cameras < 1 or self.triangles < 1 or self.tracks < 1 or self.channels < 1:
            raise ValueError("counts must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.mesh_kind not in MESH_KINDS:
            raise ValueError(f"mesh kind must be one of {MESH_KINDS}")
        if not 0 <= self.noisy_channels < self.channels:
            raise ValueError("noisy_channels must leave at least one informative channel")
        if min(self.map_size) < 1:
            raise ValueError("map size must be at least 1x1")

    @property
    def scene_id(self) -> str:
        return f"scene{self.seed:04d}"


@dataclass(eq=False)
class SyntheticScene:
    scene_id: str
    cameras: dict  # image id -> CameraView
    mesh: TriangleMesh
    tracks: dict  # track id -> sorted tuple of observing image ids
    visibility: dict  # image id -> frozenset of triangle ids
    features: dict  # image id -> (H, W, C) float32
    overlap: OverlapTable
    spec: SceneSpec | None = None
    hard_band_counts: dict = field(default_factory=dict)

    @property
    def image_ids(self) -> list[int]:
        return sorted(self.cameras)

    def track_sets(self) -> dict:
        """Per-image track sets P(i)."""
        out = {i: set() for i in self.cameras}
        for tid, obs in self.tracks.items():
            for i in obs:
                out[i].add(tid)
        return {i: frozenset(s) for i, s in out.items()}

    def item_id(self, image_id: int) -> str:
        return f"{self.scene_id}/{image_id}"


# ---------------------------------------------------------------------------
# meshes (counter-clockwise = outward / front)
# ---------------------------------------------------------------------------


def plane_mesh(n_triangles: int, size: float = 10.0) -> TriangleMesh:
    n = max(1, int(math.isqrt(max(n_triangles, 2) // 2)))
    step = size / n
    g = np.arange(n + 1) * step
    xx, yy = np.meshgrid(g, g)  # row = y, col = x
    verts = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)
    tris = []
    for r in range(n):
        for c in range(n):
            v00 = r * (n + 1) + c
            v01, v10, v11 = v00 + 1, v00 + n + 1, v00 + n + 2
            tris.append((v00, v01, v11))
            tris.append((v00, v11, v10))
    return TriangleMesh(verts, np.array(tris))


def sphere_mesh(n_triangles: int, radius: float = 5.0, max_polar: float = math.radians(70)) -> TriangleMesh:
    """Spherical cap around +z; a fan at the pole, quads further out."""
    rows = max(2, int(math.isqrt(max(n_triangles, 8) // 4)))
    cols = max(3, n_triangles // (2 * rows - 1))
    while cols * (2 * rows - 1) > n_triangles and cols > 3:
        cols -= 1
    verts = [(0.0, 0.0, radius)]
    for r in range(1, rows + 1):
        th = max_polar * r / rows
        for c in range(cols):
            ph = 2 * math.pi * c / cols
            verts.append((radius * math.sin(th) * math.cos(ph), radius * math.sin(th) * math.sin(ph), radius * math.cos(th)))

    def vid(r, c):
        return 1 + (r - 1) * cols + (c % cols)

    tris = [(0, vid(1, c), vid(1, c + 1)) for c in range(cols)]
    for r in range(1, rows):
        for c in range(cols):
            a, b = vid(r, c), vid(r, c + 1)
            d, e = vid(r + 1, c), vid(r + 1, c + 1)
            tris.append((a, d, e))
            tris.append((a, e, b))
    return TriangleMesh(np.array(verts), np.array(tris))


def _box(origin, size, k):
    """Closed box with each face split into k x k quads, outward winding."""
    ox, oy, oz = origin
    sx, sy, sz = size
    verts, tris = [], []

    def face(p0, du, dv):
        base = len(verts)
        for i in range(k + 1):
            for j in range(k + 1):
                verts.append(tuple(np.add(np.add(p0, np.multiply(du, i / k)), np.multiply(dv, j / k))))
        for i in range(k):
            for j in range(k):
                a = base + i * (k + 1) + j
                b, c, d = a + k + 1, a + k + 2, a + 1
                tris.append((a, b, c))
                tris.append((a, c, d))

    # du x dv points outward for every face
    face((ox, oy, oz), (0, sy, 0), (sx, 0, 0))  # bottom (-z)
    face((ox, oy, oz + sz), (sx, 0, 0), (0, sy, 0))  # top (+z)
    face((ox, oy, oz), (sx, 0, 0), (0, 0, sz))  # front (-y)
    face((ox, oy + sy, oz), (0, 0, sz), (sx, 0, 0))  # back (+y)
    face((ox, oy, oz), (0, 0, sz), (0, sy, 0))  # left (-x)
    face((ox + sx, oy, oz), (0, sy, 0), (0, 0, sz))  # right (+x)
    return verts, tris


def city_mesh(n_triangles: int, rng: np.random.Generator) -> TriangleMesh:
    """Four blocks on a 2x2 layout with varied heights."""
    k = max(1, int(math.isqrt(max(n_triangles, 48) // 48)))
    verts, tris = [], []
    for bx in range(2):
        for by in range(2):
            h = float(rng.uniform(2.0, 4.0))
            v, t = _box((bx * 3.0 - 2.5, by * 3.0 - 2.5, 0.0), (2.0, 2.0, h), k)
            off = len(verts)
            verts.extend(v)
            tris.extend((a + off, b + off, c + off) for a, b, c in t)
    return TriangleMesh(np.array(verts), np.array(tris))


# ---------------------------------------------------------------------------
# camera layouts
# ---------------------------------------------------------------------------


def _altitude(spec: SceneSpec, rng) -> float:
    if spec.altitude_spread <= 1.0:
        return 1.0
    r = math.sqrt(spec.altitude_spread)
    return math.exp(rng.uniform(-math.log(r), math.log(r)))


def _plane_cameras(spec: SceneSpec, mesh: TriangleMesh, rng):
    size = mesh.vertices[:, 0].max()
    height, footprint = 6.0, size * 0.42
    w = spec.image_size[0]
    focal = w * height / footprint
    margin = footprint * 0.35
    cams = []
    for _ in range(spec.cameras):
        height = 6.0 * _altitude(spec, rng)
        x, y = rng.uniform(margin, size - margin, size=2)
        tilt = rng.normal(0.0, 0.3, size=2)
        yaw = rng.uniform(0, 2 * math.pi)
        up = (math.cos(yaw), math.sin(yaw), 0.0)
        cams.append(CameraView.look_at((x, y, height), (x + tilt[0], y + tilt[1], 0.0), up, focal, spec.image_size))
    return cams


def _sphere_cameras(spec: SceneSpec, mesh: TriangleMesh, rng):
    radius = float(np.linalg.norm(mesh.vertices[0]))
    dist = radius * 0.9
    w = spec.image_size[0]
    focal = w * dist / (radius * 0.9)
    cams = []
    for _ in range(spec.cameras):
        th = math.acos(rng.uniform(math.cos(math.radians(48)), 1.0))
        ph = rng.uniform(0, 2 * math.pi)
        n = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
        target = n * radius
        eye = n * (radius + dist * _altitude(spec, rng))
        up = np.cross(n, rng.normal(size=3))
        cams.append(CameraView.look_at(eye, target, up, focal, spec.image_size))
    return cams


def _city_cameras(spec: SceneSpec, mesh: TriangleMesh, rng):
    ring = 12.0
    w = spec.image_size[0]
    focal = w * 0.9
    cams = []
    for _ in range(spec.cameras):
        ang = rng.uniform(0, 2 * math.pi)
        rad = ring * _altitude(spec, rng)
        eye = (rad * math.cos(ang), rad * math.sin(ang), 1.5)
        look = ang + math.pi + rng.normal(0.0, 0.35)
        target = (eye[0] + math.cos(look), eye[1] + math.sin(look), 1.5)
        cams.append(CameraView.look_at(eye, target, (0.0, 0.0, 1.0), focal, spec.image_size))
    return cams


_LAYOUTS = {"plane": _plane_cameras, "sphere": _sphere_cameras, "city": _city_cameras}


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def triangle_codes(mesh: TriangleMesh, spec: SceneSpec, rng) -> np.ndarray:
    """Sparse non-negative code per triangle, shared channel support within a surface patch."""
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    n_patch = min(spec.patches, len(mesh))
    seeds = centroids[rng.choice(len(mesh), size=n_patch, replace=False)]
    patch = np.argmin(((centroids[:, None, :] - seeds[None]) ** 2).sum(axis=2), axis=1)
    informative = spec.channels - spec.noisy_channels
    k = min(spec.channels_per_patch, informative)
    support = spec.noisy_channels + np.stack(
        [rng.choice(informative, size=k, replace=False) for _ in range(n_patch)]
    )
    codes = np.zeros((len(mesh), spec.channels))
    weights = rng.uniform(0.5, 1.0, size=(len(mesh), k))
    codes[np.arange(len(mesh))[:, None], support[patch]] = weights
    return codes


def feature_map(camera, mesh, codes, spec: SceneSpec, rng) -> np.ndarray:
    """Cell response = mean code of the triangles visible through the cell, plus rectified noise."""
    H, W = spec.map_size
    owner, _ = render_triangle_ids(camera, mesh, spec.zbuf_resolution)
    zr, zc = owner.shape
    rows = (np.arange(zr) * H) // zr
    cols = (np.arange(zc) * W) // zc
    cell = rows[:, None] * W + cols[None, :]
    fmap = np.zeros((H * W, codes.shape[1]))
    hit = owner >= 0
    np.add.at(fmap, cell[hit], codes[owner[hit]])
    counts = np.bincount(cell.ravel(), minlength=H * W).astype(np.float64)
    fmap /= counts[:, None]
    sigma = np.full(codes.shape[1], spec.noise)
    sigma[: spec.noisy_channels] = spec.noisy_level
    fmap += rng.normal(0.0, 1.0, size=fmap.shape) * sigma
    return np.maximum(fmap, 0.0).reshape(H, W, -1).astype(np.float32)


# ---------------------------------------------------------------------------
# tracks and overlap
# ---------------------------------------------------------------------------


def sample_tracks(mesh, visibility: dict, n_tracks: int, detect_prob: float, rng) -> dict:
    """Tracks on random triangles, detected by each seeing camera with ``detect_prob``.

    Tracks observed by fewer than two cameras are discarded, as an SfM
    reconstruction would.
    """
    V, F = mesh.vertices, mesh.triangles
    area = 0.5 * np.linalg.norm(np.cross(V[F[:, 1]] - V[F[:, 0]], V[F[:, 2]] - V[F[:, 0]]), axis=1)
    tri = rng.choice(len(F), size=n_tracks, p=area / area.sum())
    images = sorted(visibility)
    seen = np.array([[t in visibility[i] for t in range(len(F))] for i in images])
    detect = rng.random((n_tracks, len(images))) < detect_prob
    obs = seen[:, tri].T & detect
    tracks = {}
    for row in obs:
        ids = tuple(images[k] for k in np.flatnonzero(row))
        if len(ids) >= 2:
            tracks[len(tracks)] = ids
    return tracks


def band_of(co: float, cfg: ThresholdConfig = ThresholdConfig()) -> str:
    if co == 0.0:
        return "zero"
    if cfg.t_s1 <= co <= cfg.t_s2:
        return "strong"
    if cfg.t_w1 <= co <= cfg.t_w2:
        return "weak"
    if cfg.t_w2 < co < cfg.t_s1:
        return "gap"
    return "low"


def band_counts(table: OverlapTable, cfg: ThresholdConfig = ThresholdConfig()) -> dict:
    counts = {"strong": 0, "weak": 0, "gap": 0, "zero": 0, "low": 0}
    n = len(table)
    for a in range(n):
        for b in range(a + 1, n):
            counts[band_of(float(table.co[a, b]), cfg)] += 1
    return counts


def attach_masks(table: OverlapTable, cameras: dict, mesh, visibility: dict, mask_resolution) -> None:
    """Store overlap masks for every pair sharing at least one triangle."""
    ids = table.image_ids
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            ti, tj = visibility[ids[a]], visibility[ids[b]]
            if ti & tj:
                table.masks[(a, b)] = overlap_masks(cameras[ids[a]], cameras[ids[b]], mesh, ti, tj, mask_resolution)


def _attempt(spec: SceneSpec, rng, cfg: ThresholdConfig):
    if spec.mesh_kind == "plane":
        mesh = plane_mesh(spec.triangles)
    elif spec.mesh_kind == "sphere":
        mesh = sphere_mesh(spec.triangles)
    else:
        mesh = city_mesh(spec.triangles, rng)
    cam_list = _LAYOUTS[spec.mesh_kind](spec, mesh, rng)
    cameras = dict(enumerate(cam_list))
    visibility = {i: compute_visibility(c, mesh, spec.zbuf_resolution, spec.tau_vis) for i, c in cameras.items()}
    if any(not v for v in visibility.values()):
        return None
    tracks = sample_tracks(mesh, visibility, spec.tracks, spec.detect_prob, rng)
    per_image = {i: set() for i in cameras}
    for tid, obs in tracks.items():
        for i in obs:
            per_image[i].add(tid)
    if any(not s for s in per_image.values()):
        return None
    table = compute_overlap_table(sorted(cameras), per_image, visibility, cfg, scene_id=spec.scene_id)
    counts = band_counts(table, cfg)
    if spec.cameras >= MIN_CAMERAS and not all(counts[b] for b in ("strong", "weak", "gap", "zero")):
        return None
    return mesh, cameras, visibility, tracks, table, counts


def generate_scene(spec: SceneSpec = SceneSpec(), cfg: ThresholdConfig = ThresholdConfig()) -> SyntheticScene:
    """Build a scene whose overlap table covers the strong, weak, gap and zero bands.

    Camera draws are repeated from a deterministic sub-seed sequence until
    every band is populated; :class:`InfeasibleSpec` if that never happens.
    """
    if spec.cameras < MIN_CAMERAS:
        raise InfeasibleSpec(f"covering all overlap bands needs at least {MIN_CAMERAS} cameras, got {spec.cameras}")
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, attempt])
        got = _attempt(spec, rng, cfg)
        if got is not None:
            break
    else:
        raise InfeasibleSpec(f"no camera layout covering all overlap bands after {MAX_ATTEMPTS} draws")
    mesh, cameras, visibility, tracks, table, counts = got
    attach_masks(table, cameras, mesh, visibility, spec.map_size)
    codes = triangle_codes(mesh, spec, rng)
    features = {i: feature_map(cameras[i], mesh, codes, spec, rng) for i in sorted(cameras)}
    return SyntheticScene(spec.scene_id, cameras, mesh, tracks, visibility, features, table, spec, counts)


def scene_from_parts(scene_id, cameras, mesh, tracks, features=None, cfg=ThresholdConfig(),
                     zbuf_resolution=(256, 256), tau_vis=0.5, mask_resolution=None) -> SyntheticScene:
    """Assemble a scene from given geometry, recomputing visibility, overlap and masks."""
    visibility = {i: compute_visibility(c, mesh, zbuf_resolution, tau_vis) for i, c in cameras.items()}
    per_image = {i: set() for i in cameras}
    for tid, obs in tracks.items():
        for i in obs:
            per_image[i].add(tid)
    table = compute_overlap_table(sorted(cameras), per_image, visibility, cfg, scene_id=scene_id)
    if mask_resolution is None and features:
        mask_resolution = next(iter(features.values())).shape[:2]
    if mask_resolution is not None:
        attach_masks(table, cameras, mesh, visibility, mask_resolution)
    return SyntheticScene(scene_id, dict(cameras), mesh, dict(tracks), visibility, dict(features or {}), table)


def brute_force_ground_truth(scene, t_pos: float = 0.5) -> dict:
    """Relevant images per image: same scene, co >= t_pos, self excluded."""
    table = scene.overlap if hasattr(scene, "overlap") else scene
    ids = table.image_ids
    return {
        ids[a]: {ids[b] for b in range(len(ids)) if b != a and table.co[a, b] >= t_pos}
        for a in range(len(ids))
    }
