"""Pinhole projection, triangle visibility and pairwise overlap measures.

Conventions
-----------
* Cameras map world points to the camera frame with ``q = R p + t``; the
  optical axis is +z and pixel coordinates are ``(u, v)`` with ``u`` along
  image width.
* The image plane spans the closed box ``[0, width] x [0, height]``.
* Raster grids of shape ``(rows, cols)`` are stretched over the full image;
  sample ``(r, c)`` sits at the cell centre ``(c + 0.5, r + 0.5)`` in raster
  units.
* Triangles are wound counter-clockwise when seen from their front side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import BehindCamera, EmptyTrackSet, EmptyVisibilitySet

DEPTH_EPSILON = 1e-9
DEFAULT_ZBUF_RESOLUTION = (256, 256)
DEFAULT_TAU_VIS = 0.5
MASK_SUPERSAMPLE = 4

_RASTER_AREA_EPS = 1e-12


@dataclass(frozen=True)
class ThresholdConfig:
    t_sfm: float = 0.2
    t_s1: float = 0.5
    t_s2: float = 1.0
    t_w1: float = 0.05
    t_w2: float = 0.2
    t_pos: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.t_w1 < self.t_w2 < self.t_s1 < self.t_s2 <= 1.0):
            raise ValueError(
                "bands must satisfy 0 <= t_w1 < t_w2 < t_s1 < t_s2 <= 1, got "
                f"weak=[{self.t_w1}, {self.t_w2}] strong=[{self.t_s1}, {self.t_s2}]"
            )


@dataclass(frozen=True, eq=False)
class CameraView:
    focal: tuple[float, float]
    principal: tuple[float, float]
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]  # (width, height)

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "focal", (float(self.focal[0]), float(self.focal[1])))
        object.__setattr__(self, "principal", (float(self.principal[0]), float(self.principal[1])))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if self.focal[0] <= 0 or self.focal[1] <= 0:
            raise ValueError("focal lengths must be positive")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ValueError("image size must be at least 1x1")

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    @property
    def center(self) -> np.ndarray:
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, CameraView):
            return NotImplemented
        return (
            self.focal == other.focal
            and self.principal == other.principal
            and self.image_size == other.image_size
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    @classmethod
    def look_at(cls, eye, target, up, focal, image_size) -> "CameraView":
        """Camera at ``eye`` looking towards ``target``; principal point at the image centre."""
        eye = np.asarray(eye, dtype=np.float64)
        z = np.asarray(target, dtype=np.float64) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(x) < 1e-12:
            raise ValueError("up vector is parallel to the viewing direction")
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        R = np.stack([x, y, z])
        # re-orthonormalize so the 1e-9 invariant survives accumulated rounding
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        t = -R @ eye
        w, h = image_size
        return cls((focal, focal), (w / 2.0, h / 2.0), R, t, (w, h))


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        F = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "triangles", F)
        if F.size and (F.min() < 0 or F.max() >= len(V)):
            raise ValueError("triangle index out of range")
        if F.size:
            a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
            area2 = np.linalg.norm(np.cross(b - a, c - a), axis=1)
            if (area2 <= 2e-12).any():
                bad = int(np.flatnonzero(area2 <= 2e-12)[0])
                raise ValueError(f"degenerate triangle {bad}")

    def __len__(self):
        return len(self.triangles)

    def __eq__(self, other):
        if not isinstance(other, TriangleMesh):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices) and np.array_equal(
            self.triangles, other.triangles
        )


@dataclass(frozen=True)
class OverlapRecord:
    i: int
    j: int
    ct: float
    mo: float
    co: float

    def swapped(self) -> "OverlapRecord":
        return OverlapRecord(self.j, self.i, self.ct, self.mo, self.co)


@dataclass(eq=False)
class OverlapMask:
    grid: np.ndarray  # (mh, mw) uint8

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.uint8)
        if self.grid.ndim != 2:
            raise ValueError("mask grid must be 2-D")
        if not np.isin(self.grid, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")

    @property
    def resolution(self) -> tuple[int, int]:
        return self.grid.shape

    def __eq__(self, other):
        return isinstance(other, OverlapMask) and np.array_equal(self.grid, other.grid)

    def any(self) -> bool:
        return bool(self.grid.any())


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------


def _to_camera_frame(camera: CameraView, points: np.ndarray) -> np.ndarray:
    # explicit multiply-adds (no BLAS) so every caller gets bit-identical results
    R, t = camera.rotation, camera.translation
    x, y, z = points[..., 0], points[..., 1], points[..., 2]
    return np.stack(
        [
            R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0],
            R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1],
            R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2],
        ],
        axis=-1,
    )


def project_points(camera: CameraView, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection without the depth check.

    Returns ``(uv, depth)``; ``uv`` rows for points at or behind the camera are
    meaningless and must be filtered by the caller via ``depth``.
    """
    q = _to_camera_frame(camera, np.asarray(points, dtype=np.float64))
    depth = q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = camera.focal[0] * q[..., 0] / depth + camera.principal[0]
        v = camera.focal[1] * q[..., 1] / depth + camera.principal[1]
    return np.stack([u, v], axis=-1), depth


def project_point(camera: CameraView, point, depth_epsilon: float = DEPTH_EPSILON):
    uv, depth = project_points(camera, np.asarray(point, dtype=np.float64).reshape(1, 3))
    d = float(depth[0])
    if d <= depth_epsilon:
        raise BehindCamera(f"point {tuple(np.ravel(point))} has camera depth {d:g}")
    return (float(uv[0, 0]), float(uv[0, 1])), d


# ---------------------------------------------------------------------------
# rasterization
# ---------------------------------------------------------------------------


def front_facing(camera: CameraView, mesh: TriangleMesh) -> np.ndarray:
    V, F = mesh.vertices, mesh.triangles
    a, b, c = V[F[:, 0]], V[F[:, 1]], V[F[:, 2]]
    normal = np.cross(b - a, c - a)
    view = (a + b + c) / 3.0 - camera.center
    return np.einsum("ij,ij->i", normal, view) < 0.0


def _raster_vertices(camera: CameraView, mesh: TriangleMesh, resolution):
    """Per-triangle raster-space vertex coords ``(T, 3, 2)`` and depths ``(T, 3)``."""
    uv, depth = project_points(camera, mesh.vertices)
    rows, cols = resolution
    sx = cols / camera.width
    sy = rows / camera.height
    xy = np.stack([uv[:, 0] * sx, uv[:, 1] * sy], axis=-1)
    return xy[mesh.triangles], depth[mesh.triangles], uv[mesh.triangles]


def _triangle_coverage(tri_xy, xs, ys):
    """Barycentric weights of sample points against one raster-space triangle.

    ``xs``/``ys`` broadcast against each other. Returns ``(w0, w1, w2)`` or
    ``None`` for a triangle with no raster area.
    """
    (x0, y0), (x1, y1), (x2, y2) = tri_xy
    area = (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0)
    if abs(area) < _RASTER_AREA_EPS:
        return None
    e0 = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
    e1 = (x0 - x2) * (ys - y2) - (y0 - y2) * (xs - x2)
    e2 = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
    return e0 / area, e1 / area, e2 / area


def render_triangle_ids(
    camera: CameraView,
    mesh: TriangleMesh,
    resolution=DEFAULT_ZBUF_RESOLUTION,
    depth_epsilon: float = DEPTH_EPSILON,
):
    """Z-buffer the mesh and return ``(owner, coverage)``.

    ``owner`` is an int array of shape ``resolution`` holding the index of the
    closest triangle at each sample (-1 where empty). ``coverage[t]`` counts
    the samples triangle ``t`` covers before the depth test. Every triangle
    with all three vertices in front of the camera takes part as an occluder,
    whatever its facing or image bounds. Depth ties go to the lower index.
    """
    rows, cols = resolution
    tri_xy, tri_z, _ = _raster_vertices(camera, mesh, resolution)
    owner = np.full((rows, cols), -1, dtype=np.int64)
    best = np.zeros((rows, cols))  # inverse depth; 0 means empty
    coverage = np.zeros(len(mesh), dtype=np.int64)
    in_front = (tri_z > depth_epsilon).all(axis=1)
    for t in np.flatnonzero(in_front):
        xy = tri_xy[t]
        c0 = max(int(math.floor(xy[:, 0].min() - 0.5)), 0)
        c1 = min(int(math.ceil(xy[:, 0].max() - 0.5)), cols - 1)
        r0 = max(int(math.floor(xy[:, 1].min() - 0.5)), 0)
        r1 = min(int(math.ceil(xy[:, 1].max() - 0.5)), rows - 1)
        if c0 > c1 or r0 > r1:
            continue
        xs = np.arange(c0, c1 + 1)[None, :] + 0.5
        ys = np.arange(r0, r1 + 1)[:, None] + 0.5
        w = _triangle_coverage(xy, xs, ys)
        if w is None:
            continue
        w0, w1, w2 = w
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        n = int(inside.sum())
        if n == 0:
            continue
        coverage[t] = n
        z0, z1, z2 = tri_z[t]
        inv_z = w0 * (1.0 / z0) + w1 * (1.0 / z1) + w2 * (1.0 / z2)
        win = inside & (inv_z > best[r0 : r1 + 1, c0 : c1 + 1])
        best[r0 : r1 + 1, c0 : c1 + 1][win] = inv_z[win]
        owner[r0 : r1 + 1, c0 : c1 + 1][win] = t
    return owner, coverage


def candidate_triangles(camera: CameraView, mesh: TriangleMesh, depth_epsilon=DEPTH_EPSILON):
    """Boolean mask of triangles passing the depth, bounds and facing rules."""
    uv, depth = project_points(camera, mesh.vertices)
    tri_depth = depth[mesh.triangles]
    tri_uv = uv[mesh.triangles]
    ok = (tri_depth > depth_epsilon).all(axis=1)
    with np.errstate(invalid="ignore"):
        in_bounds = (
            (tri_uv[..., 0] >= 0)
            & (tri_uv[..., 0] <= camera.width)
            & (tri_uv[..., 1] >= 0)
            & (tri_uv[..., 1] <= camera.height)
        ).all(axis=1)
    return ok & in_bounds & front_facing(camera, mesh)


def compute_visibility(
    camera: CameraView,
    mesh: TriangleMesh,
    zbuf_resolution=DEFAULT_ZBUF_RESOLUTION,
    tau_vis: float = DEFAULT_TAU_VIS,
    depth_epsilon: float = DEPTH_EPSILON,
) -> frozenset[int]:
    """Indices of triangles seen by ``camera``.

    A triangle is seen when all vertices are in front of the camera and
    inside the image, it faces the camera, and at least ``tau_vis`` of the
    z-buffer samples it covers survive the depth test. Triangles covering no
    sample centre at all are not seen.
    """
    if zbuf_resolution[0] < 1 or zbuf_resolution[1] < 1:
        raise ValueError("z-buffer resolution must be at least 1x1")
    if not 0.0 < tau_vis <= 1.0:
        raise ValueError("tau_vis must lie in (0, 1]")
    if len(mesh) == 0:
        return frozenset()
    cand = candidate_triangles(camera, mesh, depth_epsilon)
    if not cand.any():
        return frozenset()
    owner, coverage = render_triangle_ids(camera, mesh, zbuf_resolution, depth_epsilon)
    won = np.bincount(owner[owner >= 0], minlength=len(mesh))
    seen = cand & (coverage > 0) & (won >= tau_vis * coverage)
    return frozenset(int(t) for t in np.flatnonzero(seen))


# ---------------------------------------------------------------------------
# overlap measures
# ---------------------------------------------------------------------------


def _geometric_overlap(a: frozenset, b: frozenset) -> float:
    shared = len(a & b)
    return math.sqrt((shared / len(a)) * (shared / len(b)))


def common_track_ratio(p_i: Iterable, p_j: Iterable) -> float:
    a, b = frozenset(p_i), frozenset(p_j)
    if not a or not b:
        raise EmptyTrackSet("common track ratio needs two nonempty track sets")
    return _geometric_overlap(a, b)


def mesh_overlap_ratio(t_i: Iterable, t_j: Iterable) -> float:
    a, b = frozenset(t_i), frozenset(t_j)
    if not a or not b:
        raise EmptyVisibilitySet("mesh overlap ratio needs two nonempty visibility sets")
    return _geometric_overlap(a, b)


def combining_overlap(ct: float, mo: float, cfg: ThresholdConfig = ThresholdConfig()) -> float:
    return 1.0 if ct >= cfg.t_sfm else float(mo)


def _incidence(sets: Sequence[frozenset]) -> np.ndarray:
    universe = sorted(set().union(*sets)) if sets else []
    col = {x: k for k, x in enumerate(universe)}
    m = np.zeros((len(sets), len(universe)), dtype=np.int64)
    for r, s in enumerate(sets):
        m[r, [col[x] for x in s]] = 1
    return m


def _pairwise_geometric(sets: Sequence[frozenset]) -> np.ndarray:
    m = _incidence(sets)
    shared = (m @ m.T).astype(np.float64)
    sizes = m.sum(axis=1).astype(np.float64)
    return np.sqrt((shared / sizes[:, None]) * (shared / sizes[None, :]))


@dataclass
class OverlapTable:
    """Full pairwise overlap table of one scene, indexed by image position."""

    image_ids: list[int]
    ct: np.ndarray
    mo: np.ndarray
    co: np.ndarray
    scene_id: str = ""
    masks: dict = field(default_factory=dict)  # (i, j) positions -> (mask_i, mask_j)

    def __len__(self):
        return len(self.image_ids)

    def record(self, a: int, b: int) -> OverlapRecord:
        """Record for positions ``a`` and ``b``."""
        return OverlapRecord(
            self.image_ids[a], self.image_ids[b],
            float(self.ct[a, b]), float(self.mo[a, b]), float(self.co[a, b]),
        )

    def records(self) -> list[OverlapRecord]:
        n = len(self.image_ids)
        return [self.record(a, b) for a in range(n) for b in range(a + 1, n)]

    def mask_pair(self, a: int, b: int):
        if (a, b) in self.masks:
            return self.masks[(a, b)]
        if (b, a) in self.masks:
            m_b, m_a = self.masks[(b, a)]
            return m_a, m_b
        raise KeyError(f"no masks stored for pair ({a}, {b})")


def compute_overlap_table(
    image_ids: Sequence[int],
    tracks: Mapping[int, Iterable],
    visibility: Mapping[int, Iterable],
    cfg: ThresholdConfig = ThresholdConfig(),
    scene_id: str = "",
) -> OverlapTable:
    """CT, MO and CO for every image pair (diagonal included, always 1)."""
    p = [frozenset(tracks[i]) for i in image_ids]
    t = [frozenset(visibility[i]) for i in image_ids]
    for i, s in zip(image_ids, p):
        if not s:
            raise EmptyTrackSet(f"image {i} observes no tracks")
    for i, s in zip(image_ids, t):
        if not s:
            raise EmptyVisibilitySet(f"image {i} sees no triangles")
    ct = _pairwise_geometric(p)
    mo = _pairwise_geometric(t)
    co = np.where(ct >= cfg.t_sfm, 1.0, mo)
    return OverlapTable(list(image_ids), ct, mo, co, scene_id=scene_id)


# ---------------------------------------------------------------------------
# overlap masks
# ---------------------------------------------------------------------------


def rasterize_mask(camera: CameraView, mesh: TriangleMesh, triangles: Iterable[int], mask_resolution):
    """Binary coverage of ``triangles`` on an ``(mh, mw)`` grid, without depth test.

    Each cell is probed with a regular ``MASK_SUPERSAMPLE``^2 sample pattern;
    the cell holding each triangle's centroid is also set, so every listed
    triangle marks at least one cell when its centroid lies inside the image.
    """
    mh, mw = mask_resolution
    grid = np.zeros((mh, mw), dtype=np.uint8)
    tris = sorted(int(t) for t in triangles)
    if not tris:
        return OverlapMask(grid)
    s = MASK_SUPERSAMPLE
    offs = (np.arange(s) + 0.5) / s
    xs = (np.arange(mw)[:, None] + offs[None, :]).reshape(-1)[None, :]
    ys = (np.arange(mh)[:, None] + offs[None, :]).reshape(-1)[:, None]
    sub = TriangleMesh(mesh.vertices, mesh.triangles[tris])
    tri_xy, tri_z, _ = _raster_vertices(camera, sub, (mh, mw))
    for k in range(len(tris)):
        if not (tri_z[k] > DEPTH_EPSILON).all():
            continue
        w = _triangle_coverage(tri_xy[k], xs, ys)
        if w is not None:
            inside = (w[0] >= 0) & (w[1] >= 0) & (w[2] >= 0)
            if inside.any():
                grid |= inside.reshape(mh, s, mw, s).any(axis=(1, 3)).astype(np.uint8)
        cx, cy = tri_xy[k].mean(axis=0)
        if 0 <= cx <= mw and 0 <= cy <= mh:
            grid[min(int(cy), mh - 1), min(int(cx), mw - 1)] = 1
    return OverlapMask(grid)


def overlap_masks(cam_i, cam_j, mesh, t_i, t_j, mask_resolution):
    shared = frozenset(t_i) & frozenset(t_j)
    return (
        rasterize_mask(cam_i, mesh, shared, mask_resolution),
        rasterize_mask(cam_j, mesh, shared, mask_resolution),
    )
