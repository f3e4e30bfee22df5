"""Global and regional pooling of ``(H, W, C)`` feature maps.

MAC / SPoC / masked MAC produce one unit vector per map. R-MAC sums unit
regional MAC vectors over a multi-scale square grid; PR-MAC keeps the
regional vectors and compares images region by region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyMask, EmptySet, MaskShapeMismatch, RankDeficient, ZeroVector

WHITEN_EPS = 1e-8


def as_feature_map(fmap) -> np.ndarray:
    fmap = np.asarray(fmap, dtype=np.float64)
    if fmap.ndim != 3 or min(fmap.shape) < 1:
        raise ValueError(f"feature map must have shape (H, W, C), got {fmap.shape}")
    if not np.isfinite(fmap).all():
        raise ValueError("feature map contains non-finite values")
    return fmap


def l2_normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / n


def check_mask(fmap: np.ndarray, mask) -> np.ndarray:
    grid = np.asarray(getattr(mask, "grid", mask))
    if grid.shape != fmap.shape[:2]:
        raise MaskShapeMismatch(f"mask shape {grid.shape} does not match map spatial shape {fmap.shape[:2]}")
    grid = grid.astype(bool)
    if not grid.any():
        raise EmptyMask("mask selects no position")
    return grid


def max_pool(act: np.ndarray, mask: np.ndarray | None = None):
    """Per-channel spatial max of an ``(H, W, D)`` array.

    Returns ``(values, flat_positions)``; positions index the flattened
    ``H*W`` axis so the caller can route gradients back. Ties resolve to the
    first position in row-major order.
    """
    flat = act.reshape(-1, act.shape[-1])
    if mask is not None:
        keep = np.flatnonzero(mask.reshape(-1))
        sub = flat[keep]
        arg = keep[np.argmax(sub, axis=0)]
    else:
        arg = np.argmax(flat, axis=0)
    return flat[arg, np.arange(flat.shape[1])], arg


def max_pool_backward(grad: np.ndarray, arg: np.ndarray, shape) -> np.ndarray:
    out = np.zeros((shape[0] * shape[1], shape[2]))
    out[arg, np.arange(shape[2])] = grad
    return out.reshape(shape)


def mac(fmap) -> np.ndarray:
    fmap = as_feature_map(fmap)
    return l2_normalize(fmap.max(axis=(0, 1)))


def spoc(fmap) -> np.ndarray:
    fmap = as_feature_map(fmap)
    return l2_normalize(fmap.sum(axis=(0, 1)))


def masked_mac(fmap, mask) -> np.ndarray:
    fmap = as_feature_map(fmap)
    grid = check_mask(fmap, mask)
    return l2_normalize(fmap[grid].max(axis=0))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------


class Region(NamedTuple):
    x: int
    y: int
    width: int
    height: int

    @property
    def side(self) -> int:
        return min(self.width, self.height)


@dataclass(frozen=True)
class RegionGrid:
    regions: tuple[Region, ...]
    scales: tuple[int, ...]
    shape: tuple[int, int]  # (H, W) the grid was built for

    def __len__(self):
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def rmac_regions(h: int, w: int, scales: Sequence[int] = (1, 2)) -> RegionGrid:
    """Square regions per scale, ``s*s`` of them at scale ``s``.

    Scale 1 is the whole map. For ``s > 1`` the side is
    ``round(2 * min(h, w) / (s + 1))`` and corners are spread evenly so the
    outermost squares touch the borders.
    """
    if not scales:
        raise ValueError("need at least one scale")
    regions = []
    for s in scales:
        if s < 1:
            raise ValueError(f"scale must be >= 1, got {s}")
        if s == 1:
            regions.append(Region(0, 0, w, h))
            continue
        side = max(1, _round_half_up(2 * min(h, w) / (s + 1)))
        xs = [_round_half_up(k * (w - side) / (s - 1)) for k in range(s)]
        ys = [_round_half_up(k * (h - side) / (s - 1)) for k in range(s)]
        for y in ys:
            for x in xs:
                regions.append(Region(x, y, side, side))
    return RegionGrid(tuple(regions), tuple(scales), (h, w))


@dataclass
class RegionalVectorSet:
    regions: list[Region]
    vectors: np.ndarray  # (n, d), unit rows
    dropped: int = 0

    def __len__(self):
        return len(self.vectors)


@dataclass(frozen=True, eq=False)
class WhiteningModel:
    mean: np.ndarray  # (D,)
    projection: np.ndarray  # (d, D), orthonormal rows
    eigenvalues: np.ndarray  # (d,)
    eps: float = WHITEN_EPS

    @property
    def scales(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.eigenvalues + self.eps)

    @property
    def dim(self) -> int:
        return self.projection.shape[0]


def fit_whitening(samples, d: int, eps: float = WHITEN_EPS) -> WhiteningModel:
    """PCA whitening learned from ``samples`` (rows), keeping the top ``d`` axes."""
    X = np.asarray(samples, dtype=np.float64)
    n, dim = X.shape
    if d > dim:
        raise ValueError(f"target dimension {d} exceeds input dimension {dim}")
    if n <= d:
        raise ValueError(f"need more than {d} samples, got {n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if (evals[:d] > eps).sum() < d:
        raise RankDeficient(f"only {(evals > eps).sum()} eigenvalues above {eps}, need {d}")
    return WhiteningModel(mean, evecs[:, :d].T.copy(), evals[:d].copy(), eps)


def apply_whitening(model: WhiteningModel, v, normalize: bool = True) -> np.ndarray:
    """Whiten a vector or a stack of row vectors."""
    v = np.asarray(v, dtype=np.float64)
    out = ((v - model.mean) @ model.projection.T) * model.scales
    if not normalize:
        return out
    if out.ndim == 1:
        return l2_normalize(out)
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ZeroVector("whitened vector is zero")
    return out / norms


def regional_vectors(fmap, grid: RegionGrid, whitening: WhiteningModel | None = None) -> RegionalVectorSet:
    """Unit MAC vector per region; all-zero regions are skipped and counted in ``dropped``."""
    fmap = as_feature_map(fmap)
    kept, vecs = [], []
    for r in grid:
        if r.y + r.height > fmap.shape[0] or r.x + r.width > fmap.shape[1]:
            raise ValueError(f"region {r} exceeds map of shape {fmap.shape[:2]}")
        m = fmap[r.y : r.y + r.height, r.x : r.x + r.width].max(axis=(0, 1))
        n = np.linalg.norm(m)
        if n == 0.0:
            continue
        kept.append(r)
        vecs.append(m / n)
    dim = whitening.dim if whitening is not None else fmap.shape[2]
    vectors = np.array(vecs).reshape(-1, fmap.shape[2])
    if whitening is not None and len(vectors):
        vectors = apply_whitening(whitening, vectors)
    return RegionalVectorSet(kept, vectors.reshape(-1, dim), dropped=len(grid) - len(kept))


def rmac(fmap, grid: RegionGrid, whitening: WhiteningModel | None = None) -> np.ndarray:
    rv = regional_vectors(fmap, grid, whitening)
    if len(rv) == 0:
        raise ZeroVector("every region of the map is zero")
    return l2_normalize(rv.vectors.sum(axis=0))


def _vectors(s) -> np.ndarray:
    v = np.asarray(getattr(s, "vectors", s), dtype=np.float64)
    if v.ndim == 1:
        v = v[None, :]
    if len(v) == 0:
        raise EmptySet("regional vector set is empty")
    return v


def per_region_minima(q, t) -> np.ndarray:
    """Distance from each query region to its nearest target region."""
    Q, T = _vectors(q), _vectors(t)
    d = np.linalg.norm(Q[:, None, :] - T[None, :, :], axis=2)
    return d.min(axis=1)


def prmac_distance(q, t) -> float:
    """Sum of per-query-region nearest distances; not symmetric in ``q``/``t``."""
    return float(abs(per_region_minima(q, t).sum()))


def aml_distance(q, t, reduce: str = "max") -> float:
    """Per-region minima reduced by ``max`` (default) or ``min``."""
    m = per_region_minima(q, t)
    if reduce == "max":
        return float(m.max())
    if reduce == "min":
        return float(m.min())
    raise ValueError(f"reduce must be 'max' or 'min', got {reduce!r}")
