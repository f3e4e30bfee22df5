"""Triplet, anchor-swap, mask-triplet and batched losses with analytic gradients.

Distances are always taken between L2-normalized vectors and gradients flow
through the normalization. At a hinge kink the subgradient 0 is used; at a
zero distance the distance gradient is 0.

All kernels funnel into :func:`_hinge_terms`, which works on pooled (not yet
normalized) vectors. Map-level entry points add max-pooling in front and
route gradients back to the argmax positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .aggregation import as_feature_map, check_mask, max_pool, max_pool_backward
from .errors import BatchTooSmall, KinkProximity, ZeroVector
from .sampling import MarginSchedule, TripletBatch

KINK_TOLERANCE = 1e-6


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    beta: float = 0.1
    lam: float = 0.5
    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.beta < 0 or self.lam < 0 or self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("beta, lam, lambda1 and lambda2 must be non-negative")


@dataclass
class LossResult:
    value: float
    grads: tuple
    hinge_args: np.ndarray  # signed distances to every kink the value depends on

    def __iter__(self):
        yield self.value
        yield self.grads


def _normalize_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if (norms == 0).any():
        raise ZeroVector("zero embedding")
    return X / norms[:, None], norms


def _normalize_backward(U, norms, dU):
    return (dU - U * np.einsum("ij,ij->i", U, dU)[:, None]) / norms[:, None]


def embed_distance(f_i, f_j) -> float:
    U, _ = _normalize_rows(np.stack([np.asarray(f_i, float), np.asarray(f_j, float)]))
    return float(np.linalg.norm(U[0] - U[1]))


def _pairwise(U):
    return np.linalg.norm(U[:, None, :] - U[None, :, :], axis=2)


def _distance_backward(U, D, dD):
    """Gradient w.r.t. unit rows ``U`` given ``dL/dD`` for the full distance matrix."""
    with np.errstate(divide="ignore", invalid="ignore"):
        C = np.where(D > 0, dD / D, 0.0)
    C = C + C.T
    return C.sum(axis=1)[:, None] * U - C @ U


@dataclass
class _Terms:
    """Index arrays describing a set of triplet hinge terms over global rows."""

    a: np.ndarray
    p: np.ndarray
    n: np.ndarray
    alpha: np.ndarray
    weight: np.ndarray
    mask_pair: np.ndarray  # index into the masked-pair stack, -1 for none


def _hinge_terms(G, masked, terms: _Terms, beta=0.0, lam=1.0, swap=True):
    """Weighted sum of ``[D*+ - beta]_+ + lam [D+ + alpha - min(D-, D'-)]_+``.

    ``G`` holds raw global vectors ``(M, d)``, ``masked`` raw masked-pooled
    pairs ``(K, 2, d)``. Terms with ``mask_pair == -1`` have no mask part.
    Without ``swap`` the negative distance is the anchor-negative one only.
    Returns ``(value, dG, dmasked, hinge_args)``.
    """
    U, gn = _normalize_rows(G)
    D = _pairwise(U)
    a, p, n = terms.a, terms.p, terms.n
    d_pos = D[a, p]
    d_an = D[a, n]
    d_pn = D[p, n]
    use_an = (d_an <= d_pn) if swap else np.ones(len(a), dtype=bool)
    d_neg = np.where(use_an, d_an, d_pn)
    arg = d_pos + terms.alpha - d_neg
    active = arg > 0
    value = float(np.sum(terms.weight * lam * np.maximum(arg, 0.0)))
    hinge_args = [arg]
    if swap:
        hinge_args.append(d_an - d_pn)

    dD = np.zeros_like(D)
    c = np.where(active, terms.weight * lam, 0.0)
    np.add.at(dD, (a, p), c)
    neg_from = np.where(use_an, a, p)
    np.add.at(dD, (neg_from, n), -c)
    dG = _normalize_backward(U, gn, _distance_backward(U, D, dD))

    dmasked = None
    if masked is not None and len(masked):
        K = masked.shape[0]
        Um, mn = _normalize_rows(masked.reshape(2 * K, -1))
        Um = Um.reshape(K, 2, -1)
        diff = Um[:, 0] - Um[:, 1]
        d_star = np.linalg.norm(diff, axis=1)
        has = terms.mask_pair >= 0
        idx = terms.mask_pair[has]
        m_arg = d_star[idx] - beta
        hinge_args.append(m_arg)
        m_active = m_arg > 0
        value += float(np.sum(terms.weight[has] * np.maximum(m_arg, 0.0)))
        coef = np.zeros(K)
        np.add.at(coef, idx, np.where(m_active, terms.weight[has], 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(d_star[:, None] > 0, diff / d_star[:, None], 0.0) * coef[:, None]
        dUm = np.stack([g, -g], axis=1).reshape(2 * K, -1)
        dmasked = _normalize_backward(Um.reshape(2 * K, -1), mn, dUm).reshape(masked.shape)
    return value, dG, dmasked, np.concatenate(hinge_args)


def _single(a, p, n, alpha, beta=0.0, lam=1.0, swap=True, masked=None):
    G = np.stack([np.asarray(v, dtype=np.float64) for v in (a, p, n)])
    terms = _Terms(
        np.array([0]), np.array([1]), np.array([2]),
        np.array([float(alpha)]), np.array([1.0]),
        np.array([0 if masked is not None else -1]),
    )
    return _hinge_terms(G, masked, terms, beta=beta, lam=lam, swap=swap)


def triplet_loss(a, p, n, alpha: float = 1.0) -> LossResult:
    value, dG, _, hinge = _single(a, p, n, alpha, swap=False)
    return LossResult(value, tuple(dG), hinge)


def anchor_swap_loss(a, p, n, alpha: float = 1.0) -> LossResult:
    value, dG, _, hinge = _single(a, p, n, alpha, swap=True)
    return LossResult(value, tuple(dG), hinge)


def _pool_with_mask(fmap, mask):
    return max_pool(fmap, check_mask(fmap, mask))


def mask_triplet_loss(a_map, p_map, n_map, mask_a, mask_p, cfg: LossConfig = LossConfig()) -> LossResult:
    """Masked-positive term plus anchor-swap term, differentiated w.r.t. the three maps.

    The negative branch uses unmasked global MAC vectors.
    """
    maps = [as_feature_map(m) for m in (a_map, p_map, n_map)]
    pooled = [max_pool(m) for m in maps]
    ma, arg_ma = _pool_with_mask(maps[0], mask_a)
    mp, arg_mp = _pool_with_mask(maps[1], mask_p)
    masked = np.stack([ma, mp])[None]
    value, dG, dM, hinge = _single(
        *(v for v, _ in pooled), cfg.alpha, beta=cfg.beta, lam=cfg.lam, swap=True, masked=masked
    )
    grads = [max_pool_backward(dG[k], pooled[k][1], maps[k].shape) for k in range(3)]
    grads[0] += max_pool_backward(dM[0, 0], arg_ma, maps[0].shape)
    grads[1] += max_pool_backward(dM[0, 1], arg_mp, maps[1].shape)
    return LossResult(value, tuple(grads), hinge)


def batch_terms(n_b: int, cfg: LossConfig = LossConfig(), sched: MarginSchedule = MarginSchedule()) -> _Terms:
    """Index structure of the batched loss over rows ``k * n_b + i``.

    Masked pair ``i`` is (anchor_i, strong_i); pair ``n_b + i`` is (anchor_i, weak_i).
    """
    a, p, n, alpha, weight, mp = [], [], [], [], [], []
    if n_b >= 2:
        w = 1.0 / (3 * n_b * (n_b - 1))
        for i in range(n_b):
            for j in range(n_b):
                if j == i:
                    continue
                for k in range(3):
                    # easy: (anchor, strong, cross-scene negative)
                    a.append(i); p.append(n_b + i); n.append(k * n_b + j)
                    alpha.append(sched.alpha_easy); weight.append(w); mp.append(i)
                    # weak: (anchor, weak, cross-scene negative)
                    a.append(i); p.append(2 * n_b + i); n.append(k * n_b + j)
                    alpha.append(sched.alpha_weak); weight.append(cfg.lambda1 * w); mp.append(n_b + i)
    for i in range(n_b):
        # hard: (anchor, strong, weak)
        a.append(i); p.append(n_b + i); n.append(2 * n_b + i)
        alpha.append(sched.alpha_hard); weight.append(cfg.lambda2 / n_b); mp.append(i)
    return _Terms(
        np.array(a, dtype=np.int64), np.array(p, dtype=np.int64), np.array(n, dtype=np.int64),
        np.array(alpha, dtype=np.float64), np.array(weight, dtype=np.float64),
        np.array(mp, dtype=np.int64),
    )


def batched_loss_pooled(G, masked, n_b, cfg=LossConfig(), sched=MarginSchedule(), kind="mtl"):
    """Batched loss on pooled vectors.

    ``G``: ``(3 * n_b, d)`` rows anchor..., strong..., weak...;
    ``masked``: ``(2 * n_b, 2, d)`` strong pairs then weak pairs.
    ``kind="tl"`` swaps every mask-triplet term for a plain triplet term.
    """
    terms = batch_terms(n_b, cfg, sched)
    if kind == "mtl":
        return _hinge_terms(G, masked, terms, beta=cfg.beta, lam=cfg.lam, swap=True)
    if kind == "tl":
        terms.mask_pair[:] = -1
        value, dG, _, hinge = _hinge_terms(G, None, terms, lam=1.0, swap=False)
        return value, dG, np.zeros_like(masked), hinge
    raise ValueError(f"unknown loss kind {kind!r}")


def batched_loss(
    batch: TripletBatch | None,
    maps,
    cfg: LossConfig = LossConfig(),
    sched: MarginSchedule = MarginSchedule(),
    masks=None,
    require_cross_scene: bool = False,
) -> LossResult:
    """Batched mask-triplet loss over a ``(3, N_b, H, W, C)`` stack of maps.

    Masks come from ``batch`` or, if given, ``masks`` shaped
    ``(N_b, 2, 2, H, W)``: ``[i, 0]`` is the (anchor, strong) pair and
    ``[i, 1]`` the (anchor, weak) pair. With ``N_b == 1`` only the hard term
    survives unless ``require_cross_scene`` asks for an error instead.
    """
    maps = np.asarray(maps, dtype=np.float64)
    if maps.ndim != 5 or maps.shape[0] != 3:
        raise ValueError(f"maps must have shape (3, N_b, H, W, C), got {maps.shape}")
    n_b = maps.shape[1]
    if require_cross_scene and n_b < 2:
        raise BatchTooSmall("cross-scene terms need N_b >= 2")
    if masks is None:
        if batch is None:
            raise ValueError("need a batch or explicit masks")
        masks = [[[c.strong_masks[0], c.strong_masks[1]], [c.weak_masks[0], c.weak_masks[1]]]
                 for c in batch.columns]
    if len(masks) != n_b:
        raise ValueError("mask count does not match N_b")

    flat = maps.reshape(3 * n_b, *maps.shape[2:])
    pooled = [max_pool(m) for m in flat]
    G = np.stack([v for v, _ in pooled])
    masked_vals, masked_src = [], []
    for kind_idx, other in ((0, 1), (1, 2)):  # strong pairs, then weak pairs
        for i in range(n_b):
            grid_a = check_mask(flat[i], masks[i][kind_idx][0])
            grid_o = check_mask(flat[other * n_b + i], masks[i][kind_idx][1])
            va, arg_a = max_pool(flat[i], grid_a)
            vo, arg_o = max_pool(flat[other * n_b + i], grid_o)
            masked_vals.append(np.stack([va, vo]))
            masked_src.append(((i, arg_a), (other * n_b + i, arg_o)))
    masked = np.stack(masked_vals)
    value, dG, dM, hinge = batched_loss_pooled(G, masked, n_b, cfg, sched)
    grads = np.stack([max_pool_backward(dG[r], pooled[r][1], flat[r].shape) for r in range(3 * n_b)])
    for q, ((ra, arg_a), (ro, arg_o)) in enumerate(masked_src):
        grads[ra] += max_pool_backward(dM[q, 0], arg_a, flat[ra].shape)
        grads[ro] += max_pool_backward(dM[q, 1], arg_o, flat[ro].shape)
    return LossResult(value, (grads.reshape(maps.shape),), hinge)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def _rel_error(analytic, numeric) -> float:
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(
    loss_op: Callable[..., LossResult],
    inputs: Sequence,
    h: float = 1e-5,
    resample: Callable[[np.random.Generator], Sequence] | None = None,
    max_tries: int = 50,
    seed=None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_op(*inputs)`` must return a :class:`LossResult` whose ``grads``
    align with ``inputs``. If a hinge argument sits within
    ``KINK_TOLERANCE`` of zero the inputs are redrawn with ``resample``;
    without a resampler, or after ``max_tries`` draws, :class:`KinkProximity`
    is raised. The error of each input is ``max|a - n| / max(|a|, |n|)`` over
    that input's entries; the worst input is returned.
    """
    rng = np.random.default_rng(seed)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    for _ in range(max_tries):
        res = loss_op(*inputs)
        if res.hinge_args.size == 0 or np.abs(res.hinge_args).min() >= KINK_TOLERANCE:
            break
        if resample is None:
            raise KinkProximity("inputs sit on a hinge kink and no resampler was given")
        inputs = [np.array(x, dtype=np.float64) for x in resample(rng)]
    else:
        raise KinkProximity(f"no kink-free point found in {max_tries} draws")

    worst = 0.0
    for k, x in enumerate(inputs):
        numeric = np.zeros_like(x)
        it = np.nditer(x, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = x[idx]
            x[idx] = orig + h
            f_plus = loss_op(*inputs).value
            x[idx] = orig - h
            f_minus = loss_op(*inputs).value
            x[idx] = orig
            numeric[idx] = (f_plus - f_minus) / (2 * h)
        worst = max(worst, _rel_error(np.asarray(res.grads[k]), numeric))
    return worst
