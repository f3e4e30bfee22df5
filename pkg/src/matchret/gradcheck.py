"""Random non-kink instances for checking every loss kernel against finite differences."""

from __future__ import annotations

import numpy as np

from .losses import (LossConfig, LossResult, anchor_swap_loss, batched_loss, check_gradients,
                     mask_triplet_loss, triplet_loss)

KERNELS = ("triplet", "anchor_swap", "mask_triplet", "batched")


def separated_map(rng, shape=(3, 3, 4)) -> np.ndarray:
    """Feature map whose cells differ by at least 0.05 in every channel.

    Keeps max-pool argmaxes stable under a finite-difference step.
    """
    h, w, c = shape
    cells = h * w
    out = np.empty((cells, c))
    for ch in range(c):
        out[:, ch] = rng.permutation(cells) * 0.1 + rng.uniform(0.0, 0.05) + rng.uniform(-0.5, 0.5)
    return out.reshape(h, w, c)


def random_mask(rng, shape=(3, 3)) -> np.ndarray:
    m = rng.random(shape) < 0.5
    m.flat[rng.integers(m.size)] = True
    return m


def _vector_draw(rng, d=8):
    return [rng.normal(size=d) for _ in range(3)]


def _mtl_draw(rng, shape=(3, 3, 4)):
    return [separated_map(rng, shape) for _ in range(3)]


def _batched_draw(rng, n_b, shape=(3, 3, 4)):
    return [np.stack([np.stack([separated_map(rng, shape) for _ in range(n_b)]) for _ in range(3)])]


def instance(kernel: str, rng, cfg: LossConfig = LossConfig(), n_b: int = 2, shape=(3, 3, 4)):
    """``(loss_op, inputs, resample)`` for one random instance of ``kernel``."""
    if kernel == "triplet":
        alpha = rng.uniform(0.2, 1.0)
        return (lambda a, p, n: triplet_loss(a, p, n, alpha)), _vector_draw(rng), _vector_draw
    if kernel == "anchor_swap":
        alpha = rng.uniform(0.2, 1.0)
        return (lambda a, p, n: anchor_swap_loss(a, p, n, alpha)), _vector_draw(rng), _vector_draw
    if kernel == "mask_triplet":
        ma, mp = random_mask(rng, shape[:2]), random_mask(rng, shape[:2])

        def op(a, p, n) -> LossResult:
            return mask_triplet_loss(a, p, n, ma, mp, cfg)

        return op, _mtl_draw(rng, shape), lambda r: _mtl_draw(r, shape)
    if kernel == "batched":
        masks = [[[random_mask(rng, shape[:2]) for _ in range(2)] for _ in range(2)] for _ in range(n_b)]

        def op(maps) -> LossResult:
            return batched_loss(None, maps, cfg, masks=masks)

        return op, _batched_draw(rng, n_b, shape), lambda r: _batched_draw(r, n_b, shape)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")


def run(kernels=KERNELS, instances: int = 20, seed=0, h: float = 1e-5, n_b: int = 2, shape=(3, 3, 4)) -> dict:
    """Relative error of every instance, keyed by kernel name."""
    out = {}
    for kernel in kernels:
        rng = np.random.default_rng([seed, KERNELS.index(kernel)])
        errs = []
        for _ in range(instances):
            op, inputs, resample = instance(kernel, rng, n_b=n_b, shape=shape)
            errs.append(check_gradients(op, inputs, h=h, resample=resample, seed=rng.integers(2**32)))
        out[kernel] = errs
    return out


def format_report(errors: dict, tol: float = 1e-4) -> str:
    lines = []
    for kernel, errs in errors.items():
        worst = max(errs) if errs else 0.0
        status = "ok" if worst < tol else "FAIL"
        lines.append(f"{kernel} instances={len(errs)} max_rel_error={worst:.3e} {status}")
    return "\n".join(lines) + "\n"
