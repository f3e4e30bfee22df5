import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from matchret.errors import BatchTooSmall, EmptyMask, KinkProximity, MaskShapeMismatch, ZeroVector
from matchret.gradcheck import random_mask, separated_map
from matchret.losses import (LossConfig, LossResult, anchor_swap_loss, batch_terms, batched_loss,
                             check_gradients, embed_distance, mask_triplet_loss, triplet_loss)
from matchret.sampling import MarginSchedule


def unit_triplet(d_ap, d_an, d_pn):
    """Unit vectors in R^3 with the requested pairwise distances."""
    a = np.array([1.0, 0.0, 0.0])
    cos_ap = 1 - d_ap**2 / 2
    p = np.array([cos_ap, math.sqrt(1 - cos_ap**2), 0.0])
    cos_an, cos_pn = 1 - d_an**2 / 2, 1 - d_pn**2 / 2
    x = cos_an
    y = (cos_pn - p[0] * x) / p[1]
    z = math.sqrt(1 - x * x - y * y)
    n = np.array([x, y, z])
    assert embed_distance(a, p) == pytest.approx(d_ap)
    assert embed_distance(a, n) == pytest.approx(d_an)
    assert embed_distance(p, n) == pytest.approx(d_pn)
    return a, p, n


# -- independent reference -------------------------------------------------------


def _unit(v):
    return v / np.linalg.norm(v)


def _d(x, y):
    return float(np.linalg.norm(_unit(x) - _unit(y)))


def _mtl_ref(a, p, n, ma, mp, alpha, beta, lam):
    ga, gp, gn = (m.reshape(-1, m.shape[-1]).max(axis=0) for m in (a, p, n))
    sa = a[ma.astype(bool)].max(axis=0)
    sp = p[mp.astype(bool)].max(axis=0)
    star = max(_d(sa, sp) - beta, 0.0)
    swap = max(_d(ga, gp) + alpha - min(_d(ga, gn), _d(gp, gn)), 0.0)
    return star + lam * swap


def _batched_ref(maps, masks, cfg, sched):
    """Direct enumeration of every (i, j != i, k) term."""
    n_b = maps.shape[1]
    A, S, W = maps
    L_easy = L_weak = 0.0
    for i, j, k in itertools.product(range(n_b), range(n_b), range(3)):
        if i == j:
            continue
        neg = maps[k, j]
        L_easy += _mtl_ref(A[i], S[i], neg, *masks[i][0], sched.alpha_easy, cfg.beta, cfg.lam)
        L_weak += _mtl_ref(A[i], W[i], neg, *masks[i][1], sched.alpha_weak, cfg.beta, cfg.lam)
    if n_b > 1:
        L_easy /= 3 * n_b * (n_b - 1)
        L_weak /= 3 * n_b * (n_b - 1)
    L_hard = sum(_mtl_ref(A[i], S[i], W[i], *masks[i][0], sched.alpha_hard, cfg.beta, cfg.lam)
                 for i in range(n_b)) / n_b
    return L_easy + cfg.lambda1 * L_weak + cfg.lambda2 * L_hard


# -- distance -------------------------------------------------------------------


def test_distance_examples():
    assert embed_distance([1, 2], [2, 4]) == 0.0
    assert embed_distance([1, 0], [-3, 0]) == 2.0
    assert embed_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ZeroVector):
        embed_distance([0, 0], [1, 0])


@given(arrays(np.float64, 5, elements=st.floats(-10, 10)), arrays(np.float64, 5, elements=st.floats(-10, 10)))
def test_distance_in_range(x, y):
    if np.linalg.norm(x) > 1e-6 and np.linalg.norm(y) > 1e-6:
        assert 0.0 <= embed_distance(x, y) <= 2.0 + 1e-12


# -- triplet / anchor swap ----------------------------------------------------------


def test_triplet_examples():
    a, p, n = unit_triplet(0.1, 1.9, 1.9)
    res = triplet_loss(a, p, n, 1.0)
    assert res.value == 0.0
    assert all(not g.any() for g in res.grads)
    a, p, n = unit_triplet(0.6, 1.2, 1.5)
    assert triplet_loss(a, p, n, 1.0).value == pytest.approx(0.4)
    _, _, n = unit_triplet(0.6, 1.2, 1.5)
    assert triplet_loss(a, a, n, 0.5).value == pytest.approx(max(0.5 - 1.2, 0))
    assert triplet_loss(a, a, n, 1.5).value == pytest.approx(0.3)


def test_anchor_swap_examples():
    # D+ = 0.6 and D- = 1.8 force D'- >= 1.455 on the unit sphere, so use 1.5
    a, p, n = unit_triplet(0.6, 1.8, 1.5)
    assert anchor_swap_loss(a, p, n, 1.0).value == pytest.approx(0.1)
    assert triplet_loss(a, p, n, 1.0).value == 0.0
    a, p, n = unit_triplet(0.6, 1.3, 1.2)
    assert anchor_swap_loss(a, p, n, 1.0).value == pytest.approx(0.4)
    a, p, n = unit_triplet(0.6, 1.2, 1.5)  # D'- >= D-: same as triplet
    assert anchor_swap_loss(a, p, n, 1.0).value == triplet_loss(a, p, n, 1.0).value
    assert anchor_swap_loss(a, a, n, 1.5).value == triplet_loss(a, a, n, 1.5).value


def test_swap_tie_goes_to_anchor_negative():
    a, p, n = unit_triplet(0.5, 1.0, 1.0)
    res = anchor_swap_loss(a, p, n, 1.0)
    ref = triplet_loss(a, p, n, 1.0)
    assert res.value == ref.value
    for g, h in zip(res.grads, ref.grads):
        np.testing.assert_array_equal(g, h)


vec = arrays(np.float64, 4, elements=st.floats(-5, 5)).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(vec, vec, vec, st.floats(0.01, 2.0))
def test_losses_nonnegative_and_swap_dominates(a, p, n, alpha):
    tl = triplet_loss(a, p, n, alpha).value
    sw = anchor_swap_loss(a, p, n, alpha).value
    assert tl >= 0.0 and sw >= tl


@given(vec, vec, vec)
def test_inactive_hinge_gives_zero_gradient(a, p, n):
    res = triplet_loss(a, p, n, 0.01)
    if res.hinge_args.max() < 0:
        assert res.value == 0.0
        assert all(not g.any() for g in res.grads)


def test_zero_vector_rejected():
    with pytest.raises(ZeroVector):
        triplet_loss([0, 0, 0], [1, 0, 0], [0, 1, 0])


# -- mask triplet -----------------------------------------------------------------------


def test_mtl_full_masks_reduce_to_global():
    rng = np.random.default_rng(3)
    a, p, n = (separated_map(rng) for _ in range(3))
    ones = np.ones((3, 3), dtype=bool)
    res = mask_triplet_loss(a, p, n, ones, ones)
    d_plus = _d(a.max(axis=(0, 1)), p.max(axis=(0, 1)))
    swap = anchor_swap_loss(a.max(axis=(0, 1)), p.max(axis=(0, 1)), n.max(axis=(0, 1)), 1.0).value
    assert res.value == pytest.approx(max(d_plus - 0.1, 0) + 0.5 * swap)


def test_mtl_identical_pair_has_no_mask_term():
    rng = np.random.default_rng(4)
    a, n = separated_map(rng), separated_map(rng)
    m = random_mask(rng)
    res = mask_triplet_loss(a, a, n, m, m)
    g = a.max(axis=(0, 1))
    assert res.value == pytest.approx(0.5 * anchor_swap_loss(g, g, n.max(axis=(0, 1)), 1.0).value)


def test_mtl_hand_value():
    a, p, n = unit_triplet(0.3, 0.9, 1.1)
    res = mask_triplet_loss(a[None, None], p[None, None], n[None, None], [[1]], [[1]])
    assert res.value == pytest.approx(0.2 + 0.2)


def test_mtl_matches_reference_with_partial_masks():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, p, n = (separated_map(rng, (4, 3, 5)) for _ in range(3))
        ma, mp = random_mask(rng, (4, 3)), random_mask(rng, (4, 3))
        cfg = LossConfig(alpha=rng.uniform(0.3, 1.5))
        got = mask_triplet_loss(a, p, n, ma, mp, cfg).value
        assert got == pytest.approx(_mtl_ref(a, p, n, ma, mp, cfg.alpha, cfg.beta, cfg.lam), abs=1e-12)


def test_mtl_mask_errors():
    m = np.ones((3, 3, 2))
    with pytest.raises(MaskShapeMismatch):
        mask_triplet_loss(m, m, m, np.ones((2, 3)), np.ones((3, 3)))
    with pytest.raises(EmptyMask):
        mask_triplet_loss(m, m, m, np.zeros((3, 3)), np.ones((3, 3)))


# -- batched --------------------------------------------------------------------------


def _batch_inputs(rng, n_b, shape=(3, 3, 4)):
    maps = np.stack([np.stack([separated_map(rng, shape) for _ in range(n_b)]) for _ in range(3)])
    masks = [[[random_mask(rng, shape[:2]) for _ in range(2)] for _ in range(2)] for _ in range(n_b)]
    return maps, masks


@pytest.mark.parametrize("n_b", [1, 2, 3, 4])
def test_batched_matches_enumeration(n_b):
    rng = np.random.default_rng(n_b)
    for _ in range(5):
        maps, masks = _batch_inputs(rng, n_b)
        cfg = LossConfig(lambda1=rng.uniform(0.5, 2), lambda2=rng.uniform(0.5, 2))
        got = batched_loss(None, maps, cfg, masks=masks).value
        assert got == pytest.approx(_batched_ref(maps, masks, cfg, MarginSchedule()), abs=1e-12)


def test_batched_single_column_is_hard_term():
    rng = np.random.default_rng(0)
    maps, masks = _batch_inputs(rng, 1)
    cfg = LossConfig(lambda2=0.7)
    ref = mask_triplet_loss(maps[0, 0], maps[1, 0], maps[2, 0], *masks[0][0],
                            LossConfig(alpha=0.5))
    assert batched_loss(None, maps, cfg, masks=masks).value == pytest.approx(0.7 * ref.value)
    with pytest.raises(BatchTooSmall):
        batched_loss(None, maps, cfg, masks=masks, require_cross_scene=True)


def test_batched_all_inactive_is_zero():
    # anchors and positives identical, negatives far away; tiny margins
    rng = np.random.default_rng(2)
    n_b = 3
    maps = np.zeros((3, n_b, 2, 2, 2 * n_b))
    for i in range(n_b):
        maps[:, i, :, :, 2 * i] = 1.0
        maps[:, i, 0, 0, 2 * i + 1] = rng.uniform(0.01, 0.02)
    ones = np.ones((2, 2), dtype=bool)
    masks = [[[ones, ones], [ones, ones]] for _ in range(n_b)]
    # hard term pits weak against strong; with identical maps its negative distance is 0,
    # so silence it with lambda2 = 0 and keep every cross-scene hinge below zero
    cfg = LossConfig(lambda2=0.0)
    res = batched_loss(None, maps, cfg, MarginSchedule(0.5, 0.5, 0.5), masks=masks)
    assert res.value == 0.0
    assert not res.grads[0].any()


def test_batched_scale_three_c():
    # every map identical: each MTL term is lam * alpha, so L = 3 * lam * alpha
    maps = np.ones((3, 3, 2, 2, 4))
    ones = np.ones((2, 2), dtype=bool)
    masks = [[[ones, ones], [ones, ones]] for _ in range(3)]
    res = batched_loss(None, maps, LossConfig(), MarginSchedule(0.8, 0.8, 0.8), masks=masks)
    assert res.value == pytest.approx(3 * 0.5 * 0.8)


def test_batch_terms_normalizers():
    for n_b in (2, 3, 5):
        t = batch_terms(n_b)
        easy = t.alpha == 1.0
        assert t.weight[easy].sum() == pytest.approx(1.0)
        # the last n_b terms are the hard ones
        assert t.weight[-n_b:].sum() == pytest.approx(1.0)
        assert t.weight[~easy][:-n_b].sum() == pytest.approx(1.0)
        assert len(t.a) == 2 * 3 * n_b * (n_b - 1) + n_b


# -- gradient checker -------------------------------------------------------------------


def test_check_gradients_quadratic():
    def quad(x):
        return LossResult(float((x**2).sum() + 3 * x.sum()), (2 * x + 3,), np.array([]))

    x = np.random.default_rng(0).normal(size=(4, 3))
    assert check_gradients(quad, [x]) < 1e-9


def test_check_gradients_triplet_random_points():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, p, n = (rng.normal(size=6) for _ in range(3))
        assert check_gradients(lambda *x: triplet_loss(*x), [a, p, n],
                               resample=lambda r: [r.normal(size=6) for _ in range(3)]) < 1e-4


def test_check_gradients_inactive_point_zero():
    a, p, n = unit_triplet(0.1, 1.9, 1.9)
    assert check_gradients(lambda *x: triplet_loss(*x), [a, p, n]) == 0.0


def test_check_gradients_kink_without_resampler():
    a, p, n = unit_triplet(0.6, 1.6, 1.7)  # hinge argument exactly 0
    with pytest.raises(KinkProximity):
        check_gradients(lambda *x: triplet_loss(*x), [a, p, n])


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_batched_gradient_property(seed):
    rng = np.random.default_rng(seed)
    maps, masks = _batch_inputs(rng, 2, (2, 2, 3))

    def op(m):
        return batched_loss(None, m, masks=masks)

    def redraw(r):
        return [_batch_inputs(r, 2, (2, 2, 3))[0]]

    assert check_gradients(op, [maps], resample=redraw, seed=seed) < 1e-4
