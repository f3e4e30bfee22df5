"""Pair labelling, batched triplet sampling and adaptive margins."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientScenes, NoValidTriplet
from .geometry import OverlapMask, OverlapTable, ThresholdConfig


class PairLabel(enum.Enum):
    StrongPositive = "strong"
    WeakPositive = "weak"
    Unlabeled = "unlabeled"
    CrossSceneNegative = "negative"


@dataclass(frozen=True)
class MarginSchedule:
    alpha_easy: float = 1.0
    alpha_weak: float = 0.5
    alpha_hard: float = 0.5

    def __post_init__(self):
        if min(self.alpha_easy, self.alpha_weak, self.alpha_hard) <= 0:
            raise ValueError("margins must be positive")


def margin_for(kind: str, sched: MarginSchedule = MarginSchedule()) -> float:
    try:
        return {"easy": sched.alpha_easy, "weak": sched.alpha_weak, "hard": sched.alpha_hard}[kind]
    except KeyError:
        raise ValueError(f"unknown triplet kind {kind!r}") from None


def classify_pair(co: float, cfg: ThresholdConfig = ThresholdConfig(), same_scene: bool = True) -> PairLabel:
    # co below t_w1 is in-scene but too weak to use; it joins the gap as Unlabeled
    if not same_scene:
        return PairLabel.CrossSceneNegative
    if cfg.t_s1 <= co <= cfg.t_s2:
        return PairLabel.StrongPositive
    if cfg.t_w1 <= co <= cfg.t_w2:
        return PairLabel.WeakPositive
    return PairLabel.Unlabeled


@dataclass
class TripletColumn:
    scene_id: str
    anchor: int
    strong: int
    weak: int
    strong_masks: tuple[OverlapMask, OverlapMask]  # (anchor side, strong side)
    weak_masks: tuple[OverlapMask, OverlapMask]  # (anchor side, weak side)
    hard_source: str = "sfm"  # "mesh_only" when the strong pair fails the track test


@dataclass
class TripletBatch:
    columns: list[TripletColumn] = field(default_factory=list)

    @property
    def n_b(self) -> int:
        return len(self.columns)

    @property
    def scene_ids(self) -> list[str]:
        return [c.scene_id for c in self.columns]

    def matrix(self) -> np.ndarray:
        """Image ids as the ``(3, N_b)`` anchor / strong / weak matrix."""
        return np.array([[c.anchor for c in self.columns],
                         [c.strong for c in self.columns],
                         [c.weak for c in self.columns]], dtype=np.int64).reshape(3, -1)


def eligible_triplets(table: OverlapTable, cfg: ThresholdConfig = ThresholdConfig()):
    """Map anchor position -> (strong positions, weak positions), only anchors having both."""
    co = np.asarray(table.co)
    off = ~np.eye(len(table), dtype=bool)
    strong = (co >= cfg.t_s1) & (co <= cfg.t_s2) & off
    weak = (co >= cfg.t_w1) & (co <= cfg.t_w2) & off
    out = {}
    for a in np.flatnonzero(strong.any(axis=1) & weak.any(axis=1)):
        out[int(a)] = ([int(b) for b in np.flatnonzero(strong[a])], [int(b) for b in np.flatnonzero(weak[a])])
    return out


def _column(table: OverlapTable, cands, rng, cfg) -> TripletColumn:
    anchors = sorted(cands)
    a = anchors[rng.integers(len(anchors))]
    strong, weak = cands[a]
    s = strong[rng.integers(len(strong))]
    w = weak[rng.integers(len(weak))]
    hard = "mesh_only" if table.ct[a, s] < cfg.t_sfm else "sfm"
    return TripletColumn(
        scene_id=table.scene_id,
        anchor=table.image_ids[a],
        strong=table.image_ids[s],
        weak=table.image_ids[w],
        strong_masks=table.mask_pair(a, s),
        weak_masks=table.mask_pair(a, w),
        hard_source=hard,
    )


def sample_batch(
    scenes: Sequence[OverlapTable],
    n_b: int,
    seed=None,
    cfg: ThresholdConfig = ThresholdConfig(),
    rng: np.random.Generator | None = None,
) -> TripletBatch:
    """Draw ``n_b`` columns, each from a different scene.

    Scenes are picked uniformly without replacement, then an eligible anchor
    and its strong and weak positives uniformly within each scene. Pass
    either ``seed`` or a live ``rng`` (which is advanced).
    """
    if n_b < 1:
        raise ValueError("n_b must be at least 1")
    if len(scenes) < n_b:
        raise InsufficientScenes(f"need {n_b} distinct scenes, got {len(scenes)}")
    ids = [s.scene_id for s in scenes]
    if len(set(ids)) != len(ids):
        raise ValueError("scene ids must be distinct")
    if rng is None:
        rng = np.random.default_rng(seed)
    picked = rng.choice(len(scenes), size=n_b, replace=False)
    cols = []
    for k in picked:
        table = scenes[int(k)]
        cands = eligible_triplets(table, cfg)
        if not cands:
            raise NoValidTriplet(f"scene {table.scene_id!r} has no anchor with both a strong and a weak positive")
        cols.append(_column(table, cands, rng, cfg))
    return TripletBatch(cols)
