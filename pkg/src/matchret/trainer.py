"""SGD training of a per-position linear embedding with the batched triplet loss.

The model projects every feature-map cell from ``C`` to ``d`` dimensions and
max-pools the result, a stand-in for a fully convolutional feature tower.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aggregation import max_pool, max_pool_backward
from .errors import DivergenceDetected, InsufficientScenes
from .losses import LossConfig, batched_loss_pooled
from .retrieval import MapReport, RankList, build_index, mean_ap_at_k, query
from .sampling import MarginSchedule, eligible_triplets, sample_batch
from .synth import brute_force_ground_truth


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.002
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: float = 0.9
    decay_interval: int = 1000
    steps: int = 5000
    batch_size: int = 4
    seed: int = 0
    embed_dim: int = 32
    loss_kind: str = "mtl"
    margins: MarginSchedule = field(default_factory=MarginSchedule)
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.lr <= 0 or self.lr_decay <= 0 or self.decay_interval < 1:
            raise ValueError("learning rate, decay factor and interval must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.loss_kind not in ("mtl", "tl"):
            raise ValueError("loss_kind must be 'mtl' or 'tl'")

    def lr_at(self, step: int) -> float:
        return self.lr * self.lr_decay ** (step // self.decay_interval)


@dataclass(eq=False)
class LinearEmbeddingModel:
    weights: np.ndarray  # (C, d)

    @classmethod
    def init(cls, channels: int, dim: int, seed=0) -> "LinearEmbeddingModel":
        bound = 1.0 / math.sqrt(channels)
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-bound, bound, size=(channels, dim)))

    @property
    def channels(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def project(self, fmap) -> np.ndarray:
        return np.asarray(fmap, dtype=np.float64) @ self.weights

    def embed(self, fmap) -> np.ndarray:
        v = self.project(fmap).max(axis=(0, 1))
        n = np.linalg.norm(v)
        return v / n if n > 0 else v


@dataclass
class TrainResult:
    model: LinearEmbeddingModel
    history: list = field(default_factory=list)  # (step, loss, lr)

    @property
    def losses(self) -> np.ndarray:
        return np.array([h[1] for h in self.history])


def sgd_step(w, velocity, grad, lr, momentum, weight_decay):
    """Classical momentum with L2 decay: ``v <- mu v - lr (g + wd w)``, ``w <- w + v``."""
    velocity = momentum * velocity - lr * (grad + weight_decay * w)
    return w + velocity, velocity


def _loss_and_grad(model, maps, masks, n_b, cfg: TrainConfig):
    """Batched loss and its gradient w.r.t. the projection weights.

    ``maps``: ``(3 * n_b, H, W, C)``; ``masks``: per column
    ``((anchor, strong), (anchor, weak))`` boolean grids.
    """
    Y = maps @ model.weights
    pooled = [max_pool(y) for y in Y]
    G = np.stack([v for v, _ in pooled])
    masked, src = [], []
    for pair_kind, other in ((0, 1), (1, 2)):
        for i in range(n_b):
            ga, go = masks[i][pair_kind]
            va, aa = max_pool(Y[i], ga)
            vo, ao = max_pool(Y[other * n_b + i], go)
            masked.append(np.stack([va, vo]))
            src.append(((i, aa), (other * n_b + i, ao)))
    masked = np.stack(masked)
    value, dG, dM, _ = batched_loss_pooled(G, masked, n_b, cfg.loss, cfg.margins, kind=cfg.loss_kind)
    dY = np.stack([max_pool_backward(dG[r], pooled[r][1], Y[r].shape) for r in range(len(Y))])
    if cfg.loss_kind == "mtl":
        for q, ((ra, aa), (ro, ao)) in enumerate(src):
            dY[ra] += max_pool_backward(dM[q, 0], aa, Y[ra].shape)
            dY[ro] += max_pool_backward(dM[q, 1], ao, Y[ro].shape)
    C = maps.shape[-1]
    grad = maps.reshape(-1, C).T @ dY.reshape(-1, dY.shape[-1])
    return value, grad


def _eligible_scenes(scenes):
    tables = [s.overlap for s in scenes if eligible_triplets(s.overlap)]
    return tables


def train(scenes: Sequence, cfg: TrainConfig = TrainConfig(), init: LinearEmbeddingModel | None = None) -> TrainResult:
    """Fit the projection with SGD on batches drawn from distinct scenes.

    Deterministic in ``cfg.seed``: the same seed drives initialization (when
    ``init`` is not given) and batch sampling.
    """
    by_id = {s.scene_id: s for s in scenes}
    channels = next(iter(next(iter(scenes)).features.values())).shape[-1]
    model = init if init is not None else LinearEmbeddingModel.init(channels, cfg.embed_dim, cfg.seed)
    model = LinearEmbeddingModel(model.weights.copy())
    result = TrainResult(model)
    if cfg.steps == 0:
        return result
    tables = _eligible_scenes(scenes)
    if len(tables) < cfg.batch_size:
        raise InsufficientScenes(
            f"need {cfg.batch_size} scenes with a strong and a weak positive, have {len(tables)}"
        )
    rng = np.random.default_rng([cfg.seed, 1])
    w = model.weights
    v = np.zeros_like(w)
    n_b = cfg.batch_size
    for step in range(cfg.steps):
        batch = sample_batch(tables, n_b, rng=rng)
        cols = batch.columns
        imgs = [(c.scene_id, getattr(c, role)) for role in ("anchor", "strong", "weak") for c in cols]
        maps = np.stack([by_id[sid].features[i] for sid, i in imgs]).astype(np.float64)
        masks = [((c.strong_masks[0].grid.astype(bool), c.strong_masks[1].grid.astype(bool)),
                  (c.weak_masks[0].grid.astype(bool), c.weak_masks[1].grid.astype(bool))) for c in cols]
        model.weights = w
        value, grad = _loss_and_grad(model, maps, masks, n_b, cfg)
        if not math.isfinite(value) or not np.isfinite(grad).all():
            raise DivergenceDetected(f"non-finite loss at step {step}")
        lr = cfg.lr_at(step)
        w, v = sgd_step(w, v, grad, lr, cfg.momentum, cfg.weight_decay)
        result.history.append((step, value, lr))
    model.weights = w
    if not np.isfinite(w).all():
        raise DivergenceDetected("non-finite weights after training")
    return result


def smoothed(values, window: int = 50) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if len(values) < window:
        return values.copy()
    return np.convolve(values, np.ones(window) / window, mode="valid")


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def ground_truth(scenes, t_pos: float = 0.5) -> dict:
    gt = {}
    for s in scenes:
        for i, rel in brute_force_ground_truth(s, t_pos).items():
            gt[s.item_id(i)] = {s.item_id(j) for j in rel}
    return gt


def embed_scenes(embed, scenes):
    ids, vecs = [], []
    for s in scenes:
        for i in s.image_ids:
            ids.append(s.item_id(i))
            vecs.append(embed(s.features[i]))
    return ids, vecs


def evaluate_embeddings(ids, vecs, scenes, k: int, t_pos: float = 0.5) -> MapReport:
    index = build_index(ids, vecs)
    gt = ground_truth(scenes, t_pos)
    return mean_ap_at_k([query(index, k=k, query_id=q) for q in ids], gt, k)


def evaluate_model(model: LinearEmbeddingModel, scenes, k: int = 10, t_pos: float = 0.5) -> MapReport:
    """mAP@k of the model + MAC embedding, every image queried against all images of all scenes."""
    ids, vecs = embed_scenes(model.embed, scenes)
    return evaluate_embeddings(ids, vecs, scenes, k, t_pos)


def random_rank_map(scenes, k: int = 10, t_pos: float = 0.5, seed=0) -> MapReport:
    """mAP@k of uniformly random rankings, the chance baseline."""
    rng = np.random.default_rng(seed)
    ids = [s.item_id(i) for s in scenes for i in s.image_ids]
    gt = ground_truth(scenes, t_pos)
    lists = []
    for q in ids:
        others = [i for i in ids if i != q]
        order = rng.permutation(len(others))[:k]
        lists.append(RankList(q, [others[r] for r in order], np.zeros(len(order))))
    return mean_ap_at_k(lists, gt, k)
