"""Exact embedding search, query expansion, PR-MAC re-ranking and mAP@k."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .aggregation import prmac_distance
from .errors import DimensionMismatch, EmptyIndex, EmptyRankList, MissingRegionalVectors, ZeroVector


@dataclass(eq=False)
class EmbeddingIndex:
    ids: list
    vectors: np.ndarray  # (N, d) unit rows
    regional: dict = field(default_factory=dict)  # id -> RegionalVectorSet
    _pos: dict = field(default_factory=dict, repr=False)
    _rank: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self._pos = {item: k for k, item in enumerate(self.ids)}
        if len(self._pos) != len(self.ids):
            raise ValueError("duplicate item ids")
        # position of each item in ascending-id order, for tie-breaking
        order = sorted(range(len(self.ids)), key=lambda k: self.ids[k])
        self._rank = np.empty(len(self.ids), dtype=np.int64)
        self._rank[order] = np.arange(len(self.ids))

    def __len__(self):
        return len(self.ids)

    def __contains__(self, item_id):
        return item_id in self._pos

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, item_id) -> np.ndarray:
        return self.vectors[self._pos[item_id]]

    def position(self, item_id) -> int:
        return self._pos[item_id]


@dataclass
class RankList:
    query_id: Hashable
    items: list  # ids in rank order
    distances: np.ndarray

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(zip(self.items, self.distances))


def build_index(ids: Sequence, embeddings, regional: Mapping | None = None) -> EmbeddingIndex:
    rows = [np.asarray(e, dtype=np.float64).ravel() for e in embeddings]
    if len(rows) != len(ids):
        raise ValueError("ids and embeddings differ in length")
    if not rows:
        return EmbeddingIndex([], np.zeros((0, 0)), dict(regional or {}))
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise DimensionMismatch(f"embeddings have mixed dimensions {sorted(dims)}")
    X = np.stack(rows)
    norms = np.linalg.norm(X, axis=1)
    if (norms == 0).any():
        raise ZeroVector(f"item {ids[int(np.flatnonzero(norms == 0)[0])]!r} has a zero embedding")
    return EmbeddingIndex(list(ids), X / norms[:, None], dict(regional or {}))


def _order(index: EmbeddingIndex, dist: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    return candidates[np.lexsort((index._rank[candidates], dist[candidates]))]


def _query_vector(index: EmbeddingIndex, q, query_id):
    if q is None:
        if query_id is None or query_id not in index:
            raise ValueError("need a query vector or an indexed query id")
        return index.vector(query_id)
    q = np.asarray(q, dtype=np.float64).ravel()
    if len(q) != index.dim:
        raise DimensionMismatch(f"query has dimension {len(q)}, index has {index.dim}")
    n = np.linalg.norm(q)
    if n == 0:
        raise ZeroVector("zero query vector")
    return q / n


def query(index: EmbeddingIndex, q=None, k: int = 100, query_id=None) -> RankList:
    """Exact ``k`` nearest items by unit-vector L2 distance.

    Ties are broken by ascending item id. When ``query_id`` names an indexed
    item, that item is left out of its own list (and ``q`` defaults to its
    stored vector).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyIndex("index is empty")
    qv = _query_vector(index, q, query_id)
    dist = np.sqrt(((index.vectors - qv) ** 2).sum(axis=1))
    cand = np.arange(len(index))
    if query_id is not None and query_id in index:
        cand = cand[cand != index.position(query_id)]
    ranked = _order(index, dist, cand)[:k]
    return RankList(query_id, [index.ids[r] for r in ranked], dist[ranked])


def qe_weight(distance):
    return (2.0 - np.asarray(distance)) / 2.0


def query_expansion(index: EmbeddingIndex, initial: RankList, m: int = 10, q=None, k: int | None = None,
                    weight=qe_weight) -> RankList:
    """Re-query with the query plus its top-``m`` results weighted by ``weight(D)``, ``(2 - D) / 2`` by default."""
    if len(initial) == 0:
        raise EmptyRankList("cannot expand an empty rank list")
    if m > len(initial):
        raise ValueError(f"m={m} exceeds rank list length {len(initial)}")
    qv = _query_vector(index, q, initial.query_id)
    top = [index.vector(i) for i in initial.items[:m]]
    w = np.asarray(weight(np.asarray(initial.distances[:m])), dtype=np.float64)
    expanded = qv + (w[:, None] * np.array(top)).sum(axis=0) if m else qv
    return query(index, expanded, k or len(initial), query_id=initial.query_id)


def rerank_prc(index: EmbeddingIndex, initial: RankList, m: int = 200, query_regions=None) -> RankList:
    """Reorder the first ``m`` entries by PR-MAC distance; the tail keeps its order.

    Distances of the reordered block are PR-MAC distances, so the returned
    list is nondecreasing within the block and within the tail separately.
    Ties inside the block break by ascending item id.
    """
    if query_regions is None:
        if initial.query_id not in index.regional:
            raise MissingRegionalVectors(f"no regional vectors for query {initial.query_id!r}")
        query_regions = index.regional[initial.query_id]
    head = initial.items[:m]
    missing = [i for i in head if i not in index.regional]
    if missing:
        raise MissingRegionalVectors(f"no regional vectors for items {missing[:5]!r}")
    d = np.array([prmac_distance(query_regions, index.regional[i]) for i in head])
    order = sorted(range(len(head)), key=lambda k: (d[k], head[k]))
    items = [head[k] for k in order] + list(initial.items[m:])
    dists = np.concatenate([d[order], np.asarray(initial.distances[m:], dtype=np.float64)])
    return RankList(initial.query_id, items, dists)


def prmac_ranking(index: EmbeddingIndex, query_id, k: int | None = None, query_regions=None) -> RankList:
    """Full ranking of indexed items by PR-MAC distance (self excluded)."""
    if query_regions is None:
        if query_id not in index.regional:
            raise MissingRegionalVectors(f"no regional vectors for query {query_id!r}")
        query_regions = index.regional[query_id]
    items = [i for i in index.ids if i != query_id]
    d = [prmac_distance(query_regions, index.regional[i]) for i in items]
    order = sorted(range(len(items)), key=lambda r: (d[r], items[r]))[: k or len(items)]
    return RankList(query_id, [items[r] for r in order], np.array([d[r] for r in order]))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


AP_NORMALIZERS = ("min", "relevant", "hits")


def average_precision_at_k(ranked: Iterable, relevant, k: int, norm: str = "min") -> float:
    """AP over the top ``k`` ranks.

    ``norm`` picks the denominator: ``min(k, |relevant|)`` (default),
    ``|relevant|``, or the number of hits in the top ``k``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if norm not in AP_NORMALIZERS:
        raise ValueError(f"norm must be one of {AP_NORMALIZERS}, got {norm!r}")
    items = ranked.items if isinstance(ranked, RankList) else list(ranked)
    relevant = set(relevant)
    if not relevant:
        return 0.0
    hits, total = 0, 0.0
    for r, item in enumerate(items[:k], start=1):
        if item in relevant:
            hits += 1
            total += hits / r
    if norm == "hits":
        return total / hits if hits else 0.0
    return total / (len(relevant) if norm == "relevant" else min(k, len(relevant)))


@dataclass
class MapReport:
    k: int
    mean_ap: float
    evaluated: int
    skipped: int  # queries with no relevant item
    per_query: dict


def mean_ap_at_k(rank_lists: Iterable[RankList], ground_truth: Mapping, k: int, norm: str = "min") -> MapReport:
    """Mean of AP@k over queries whose ground-truth set is nonempty."""
    aps, skipped = {}, 0
    for rl in rank_lists:
        gt = ground_truth.get(rl.query_id, ())
        if not gt:
            skipped += 1
            continue
        aps[rl.query_id] = average_precision_at_k(rl, gt, k, norm)
    mean = float(np.mean(list(aps.values()))) if aps else 0.0
    return MapReport(k, mean, len(aps), skipped, aps)
