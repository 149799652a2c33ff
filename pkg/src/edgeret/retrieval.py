"""Exhaustive nearest-neighbour ranking and top-k / mAP scoring."""

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch

METRICS = ("l2", "cosine")
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class Gallery:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if feats.shape[0] < 1 or feats.shape[0] != labels.shape[0]:
            raise ValueError(f"gallery needs N >= 1 rows with one label each, got {feats.shape} / {labels.shape}")
        if not np.all(np.isfinite(feats)):
            raise ValueError("gallery features must be finite")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class RetrievalScores:
    top1: float
    top5: float
    map: float
    n_queries: int
    skipped: int


def _unit_rows(x):
    norm = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norm > 0, norm, 1.0)


def distances(queries, gallery, metric="l2"):
    """(Q, N) distances: squared Euclidean for ``l2``, ``1 - cos`` for ``cosine``."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    g = gallery.features
    if q.shape[1] != g.shape[1]:
        raise DimMismatch(f"query dim {q.shape[1]} != gallery dim {g.shape[1]}")
    if metric == "cosine":
        return 1.0 - _unit_rows(q) @ _unit_rows(g).T
    if metric != "l2":
        raise ValueError(f"unknown metric {metric!r}")
    out = np.empty((q.shape[0], g.shape[0]))
    step = max(1, _CHUNK_ELEMS // max(1, g.size))
    for i in range(0, q.shape[0], step):
        diff = q[i:i + step, None, :] - g[None, :, :]
        out[i:i + step] = np.einsum("qnd,qnd->qn", diff, diff)
    return out


def rank_all(queries, gallery, metric="l2"):
    """Gallery indices per query by ascending distance, ties by index."""
    return np.argsort(distances(queries, gallery, metric), axis=1, kind="stable")


def rank(query, gallery, metric="l2"):
    query = np.asarray(query, dtype=np.float64).ravel()
    return rank_all(query[None, :], gallery, metric)[0]


def _relevance(queries, query_labels, gallery, metric):
    order = rank_all(queries, gallery, metric)
    query_labels = np.asarray(query_labels, dtype=np.int64).ravel()
    rel = gallery.labels[order] == query_labels[:, None]
    has_match = np.isin(query_labels, gallery.labels)
    return rel[has_match], int((~has_match).sum())


def average_precision(relevance):
    """AP of one ranked boolean relevance list (0 if nothing is relevant)."""
    rel = np.asarray(relevance, dtype=bool)
    if not rel.any():
        return 0.0
    hits = np.cumsum(rel)
    ranks = np.arange(1, rel.size + 1)
    return float((hits[rel] / ranks[rel]).mean())


def _scores_from_relevance(rel, ks):
    if rel.shape[0] == 0:
        return {k: 0.0 for k in ks}, 0.0
    tops = {k: float(rel[:, :k].any(axis=1).mean()) for k in ks}
    hits = np.cumsum(rel, axis=1)
    ranks = np.arange(1, rel.shape[1] + 1)
    ap = (rel * hits / ranks).sum(axis=1) / rel.sum(axis=1)
    return tops, float(ap.mean())


def top_k_accuracy(queries, query_labels, gallery, k=1, metric="l2"):
    """Fraction of queries with their identity among the k nearest entries.

    Queries whose identity is absent from the gallery are skipped; use
    :func:`evaluate` to get the skip tally.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rel, _ = _relevance(queries, query_labels, gallery, metric)
    tops, _ = _scores_from_relevance(rel, (k,))
    return tops[k]


def mean_average_precision(queries, query_labels, gallery, metric="l2"):
    rel, _ = _relevance(queries, query_labels, gallery, metric)
    return _scores_from_relevance(rel, (1,))[1]


def evaluate(queries, query_labels, gallery, metric="l2"):
    """Top-1, top-5 and mAP from a single ranking pass."""
    rel, skipped = _relevance(queries, query_labels, gallery, metric)
    tops, m = _scores_from_relevance(rel, (1, 5))
    return RetrievalScores(tops[1], tops[5], m, rel.shape[0], skipped)


def correct_at_1(queries, query_labels, gallery, metric="l2"):
    """Per-query boolean: is the nearest gallery entry the right identity."""
    order = rank_all(queries, gallery, metric)
    return gallery.labels[order[:, 0]] == np.asarray(query_labels, dtype=np.int64).ravel()
