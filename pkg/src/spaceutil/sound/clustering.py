"""Agglomerative clustering with cophenetic-correlation linkage selection
and Calinski-Harabasz cluster-count selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.cluster.hierarchy import cophenet
from scipy.cluster.hierarchy import linkage as _scipy_linkage
from scipy.spatial.distance import pdist, squareform

from ..errors import TooFewSamples, ZeroVariance

LINKAGES = ("single", "complete", "average", "ward")
METRICS = ("euclidean",)
CH_DENOMINATORS = ("standard", "unadjusted")


@dataclass
class Dendrogram:
    """Merge history in scipy's (n-1, 4) layout: a, b, height, size.

    Ids below ``n`` are leaves; id ``n + i`` is the cluster formed by merge i.
    """

    merges: np.ndarray
    method: str
    metric: str

    @property
    def n_leaves(self) -> int:
        return len(self.merges) + 1


def build_dendrogram(distances: np.ndarray, method: str = "average",
                     metric: str = "euclidean") -> Dendrogram:
    """Build from a condensed distance vector."""
    if method not in LINKAGES:
        raise ValueError(f"unknown linkage {method!r}")
    merges = _scipy_linkage(np.asarray(distances, dtype=float), method=method)
    return Dendrogram(merges, method, metric)


def cophenetic_distances(dendrogram: Dendrogram) -> np.ndarray:
    """Condensed vector of merge heights at which each pair first joins."""
    return cophenet(dendrogram.merges)


def cophenetic_matrix(dendrogram: Dendrogram) -> np.ndarray:
    return squareform(cophenetic_distances(dendrogram))


def ccc(dendrogram: Dendrogram, distances) -> float:
    """Pearson correlation between original and cophenetic pair distances."""
    d = np.asarray(distances, dtype=float)
    if d.ndim == 2:
        d = d[np.triu_indices(len(d), k=1)]
    c = cophenetic_distances(dendrogram)
    if len(c) != len(d):
        raise ValueError("distance vector does not match the dendrogram size")
    dc = c - c.mean()
    dd = d - d.mean()
    scc = float(dc @ dc)
    sdd = float(dd @ dd)
    if scc <= 1e-300 or sdd <= 1e-300:
        raise ZeroVariance("cophenetic or original distances are constant")
    return float(np.clip((dc @ dd) / np.sqrt(scc * sdd), -1.0, 1.0))


def select_dendrogram(distances, linkages: Sequence[str] = LINKAGES,
                      metric: str = "euclidean") -> tuple[Dendrogram, float]:
    """Best-CCC dendrogram over ``linkages``; ties keep the earlier linkage."""
    d = np.asarray(distances, dtype=float)
    n = int(round((1 + np.sqrt(1 + 8 * len(d))) / 2))
    if n < 3:
        raise TooFewSamples("need at least 3 elements to compare linkages")
    best, best_ccc = None, -np.inf
    for method in linkages:
        dendro = build_dendrogram(d, method, metric)
        try:
            value = ccc(dendro, d)
        except ZeroVariance:
            value = -np.inf
        if best is None or value > best_ccc:
            best, best_ccc = dendro, value
    if not np.isfinite(best_ccc):
        raise ZeroVariance("CCC undefined for every linkage (constant distances)")
    return best, float(best_ccc)


def cluster_select(features, linkages: Sequence[str] = LINKAGES,
                   metrics: Sequence[str] = METRICS) -> tuple[Dendrogram, float]:
    """Try every (metric, linkage) pair on ``features`` and keep the best CCC.

    Ward is only paired with the euclidean metric.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 3:
        raise TooFewSamples("need at least 3 feature vectors")
    best, best_ccc = None, -np.inf
    for metric in metrics:
        d = pdist(x, metric=metric)
        allowed = [m for m in linkages if m != "ward" or metric == "euclidean"]
        try:
            dendro, value = select_dendrogram(d, allowed, metric)
        except ZeroVariance:
            continue
        if best is None or value > best_ccc:
            best, best_ccc = dendro, value
    if best is None:
        raise ZeroVariance("all pairwise distances are equal")
    return best, best_ccc


def cut(dendrogram: Dendrogram, k: int) -> np.ndarray:
    """Labels 1..k from replaying the first n - k merges.

    Labels are numbered in order of each cluster's first leaf, so the result
    is deterministic.
    """
    n = dendrogram.n_leaves
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}")
    parent = list(range(2 * n - 1))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for step, (a, b, _, _) in enumerate(dendrogram.merges[: n - k]):
        parent[int(a)] = n + step
        parent[int(b)] = n + step
    roots = [find(i) for i in range(n)]
    relabel: dict[int, int] = {}
    labels = np.empty(n, dtype=int)
    for i, r in enumerate(roots):
        labels[i] = relabel.setdefault(r, len(relabel) + 1)
    return labels


def ch_index(features, labels, denominator: str = "standard") -> float:
    """Calinski-Harabasz score from between/within sums of squares.

    ``standard`` divides the within term by n - N; ``unadjusted`` by n - 1.
    A perfect partition (zero within-cluster spread) scores +inf.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    n = len(x)
    ids = np.unique(labels)
    k = len(ids)
    if k < 2:
        raise ValueError("CH needs at least 2 clusters")
    grand = x.mean(axis=0)
    between = within = 0.0
    for lab in ids:
        members = x[labels == lab]
        centroid = members.mean(axis=0)
        between += len(members) * float(np.sum((centroid - grand) ** 2))
        within += float(np.sum((members - centroid) ** 2))
    if denominator == "standard":
        dof = n - k
    elif denominator == "unadjusted":
        dof = n - 1
    else:
        raise ValueError(f"denominator must be one of {CH_DENOMINATORS}")
    scale = max(between, within, 1e-300)
    if between <= 1e-12 * scale:
        return 0.0
    if within <= 1e-12 * scale or dof <= 0:
        return float("inf")
    return (between / (k - 1)) / (within / dof)


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    scores: dict[int, float]


def choose_k(dendrogram: Dendrogram, features, k_range: Sequence[int] = range(2, 11),
             denominator: str = "standard") -> ClusterAssignment:
    """Cut at every k and keep the CH maximizer; ties go to the smaller k."""
    n = dendrogram.n_leaves
    ks = [k for k in k_range if 2 <= k <= n - 1] or [min(2, n)]
    best_k, best_score, best_labels = None, -np.inf, None
    scores = {}
    for k in ks:
        labels = cut(dendrogram, k)
        score = ch_index(features, labels, denominator)
        scores[k] = score
        if best_k is None or score > best_score:
            best_k, best_score, best_labels = k, score, labels
    return ClusterAssignment(best_labels, best_k, scores)
