"""Background periods, chi-square scores and binary sound utilization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..motion import cdf_threshold
from .pca import PcaModel, fit_pca


@dataclass(frozen=True)
class Period:
    start: int   # first window index
    end: int     # one past the last window index
    label: int

    def __len__(self) -> int:
        return self.end - self.start


def _runs(labels: Sequence[int]) -> list[Period]:
    runs = []
    start = 0
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start]:
            runs.append(Period(start, i, int(labels[start])))
            start = i
    return runs


def segment_background(labels: Sequence[int], features=None, min_run: int = 6) -> list[Period]:
    """Turn per-window cluster labels into contiguous background periods.

    Runs of at least ``min_run`` windows become periods.  Shorter runs between
    two periods are absorbed by the neighbour whose cluster centroid lies
    nearer the short run's mean feature vector; the split point between the
    two neighbours is placed to agree with as many of those preferences as
    possible, so periods stay contiguous.  Adjacent periods sharing a label
    are then merged.
    """
    labels = [int(v) for v in labels]
    n = len(labels)
    if n == 0:
        return []
    runs = _runs(labels)
    long_idx = [i for i, r in enumerate(runs) if len(r) >= min_run]
    if not long_idx:
        values, counts = np.unique(labels, return_counts=True)
        return [Period(0, n, int(values[np.argmax(counts)]))]

    x = None if features is None else np.asarray(features, dtype=float).reshape(n, -1)
    centroids = {}
    if x is not None:
        arr = np.asarray(labels)
        for lab in set(labels):
            centroids[lab] = x[arr == lab].mean(axis=0)

    bounds = [[runs[i].start, runs[i].end, runs[i].label] for i in long_idx]
    bounds[0][0] = 0
    bounds[-1][1] = n
    for left, right in zip(bounds, bounds[1:]):
        gap = [r for r in runs if left[1] <= r.start and r.end <= right[0]]
        if not gap:
            continue
        prefs = []
        for r in gap:
            if x is None or left[2] == right[2]:
                prefs.append(0)
                continue
            mean = x[r.start:r.end].mean(axis=0)
            dl = float(np.sum((mean - centroids[left[2]]) ** 2))
            dr = float(np.sum((mean - centroids[right[2]]) ** 2))
            prefs.append(0 if dl <= dr else 1)
        # split s: gap[:s] -> left, gap[s:] -> right
        best_s, best_agree = 0, -1
        for s in range(len(gap) + 1):
            agree = sum(1 for j, p in enumerate(prefs) if (p == 0) == (j < s))
            if agree > best_agree:
                best_s, best_agree = s, agree
        boundary = gap[best_s].start if best_s < len(gap) else gap[-1].end
        left[1] = boundary
        right[0] = boundary

    merged: list[list[int]] = []
    for b in bounds:
        if merged and merged[-1][2] == b[2]:
            merged[-1][1] = b[1]
        else:
            merged.append(list(b))
    return [Period(s, e, lab) for s, e, lab in merged]


def chi_square_scores(features, alpha: float = 0.95, reading: str = "retain") -> tuple[np.ndarray, PcaModel]:
    """Sum of squared standardized PC scores over the retained components.

    Raises DegenerateData when the period has no spread.
    """
    model = fit_pca(features, alpha, reading)
    z = model.standardized_scores(features)
    return np.sum(z * z, axis=1), model


@dataclass
class ActivityMarks:
    eta: np.ndarray
    chi2: np.ndarray
    beta: float


def detect_activity(chi2, beta: float) -> ActivityMarks:
    """1 where chi2 >= beta (inclusive), else 0; NaN scores stay NaN."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    chi2 = np.asarray(chi2, dtype=float)
    eta = np.where(np.isnan(chi2), np.nan, (chi2 >= beta).astype(float))
    return ActivityMarks(eta, chi2, float(beta))


def empirical_beta(chi2_values, q: float = 0.85) -> float:
    return cdf_threshold(np.asarray(chi2_values, dtype=float), q)
