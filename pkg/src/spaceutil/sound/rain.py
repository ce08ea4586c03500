"""Rain detection from jointly clustered multi-node sound features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..errors import DegenerateData, TooFewNodes, TooFewSamples, ZeroVariance
from ..timeline import WINDOW_MS
from .clustering import LINKAGES, choose_k, cluster_select
from .haar import inverse_haar_transform
from .pca import fit_pca


@dataclass(frozen=True)
class RainInterval:
    start: int  # window_start of the first rainy window, epoch ms
    end: int    # exclusive: window_start of the last rainy window + 300 s

    @property
    def n_windows(self) -> int:
        return (self.end - self.start) // WINDOW_MS


def sound_level(features) -> np.ndarray:
    """Mean bin index (0..4) of each histogram recovered from Haar features."""
    hist = inverse_haar_transform(np.asarray(features, dtype=float))[..., :5]
    hist = np.clip(hist, 0.0, None)
    total = hist.sum(axis=-1)
    level = hist @ np.arange(5.0)
    return np.divide(level, total, out=np.zeros_like(level), where=total > 0)


def detect_rain(streams: Mapping[str, tuple[Sequence[int], np.ndarray]], q: float = 0.7,
                min_len: int = 2, min_level_rise: float = 1.0, alpha: float = 0.95,
                reading: str = "retain", linkages: Sequence[str] = LINKAGES,
                k_range: Sequence[int] = range(2, 11),
                ch_denominator: str = "standard") -> list[RainInterval]:
    """Find windows where most nodes share one loud cluster.

    ``streams`` maps node uid to (window_starts, features).  All nodes' windows
    are pooled and clustered together.  A window is a rain candidate when at
    least ``q`` of all nodes report and at least ``q`` of the reporting nodes
    fall in one cluster whose mean sound level exceeds the pooled day's mean
    by ``min_level_rise`` bins.  Candidate runs of ``min_len`` or more
    consecutive windows are returned.
    """
    nodes = [uid for uid, (ws, _) in streams.items() if len(ws)]
    if len(nodes) < 2:
        raise TooFewNodes("rain detection needs at least 2 reporting nodes")
    windows, owners, feats = [], [], []
    for j, uid in enumerate(nodes):
        ws, x = streams[uid]
        windows.append(np.asarray(ws, dtype=np.int64))
        owners.append(np.full(len(ws), j))
        feats.append(np.asarray(x, dtype=float).reshape(len(ws), -1))
    windows = np.concatenate(windows)
    owners = np.concatenate(owners)
    x = np.concatenate(feats)
    if len(x) < 3:
        return []
    try:
        model = fit_pca(x, alpha, reading)
    except DegenerateData:
        return []
    z = model.standardized_scores(x)
    try:
        dendro, _ = cluster_select(z, linkages)
    except (ZeroVariance, TooFewSamples):
        return []
    labels = choose_k(dendro, z, k_range, ch_denominator).labels

    level = sound_level(x)
    pooled_level = level.mean()
    loud = [lab for lab in np.unique(labels)
            if level[labels == lab].mean() - pooled_level >= min_level_rise]
    if not loud:
        return []

    uniq, inverse = np.unique(windows, return_inverse=True)
    reporting = np.bincount(inverse, minlength=len(uniq))
    candidate = np.zeros(len(uniq), dtype=bool)
    enough = reporting >= q * len(nodes)
    for lab in loud:
        in_cluster = np.bincount(inverse, weights=(labels == lab).astype(float), minlength=len(uniq))
        candidate |= enough & (in_cluster >= q * reporting)

    intervals = []
    i = 0
    while i < len(uniq):
        if not candidate[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(uniq) and candidate[j + 1] and uniq[j + 1] - uniq[j] == WINDOW_MS:
            j += 1
        if j - i + 1 >= min_len:
            intervals.append(RainInterval(int(uniq[i]), int(uniq[j]) + WINDOW_MS))
        i = j + 1
    return intervals
