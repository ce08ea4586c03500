"""PCA with projection-error based component selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateData

ALPHA_READINGS = ("retain", "literal")


def error_threshold(alpha: float = 0.95, reading: str = "retain") -> float:
    """Bound on the projection-error ratio.

    ``retain`` keeps ``alpha`` of the signal (ratio <= 1 - alpha); ``literal``
    uses ``alpha`` itself as the bound.
    """
    if reading == "retain":
        return 1.0 - alpha
    if reading == "literal":
        return alpha
    raise ValueError(f"alpha reading must be one of {ALPHA_READINGS}")


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray        # (d, d) columns are components, by decreasing variance
    variances: np.ndarray    # sample variances (ddof=1), non-increasing
    error_ratios: np.ndarray  # ratio for p = 1..d
    p: int

    def scores(self, x, p: int | None = None) -> np.ndarray:
        p = self.p if p is None else p
        return (np.asarray(x, dtype=float) - self.mean) @ self.basis[:, :p]

    def standardized_scores(self, x, p: int | None = None) -> np.ndarray:
        p = self.p if p is None else p
        return self.scores(x, p) / np.sqrt(self.variances[:p])

    def reconstruct(self, x, p: int | None = None) -> np.ndarray:
        p = self.p if p is None else p
        return self.mean + self.scores(x, p) @ self.basis[:, :p].T


def fit_pca(features, alpha: float = 0.95, reading: str = "retain") -> PcaModel:
    """Eigen-decompose the centred scatter and choose ``p``.

    ``p`` is the smallest count whose summed squared reconstruction error,
    divided by the summed squared norm of the raw (uncentred) samples, is at
    most the threshold.  The residual for ``p`` components equals the sum of
    the discarded scatter eigenvalues.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or len(x) < 2:
        raise DegenerateData("need at least 2 samples")
    mean = x.mean(axis=0)
    centred = x - mean
    scatter = centred.T @ centred
    evals, evecs = np.linalg.eigh(scatter)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = float(np.sum(x * x))
    if evals[0] <= 1e-12 * max(total, 1.0) or total == 0.0:
        raise DegenerateData("no variance to decompose")
    # rank cut-off: directions with numerically zero spread are not usable components
    rank = int(np.sum(evals > evals[0] * 1e-12))
    tail = np.concatenate([np.cumsum(evals[::-1])[::-1][1:], [0.0]])
    ratios = tail / total
    bound = error_threshold(alpha, reading)
    p = int(np.argmax(ratios <= bound)) + 1
    p = min(p, rank)
    return PcaModel(mean, evecs, evals / (len(x) - 1), ratios, p)
