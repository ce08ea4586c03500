"""PIR false-alarm calibration and motion utilization.

Chain per window: weather likelihoods of temperature and lux are averaged
into ``p_alpha``; a 10-bin deduction table maps ``p_alpha`` to an expected
false-alarm count ``D``; the raw count is reduced by ``D`` (floored at 0),
rescaled by ``G / (G - D)`` and finally normalized to [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (DeductionAtCapacity, EmptyInput, InsufficientBins,
                     InvalidConfig, ZeroVariance)

G_MAX = 100.0
N_BINS = 10
DEDUCTION_BOOST = 1.5
MAX_DEDUCTION = 99.0


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson r over the pairs where both values are present."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("series must have equal length")
    keep = ~(np.isnan(x) | np.isnan(y))
    x, y = x[keep], y[keep]
    if len(x) < 2:
        raise EmptyInput("need at least 2 complete pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class LikelihoodBounds:
    sensor: str
    delta_low: float
    delta_high: float

    def __post_init__(self):
        if not self.delta_low < self.delta_high:
            raise InvalidConfig(f"{self.sensor}: delta_low must be < delta_high")


DEFAULT_BOUNDS = (
    LikelihoodBounds("temperature", 28.0, 40.0),
    LikelihoodBounds("lux", 8000.0, 33000.0),
)


def likelihood(value, bounds: LikelihoodBounds):
    """Piecewise-linear ramp: 0 at or below delta_low, 1 at or above delta_high."""
    v = np.asarray(value, dtype=float)
    out = np.clip((v - bounds.delta_low) / (bounds.delta_high - bounds.delta_low), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def aggregate_likelihood(values: Sequence[float]) -> float:
    if len(values) == 0:
        raise EmptyInput("no likelihoods to aggregate")
    return float(sum(values) / len(values))


def p_alpha_series(columns: dict[str, np.ndarray],
                   bounds: Sequence[LikelihoodBounds] = DEFAULT_BOUNDS) -> np.ndarray:
    """Vectorized aggregate likelihood; a missing reading contributes 0."""
    total = None
    for b in bounds:
        f = np.nan_to_num(likelihood(np.asarray(columns[b.sensor], dtype=float), b), nan=0.0)
        total = f if total is None else total + f
    return total / len(bounds)


def bin_edges(n_bins: int = N_BINS) -> np.ndarray:
    return np.array([i / n_bins for i in range(n_bins + 1)])


def bin_index(p_alpha, n_bins: int = N_BINS):
    """Index of the half-open bin (low, high] holding p; 0 maps to bin 0."""
    highs = bin_edges(n_bins)[1:]
    idx = np.searchsorted(highs, np.asarray(p_alpha, dtype=float), side="left")
    return np.clip(idx, 0, n_bins - 1)


@dataclass
class DeductionTable:
    """Ten (lambda_low, lambda_high, d) rows plus the cubic they came from.

    ``fitted`` holds the cubic coefficients, highest power first.
    ``bin_means`` are the raw per-bin mean false-alarm counts (None for an
    empty bin) kept for plotting and audit.
    """

    lambda_low: list[float]
    lambda_high: list[float]
    d: list[float]
    fitted: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0, 0.0])
    bin_means: list[float | None] = field(default_factory=list)
    bin_counts: list[int] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.d)
        if not (len(self.lambda_low) == len(self.lambda_high) == n) or n == 0:
            raise InvalidConfig("deduction table rows are ragged")
        if self.lambda_low[0] != 0.0 or self.lambda_high[-1] != 1.0:
            raise InvalidConfig("deduction bins must cover (0, 1]")
        for i in range(n):
            if not self.lambda_low[i] < self.lambda_high[i]:
                raise InvalidConfig(f"bin {i} is empty")
            if i and self.lambda_low[i] != self.lambda_high[i - 1]:
                raise InvalidConfig(f"bin {i} is not contiguous with bin {i - 1}")
        if any(not 0.0 <= v < G_MAX for v in self.d):
            raise InvalidConfig("deduction values must lie in [0, 100)")
        if any(b < a for a, b in zip(self.d, self.d[1:])):
            raise InvalidConfig("deduction values must be non-decreasing")

    @classmethod
    def zeros(cls, n_bins: int = N_BINS) -> "DeductionTable":
        edges = bin_edges(n_bins)
        return cls(list(edges[:-1]), list(edges[1:]), [0.0] * n_bins)

    def to_dict(self) -> dict:
        return {
            "bins": [[lo, hi, d] for lo, hi, d in zip(self.lambda_low, self.lambda_high, self.d)],
            "fitted": list(self.fitted),
            "bin_means": list(self.bin_means),
            "bin_counts": list(self.bin_counts),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DeductionTable":
        try:
            bins = raw["bins"]
            return cls(
                [float(b[0]) for b in bins],
                [float(b[1]) for b in bins],
                [float(b[2]) for b in bins],
                [float(c) for c in raw.get("fitted", [0.0, 0.0, 0.0, 0.0])],
                list(raw.get("bin_means", [])),
                [int(c) for c in raw.get("bin_counts", [])],
            )
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise InvalidConfig(f"bad deduction table: {exc}") from exc


def fit_deduction_table(samples: Iterable[tuple[float, float]],
                        n_bins: int = N_BINS, boost: float = DEDUCTION_BOOST) -> DeductionTable:
    """Fit the deduction table from (p_alpha, raw_motion) false-alarm samples.

    Samples are bucketed into equal-width p_alpha bins; each occupied bin's
    mean count is scaled by ``boost`` and a cubic is least-squares fitted
    through the occupied bin centers.  Every bin then takes the cubic's value
    at its center, clipped to [0, MAX_DEDUCTION] and forced non-decreasing.
    """
    data = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    edges = bin_edges(n_bins)
    centers = (edges[:-1] + edges[1:]) / 2
    idx = bin_index(data[:, 0], n_bins) if len(data) else np.zeros(0, dtype=int)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=data[:, 1], minlength=n_bins) if len(data) else np.zeros(n_bins)
    occupied = counts > 0
    if occupied.sum() < 4:
        raise InsufficientBins(f"cubic fit needs >= 4 occupied bins, got {int(occupied.sum())}")
    means = np.where(occupied, sums / np.maximum(counts, 1), np.nan)
    coeffs = np.polyfit(centers[occupied], boost * means[occupied], 3)
    d = np.clip(np.polyval(coeffs, centers), 0.0, MAX_DEDUCTION)
    d = np.maximum.accumulate(d)
    # float noise from a flat fit must not leave tiny negative/positive dust
    d = np.round(d, 9) + 0.0
    return DeductionTable(
        list(edges[:-1]), list(edges[1:]), [float(v) for v in d],
        [float(c) for c in coeffs],
        [None if not o else float(m) for o, m in zip(occupied, means)],
        [int(c) for c in counts],
    )


def deduction(p_alpha, table: DeductionTable):
    p = np.asarray(p_alpha, dtype=float)
    d = np.asarray(table.d, dtype=float)
    highs = np.asarray(table.lambda_high)
    idx = np.clip(np.searchsorted(highs, p, side="left"), 0, len(d) - 1)
    out = np.where(p <= table.lambda_low[0], 0.0, d[idx])
    return float(out) if out.ndim == 0 else out


def calibrate(m_t, d_t):
    out = np.maximum(np.asarray(m_t, dtype=float) - np.asarray(d_t, dtype=float), 0.0)
    return float(out) if out.ndim == 0 else out


def rescale(m_prime, d_t, g: float = G_MAX):
    d = np.asarray(d_t, dtype=float)
    if np.any(d >= g):
        raise DeductionAtCapacity(f"deduction {float(np.max(d))} >= G={g}")
    out = np.asarray(m_prime, dtype=float) * (g / (g - d))
    return float(out) if out.ndim == 0 else out


def cdf_threshold(values: Iterable[float], q: float = 0.85) -> float:
    """Smallest v with empirical CDF(v) >= q (lower step, no interpolation)."""
    arr = np.sort(np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float))
    arr = arr[~np.isnan(arr)]
    if len(arr) == 0:
        raise EmptyInput("cdf_threshold of empty data")
    if not 0.0 < q <= 1.0:
        raise ValueError("q must be in (0, 1]")
    k = math.ceil(round(q * len(arr), 9))
    return float(arr[max(k, 1) - 1])


def normalize_motion(m_t, norm_value: float):
    if norm_value <= 0:
        raise ValueError("normValue must be positive")
    out = np.minimum(np.asarray(m_t, dtype=float) / norm_value, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass
class CalibrationConfig:
    bounds: tuple[LikelihoodBounds, ...] = DEFAULT_BOUNDS
    table: DeductionTable = field(default_factory=DeductionTable.zeros)
    G: float = G_MAX
    norm_value: float = 10.0

    def __post_init__(self):
        if self.G != G_MAX:
            raise InvalidConfig("G is fixed at 100 motion counts per window")
        if not 0 < self.norm_value <= self.G:
            raise InvalidConfig("normValue must be in (0, G]")

    def to_dict(self) -> dict:
        return {
            "bounds": {b.sensor: [b.delta_low, b.delta_high] for b in self.bounds},
            "table": self.table.to_dict(),
            "G": self.G,
            "normValue": self.norm_value,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CalibrationConfig":
        try:
            bounds = tuple(LikelihoodBounds(k, float(v[0]), float(v[1])) for k, v in raw["bounds"].items())
            return cls(bounds, DeductionTable.from_dict(raw["table"]),
                       float(raw.get("G", G_MAX)), float(raw.get("normValue", 10.0)))
        except (KeyError, TypeError, ValueError, IndexError, AttributeError) as exc:
            raise InvalidConfig(f"bad calibration config: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "CalibrationConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from exc

    @classmethod
    def default(cls) -> "CalibrationConfig":
        text = resources.files("spaceutil").joinpath("data/calibration.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class MotionResult:
    window_start: np.ndarray
    raw: np.ndarray
    p_alpha: np.ndarray
    deduction: np.ndarray
    calibrated: np.ndarray
    scaled: np.ndarray
    eta: np.ndarray


def calibrate_frame(frame, config: CalibrationConfig) -> MotionResult:
    """Run the whole chain over one aligned frame; missing motion stays NaN."""
    raw = np.asarray(frame["motion"], dtype=float)
    p = p_alpha_series(frame.columns, config.bounds)
    d = deduction(p, config.table)
    d = np.atleast_1d(d)
    m_prime = np.atleast_1d(calibrate(raw, d))
    scaled = np.atleast_1d(rescale(m_prime, d, config.G))
    eta = np.atleast_1d(normalize_motion(scaled, config.norm_value))
    return MotionResult(frame.window_start, raw, p, d, m_prime, scaled, eta)


def labeled_samples(frame, false_alarm_windows: set[int],
                    bounds: Sequence[LikelihoodBounds] = DEFAULT_BOUNDS) -> list[tuple[int, float, float, int]]:
    """Rows ``(window_start, p_alpha, raw_motion, is_false_alarm)`` for windows with motion."""
    p = p_alpha_series(frame.columns, bounds)
    raw = frame["motion"]
    rows = []
    for ws, pa, m in zip(frame.window_start, p, raw):
        if np.isnan(m):
            continue
        rows.append((int(ws), float(pa), float(m), int(int(ws) in false_alarm_windows)))
    return rows
