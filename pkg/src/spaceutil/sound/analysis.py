"""Per node-day sound analysis: clustering, background periods, activity."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np

from ..errors import DegenerateData, InvalidConfig, TooFewNodes, TooFewSamples, ZeroVariance
from ..timeline import AlignedFrame, day_to_date, local_day
from .activity import chi_square_scores, detect_activity, empirical_beta, segment_background
from .clustering import CH_DENOMINATORS, LINKAGES, ClusterAssignment, choose_k, cluster_select
from .haar import haar_features
from .pca import ALPHA_READINGS, fit_pca
from .rain import RainInterval, detect_rain


@dataclass
class SoundConfig:
    alpha: float = 0.95
    alpha_reading: str = "retain"
    ch_denominator: str = "standard"
    k_min: int = 2
    k_max: int = 10
    linkages: tuple[str, ...] = LINKAGES
    min_run: int = 6
    q: float = 0.85
    beta: float | None = None        # None: 85th percentile of the run's scores
    rain_q: float = 0.7
    rain_min_len: int = 2
    rain_level_rise: float = 1.0

    def __post_init__(self):
        self.linkages = tuple(self.linkages)
        if self.alpha_reading not in ALPHA_READINGS:
            raise InvalidConfig(f"alpha_reading must be one of {ALPHA_READINGS}")
        if self.ch_denominator not in CH_DENOMINATORS:
            raise InvalidConfig(f"ch_denominator must be one of {CH_DENOMINATORS}")
        if any(m not in LINKAGES for m in self.linkages) or not self.linkages:
            raise InvalidConfig(f"linkages must be drawn from {LINKAGES}")
        if not 2 <= self.k_min <= self.k_max:
            raise InvalidConfig("need 2 <= k_min <= k_max")
        if self.min_run < 1 or self.rain_min_len < 1:
            raise InvalidConfig("run lengths must be >= 1")
        if not (0 < self.alpha < 1 and 0 < self.q <= 1 and 0 < self.rain_q <= 1):
            raise InvalidConfig("alpha, q and rain_q must lie in (0, 1]")
        if self.beta is not None and not self.beta > 0:
            raise InvalidConfig("beta must be positive")

    @property
    def k_range(self) -> range:
        return range(self.k_min, self.k_max + 1)

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SoundConfig":
        raw = dict(raw)
        if raw.get("beta") == "auto":
            raw["beta"] = None
        try:
            return cls(**raw)
        except TypeError as exc:
            raise InvalidConfig(f"bad sound config: {exc}") from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["linkages"] = list(self.linkages)
        out["beta"] = "auto" if self.beta is None else self.beta
        return out


def cluster_features(features, config: SoundConfig) -> ClusterAssignment:
    """PCA -> standardized scores -> best-CCC dendrogram -> best-CH cut."""
    x = np.asarray(features, dtype=float)
    n = len(x)
    if n < 3:
        return ClusterAssignment(np.ones(n, dtype=int), 1, {})
    try:
        model = fit_pca(x, config.alpha, config.alpha_reading)
        z = model.standardized_scores(x)
        dendro, _ = cluster_select(z, config.linkages)
    except (DegenerateData, ZeroVariance, TooFewSamples):
        return ClusterAssignment(np.ones(n, dtype=int), 1, {})
    return choose_k(dendro, z, config.k_range, config.ch_denominator)


@dataclass
class NodeDayResult:
    labels: np.ndarray
    period_index: np.ndarray  # per window, index into periods
    periods: list
    chi2: np.ndarray
    components: list[int]     # retained p per period (0 when degenerate)


def analyze_node_day(features, config: SoundConfig) -> NodeDayResult:
    x = np.asarray(features, dtype=float)
    assignment = cluster_features(x, config)
    labels = assignment.labels
    periods = segment_background(labels, x, config.min_run)
    chi2 = np.zeros(len(x))
    period_index = np.zeros(len(x), dtype=int)
    components = []
    for i, period in enumerate(periods):
        sl = slice(period.start, period.end)
        period_index[sl] = i
        try:
            scores, model = chi_square_scores(x[sl], config.alpha, config.alpha_reading)
        except DegenerateData:
            components.append(0)
            continue
        chi2[sl] = scores
        components.append(model.p)
    return NodeDayResult(labels, period_index, periods, chi2, components)


@dataclass
class NodeSound:
    window_start: np.ndarray
    chi2: np.ndarray          # NaN where no histogram
    cluster: np.ndarray       # 0 where no histogram
    period_id: np.ndarray     # -1 where no histogram
    eta: np.ndarray = field(default=None)


@dataclass
class SoundResult:
    beta: float
    nodes: dict[str, NodeSound]
    rain: dict[str, list[RainInterval]]   # local ISO date -> intervals
    components: list[int]


def node_day_groups(frame: AlignedFrame, utc_offset_min: int) -> dict[int, np.ndarray]:
    """Local day index -> row indices holding a histogram."""
    present = np.flatnonzero(frame.present("noise"))
    days = local_day(frame.window_start[present], utc_offset_min)
    return {int(d): present[days == d] for d in np.unique(days)}


def analyze_frames(frames: Mapping[str, AlignedFrame], config: SoundConfig | None = None,
                   utc_offset_min: int = 480, rain: bool = True) -> SoundResult:
    config = config or SoundConfig()
    nodes: dict[str, NodeSound] = {}
    all_components: list[int] = []
    day_streams: dict[int, dict[str, tuple[np.ndarray, np.ndarray]]] = {}
    for uid, frame in frames.items():
        n = len(frame)
        result = NodeSound(frame.window_start, np.full(n, np.nan), np.zeros(n, dtype=int),
                           np.full(n, -1, dtype=int))
        features = np.zeros((n, 8))
        present = frame.present("noise")
        features[present] = haar_features(frame["noise"][present])
        next_period = 0
        for day, rows in node_day_groups(frame, utc_offset_min).items():
            day_result = analyze_node_day(features[rows], config)
            result.chi2[rows] = day_result.chi2
            result.cluster[rows] = day_result.labels
            result.period_id[rows] = day_result.period_index + next_period
            next_period += len(day_result.periods)
            all_components.extend(day_result.components)
            day_streams.setdefault(day, {})[uid] = (frame.window_start[rows], features[rows])
        nodes[uid] = result

    scores = np.concatenate([r.chi2 for r in nodes.values()]) if nodes else np.zeros(0)
    scores = scores[~np.isnan(scores)]
    if config.beta is not None:
        beta = config.beta
    elif len(scores):
        beta = empirical_beta(scores, config.q)
    else:
        beta = float("nan")
    for result in nodes.values():
        if np.isfinite(beta) and beta > 0:
            result.eta = detect_activity(result.chi2, beta).eta
        else:
            result.eta = np.where(np.isnan(result.chi2), np.nan, 0.0)

    rain_out: dict[str, list[RainInterval]] = {}
    if rain:
        for day in sorted(day_streams):
            try:
                intervals = detect_rain(
                    day_streams[day], config.rain_q, config.rain_min_len, config.rain_level_rise,
                    config.alpha, config.alpha_reading, config.linkages, config.k_range,
                    config.ch_denominator)
            except TooFewNodes:
                continue
            rain_out[day_to_date(day).isoformat()] = intervals
    return SoundResult(beta, nodes, rain_out, all_components)
