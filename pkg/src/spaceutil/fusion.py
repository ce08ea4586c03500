"""Motion/sound fusion, day-of-week x hour heatmaps and their export."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import EmptySelection, InvalidConfig
from .timeline import TemporalSelector, day_of_week, local_hour

DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
EXPORT_FORMATS = ("csv", "json", "svg")


def fuse(eta_m, eta_n):
    """Per-window max of motion and sound utilization; missing counts as 0."""
    m = np.nan_to_num(np.asarray(eta_m, dtype=float), nan=0.0)
    s = np.nan_to_num(np.asarray(eta_n, dtype=float), nan=0.0)
    out = np.maximum(m, s)
    return float(out) if out.ndim == 0 else out


@dataclass
class UtilizationSeries:
    node_uid: str
    window_start: np.ndarray
    eta_m: np.ndarray
    eta_n: np.ndarray
    eta: np.ndarray
    weather: list[str | None] | None = None
    missing_motion: int = 0
    missing_sound: int = 0

    def __len__(self) -> int:
        return len(self.window_start)

    def take(self, mask) -> "UtilizationSeries":
        weather = None if self.weather is None else [w for w, k in zip(self.weather, mask) if k]
        return UtilizationSeries(self.node_uid, self.window_start[mask], self.eta_m[mask],
                                 self.eta_n[mask], self.eta[mask], weather,
                                 self.missing_motion, self.missing_sound)

    def records(self) -> list[dict]:
        out = []
        for i, ws in enumerate(self.window_start):
            rec = {
                "window_start": int(ws),
                "eta_M": _num(self.eta_m[i]),
                "eta_N": _num(self.eta_n[i]),
                "eta": _num(self.eta[i]),
            }
            if self.weather is not None:
                rec["weather"] = self.weather[i]
            out.append(rec)
        return out

    @classmethod
    def from_records(cls, node_uid: str, records: list[dict]) -> "UtilizationSeries":
        ws = np.array([r["window_start"] for r in records], dtype=np.int64)
        get = lambda key: np.array([np.nan if r.get(key) is None else r[key] for r in records], dtype=float)
        weather = [r.get("weather") for r in records] if records and "weather" in records[0] else None
        return cls(node_uid, ws, get("eta_M"), get("eta_N"), get("eta"), weather)


def _num(value, places: int = 6):
    value = float(value)
    return None if np.isnan(value) else round(value, places)


def build_series(node_uid: str, window_start, eta_m, eta_n,
                 weather: list[str | None] | None = None) -> UtilizationSeries:
    """Fuse aligned channels; windows with neither channel are dropped."""
    window_start = np.asarray(window_start, dtype=np.int64)
    eta_m = np.asarray(eta_m, dtype=float)
    eta_n = np.asarray(eta_n, dtype=float)
    keep = ~(np.isnan(eta_m) & np.isnan(eta_n))
    missing_m = int(np.sum(np.isnan(eta_m) & keep))
    missing_n = int(np.sum(np.isnan(eta_n) & keep))
    eta = fuse(eta_m[keep], eta_n[keep])
    w = None if weather is None else [x for x, k in zip(weather, keep) if k]
    return UtilizationSeries(node_uid, window_start[keep], eta_m[keep], eta_n[keep],
                             np.atleast_1d(eta), w, missing_m, missing_n)


@dataclass
class Heatmap:
    """7 x 24 grid (Mon..Sun x local hour) of mean utilization and counts."""

    mean: np.ndarray     # NaN where the cell has no windows
    count: np.ndarray
    selector: str = "all"
    node_uid: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dow", *[f"h{h:02d}" for h in range(24)]])
        for d in range(7):
            writer.writerow([DAY_NAMES[d], *["" if np.isnan(v) else f"{v:.6f}" for v in self.mean[d]]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "node": self.node_uid,
            "selector": self.selector,
            "rows": list(DAY_NAMES),
            "mean": [[_num(v) for v in row] for row in self.mean],
            "count": self.count.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Heatmap":
        mean = np.array([[np.nan if v is None else v for v in row] for row in raw["mean"]], dtype=float)
        return cls(mean, np.array(raw["count"], dtype=int), raw.get("selector", "all"), raw.get("node", ""))


def pool_series(series: Mapping[str, UtilizationSeries], node_uid: str = "all-nodes") -> UtilizationSeries:
    """Concatenate several nodes' windows so one heatmap covers the whole space."""
    items = [series[k] for k in sorted(series)]
    if not items:
        raise EmptySelection("no series to pool")
    weather = None
    if all(s.weather is not None for s in items):
        weather = [w for s in items for w in s.weather]
    cat = lambda attr: np.concatenate([getattr(s, attr) for s in items])
    return UtilizationSeries(node_uid, cat("window_start"), cat("eta_m"), cat("eta_n"), cat("eta"), weather,
                             sum(s.missing_motion for s in items), sum(s.missing_sound for s in items))


def aggregate_heatmap(series: UtilizationSeries, selector: TemporalSelector | str = "all",
                      utc_offset_min: int = 480, weather: str | None = None) -> Heatmap:
    """Average fused utilization per (local weekday, local hour) cell.

    ``weather`` keeps only windows carrying that weather tag.
    """
    if isinstance(selector, str):
        selector = TemporalSelector.parse(selector)
    mask = selector.mask(series.window_start, utc_offset_min)
    if weather is not None:
        if series.weather is None:
            raise InvalidConfig("series carries no weather tags")
        mask &= np.array([w == weather for w in series.weather], dtype=bool)
    ws = series.window_start[mask]
    eta = series.eta[mask]
    if len(ws) == 0:
        raise EmptySelection(f"no windows selected by {selector}")
    cell = day_of_week(ws, utc_offset_min) * 24 + local_hour(ws, utc_offset_min)
    count = np.bincount(cell, minlength=168).astype(int)
    total = np.bincount(cell, weights=eta, minlength=168)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    label = str(selector) if weather is None else f"{selector}/{weather}"
    return Heatmap(mean.reshape(7, 24), count.reshape(7, 24), label, series.node_uid)


def export(obj, path: str | Path, fmt: str | None = None, *, vmax: float = 0.5) -> Path:
    """Write a Heatmap (csv/json/svg) or UtilizationSeries (csv/json).

    ``vmax`` is the top of the SVG colour ramp; 0.5 by default, 1.0 for the
    full range.
    """
    path = Path(path)
    fmt = fmt or path.suffix.lstrip(".").lower()
    if fmt not in EXPORT_FORMATS:
        raise InvalidConfig(f"format must be one of {EXPORT_FORMATS}")
    if isinstance(obj, Heatmap):
        if fmt == "csv":
            path.write_text(obj.to_csv(), encoding="utf-8")
        elif fmt == "json":
            path.write_text(json.dumps(obj.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        else:
            from .plotting import heatmap_figure, save_figure
            save_figure(heatmap_figure(obj, vmax=vmax), path)
        return path
    if isinstance(obj, UtilizationSeries):
        if fmt == "json":
            payload = {"node": obj.node_uid, "records": obj.records()}
            path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
        elif fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["window_start", "eta_M", "eta_N", "eta"])
                for rec in obj.records():
                    writer.writerow([rec["window_start"], *("" if rec[k] is None else f"{rec[k]:.6f}"
                                                            for k in ("eta_M", "eta_N", "eta"))])
        else:
            raise InvalidConfig("series export supports csv and json only")
        return path
    raise TypeError(f"cannot export {type(obj).__name__}")


def write_series_json(path: str | Path, series: Mapping[str, UtilizationSeries],
                      utc_offset: str = "+08:00") -> None:
    payload = {
        "utc_offset": utc_offset,
        "nodes": {uid: s.records() for uid, s in sorted(series.items())},
        "missing": {uid: {"motion": s.missing_motion, "sound": s.missing_sound}
                    for uid, s in sorted(series.items())},
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def read_series_json(path: str | Path) -> tuple[dict[str, UtilizationSeries], str]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        series = {uid: UtilizationSeries.from_records(uid, recs) for uid, recs in raw["nodes"].items()}
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"{path}: not a series file ({exc})") from exc
    return series, raw.get("utc_offset", "+08:00")
