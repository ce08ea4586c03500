"""Deduplication, 5-minute window alignment and temporal filtering."""

from __future__ import annotations

import csv
import datetime as dt
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidConfig, InvalidSelector
from .ingest import SYMBOLS, ValidatedReading, format_number

WINDOW_MS = 300_000
DAY_MS = 86_400_000
HOUR_MS = 3_600_000
WINDOWS_PER_DAY = DAY_MS // WINDOW_MS
DEFAULT_UTC_OFFSET = "+08:00"

# column order of the frame, symbol -> reading field
COLUMN_KINDS = {
    "M": "motion", "X": "noise", "K": "temperature", "L": "lux",
    "R": "rain", "U": "uv", "B": "barometer", "H": "humidity",
}
ACCUMULATIVE = ("motion", "noise")
SNAPSHOT = ("temperature", "lux", "rain", "uv", "barometer", "humidity")

_OFFSET_RE = re.compile(r"([+-])(\d{2}):?(\d{2})")


def parse_utc_offset(text: str | int) -> int:
    """'+08:00' -> 480 (minutes east of UTC)."""
    if isinstance(text, int):
        return text
    text = text.strip()
    if text.upper() in ("Z", "UTC"):
        return 0
    m = _OFFSET_RE.fullmatch(text)
    if not m:
        raise InvalidConfig(f"bad UTC offset {text!r}; expected e.g. +08:00")
    minutes = int(m.group(2)) * 60 + int(m.group(3))
    if minutes > 14 * 60 or int(m.group(3)) >= 60:
        raise InvalidConfig(f"UTC offset out of range: {text!r}")
    return minutes if m.group(1) == "+" else -minutes


def format_utc_offset(minutes: int) -> str:
    sign = "+" if minutes >= 0 else "-"
    return f"{sign}{abs(minutes) // 60:02d}:{abs(minutes) % 60:02d}"


def window_floor(timestamp_ms):
    return (np.asarray(timestamp_ms, dtype=np.int64) // WINDOW_MS) * WINDOW_MS


def local_day(timestamp_ms, utc_offset_min: int = 480):
    """Days since 1970-01-01 in local time."""
    return (np.asarray(timestamp_ms, dtype=np.int64) + utc_offset_min * 60_000) // DAY_MS


def day_of_week(timestamp_ms, utc_offset_min: int = 480):
    """Monday=0 .. Sunday=6."""
    return (local_day(timestamp_ms, utc_offset_min) + 3) % 7


def local_hour(timestamp_ms, utc_offset_min: int = 480):
    local = np.asarray(timestamp_ms, dtype=np.int64) + utc_offset_min * 60_000
    return (local % DAY_MS) // HOUR_MS


def day_to_date(day_index: int) -> dt.date:
    return dt.date(1970, 1, 1) + dt.timedelta(days=int(day_index))


def date_to_day(date: dt.date) -> int:
    return (date - dt.date(1970, 1, 1)).days


def local_midnight_ms(date: dt.date, utc_offset_min: int = 480) -> int:
    return date_to_day(date) * DAY_MS - utc_offset_min * 60_000


@dataclass
class AlignedFrame:
    """Window x sensor matrix for one node.

    ``columns`` maps reading kind to an array: ``noise`` is (n, 5), the rest
    are (n,).  Missing cells are NaN.
    """

    node_uid: str
    window_start: np.ndarray
    columns: dict[str, np.ndarray]
    conflicts: int = 0
    duplicates: int = 0

    def __len__(self) -> int:
        return len(self.window_start)

    def __getitem__(self, kind: str) -> np.ndarray:
        return self.columns[kind]

    def present(self, kind: str) -> np.ndarray:
        col = self.columns[kind]
        if col.ndim == 2:
            return ~np.isnan(col).any(axis=1)
        return ~np.isnan(col)

    def take(self, mask_or_index) -> "AlignedFrame":
        return AlignedFrame(
            self.node_uid,
            self.window_start[mask_or_index],
            {k: v[mask_or_index] for k, v in self.columns.items()},
            self.conflicts,
            self.duplicates,
        )

    def to_readings(self) -> list[ValidatedReading]:
        """Render each non-empty row back to a reading stamped at window start."""
        out = []
        for i, ws in enumerate(self.window_start):
            values = {}
            for kind, col in self.columns.items():
                if col.ndim == 2:
                    if not np.isnan(col[i]).any():
                        values[kind] = tuple(float(v) for v in col[i])
                elif not np.isnan(col[i]):
                    values[kind] = float(col[i])
            if values:
                out.append(ValidatedReading(int(ws), self.node_uid, **values))
        return out

    def manifest(self) -> dict:
        n = len(self)
        return {
            "node": self.node_uid,
            "first_window": int(self.window_start[0]) if n else None,
            "last_window": int(self.window_start[-1]) if n else None,
            "n_windows": n,
            "present": {sym: int(self.present(kind).sum()) for sym, kind in COLUMN_KINDS.items()},
            "conflicts": int(self.conflicts),
            "duplicates": int(self.duplicates),
        }

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["window_start", *SYMBOLS])
            for i, ws in enumerate(self.window_start):
                row = [str(int(ws))]
                for sym in SYMBOLS:
                    col = self.columns[COLUMN_KINDS[sym]]
                    if col.ndim == 2:
                        cell = "" if np.isnan(col[i]).any() else ",".join(format_number(v) for v in col[i])
                    else:
                        cell = "" if np.isnan(col[i]) else format_number(col[i])
                    row.append(cell)
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path, node_uid: str | None = None,
                 conflicts: int = 0, duplicates: int = 0) -> "AlignedFrame":
        path = Path(path)
        starts: list[int] = []
        cols: dict[str, list] = {kind: [] for kind in COLUMN_KINDS.values()}
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["window_start", *SYMBOLS]:
                raise InvalidConfig(f"{path}: unexpected frame header {header}")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise InvalidConfig(f"{path}:{lineno}: expected {len(header)} cells")
                try:
                    starts.append(int(row[0]))
                    for sym, cell in zip(SYMBOLS, row[1:]):
                        kind = COLUMN_KINDS[sym]
                        if kind == "noise":
                            cols[kind].append([float(v) for v in cell.split(",")] if cell else [np.nan] * 5)
                        else:
                            cols[kind].append(float(cell) if cell else np.nan)
                except ValueError as exc:
                    raise InvalidConfig(f"{path}:{lineno}: {exc}") from exc
        columns = {
            kind: np.array(vals, dtype=float).reshape(-1, 5) if kind == "noise" else np.array(vals, dtype=float)
            for kind, vals in cols.items()
        }
        return cls(node_uid or path.stem, np.array(starts, dtype=np.int64), columns, conflicts, duplicates)


def _empty_columns(n: int) -> dict[str, np.ndarray]:
    cols = {kind: np.full(n, np.nan) for kind in COLUMN_KINDS.values()}
    cols["noise"] = np.full((n, 5), np.nan)
    return cols


def deduplicate(readings: Sequence[ValidatedReading]) -> tuple[list[ValidatedReading], int]:
    """Drop exact repeats (same timestamp and field values); first copy wins.

    Returns the surviving readings and the number removed.
    """
    out: list[ValidatedReading] = []
    seen: set[ValidatedReading] = set()
    current_ts = None
    removed = 0
    for reading in readings:
        if reading.timestamp != current_ts:
            current_ts = reading.timestamp
            seen.clear()
        if reading in seen:
            removed += 1
            continue
        seen.add(reading)
        out.append(reading)
    return out, removed


def align_to_windows(readings: Sequence[ValidatedReading], node_uid: str | None = None,
                     start: int | None = None, end: int | None = None,
                     duplicates: int = 0) -> AlignedFrame:
    """Snap readings onto the 300 s grid.

    Snapshot sensors keep the first value seen in a window; motion and the
    noise histogram keep the reading with the larger accumulated total.  Any
    later differing value counts as a conflict.  ``start``/``end`` (inclusive
    window starts) extend the grid so that several nodes share one range.
    """
    if node_uid is None:
        node_uid = readings[0].node_uid if readings else ""
    if readings:
        lo = int(window_floor(min(r.timestamp for r in readings)))
        hi = int(window_floor(max(r.timestamp for r in readings)))
    else:
        lo, hi = None, None
    if start is not None:
        start = int(window_floor(start))
        lo = start if lo is None else min(lo, start)
    if end is not None:
        end = int(window_floor(end))
        hi = end if hi is None else max(hi, end)
    if lo is None:
        return AlignedFrame(node_uid, np.zeros(0, dtype=np.int64), _empty_columns(0), 0, duplicates)

    window_start = np.arange(lo, hi + WINDOW_MS, WINDOW_MS, dtype=np.int64)
    cols = _empty_columns(len(window_start))
    conflicts = 0
    for reading in readings:
        row = (reading.timestamp // WINDOW_MS * WINDOW_MS - lo) // WINDOW_MS
        for kind, value in reading.present().items():
            col = cols[kind]
            if kind == "noise":
                if np.isnan(col[row, 0]):
                    col[row] = value
                elif tuple(col[row]) != tuple(value):
                    conflicts += 1
                    if sum(value) > col[row].sum():
                        col[row] = value
            elif np.isnan(col[row]):
                col[row] = value
            elif col[row] != value:
                conflicts += 1
                if kind == "motion" and value > col[row]:
                    col[row] = value
    return AlignedFrame(node_uid, window_start, cols, conflicts, duplicates)


@dataclass(frozen=True)
class TemporalSelector:
    mode: str = "all"
    date: dt.date | None = None
    start: dt.date | None = None
    end: dt.date | None = None

    MODES = ("all", "weekday", "weekend", "specific-date", "date-range")

    def __post_init__(self):
        if self.mode not in self.MODES:
            raise InvalidSelector(f"unknown selector mode {self.mode!r}")
        if self.mode == "specific-date" and self.date is None:
            raise InvalidSelector("specific-date needs a date")
        if self.mode == "date-range":
            if self.start is None or self.end is None or self.start > self.end:
                raise InvalidSelector("date-range needs start <= end")

    @classmethod
    def parse(cls, text: str) -> "TemporalSelector":
        """'all' | 'weekday' | 'weekend' | 'YYYY-MM-DD' | 'YYYY-MM-DD..YYYY-MM-DD'."""
        text = text.strip()
        if text in ("all", "weekday", "weekend"):
            return cls(text)
        for prefix in ("specific-date:", "date-range:"):
            if text.startswith(prefix):
                text = text[len(prefix):]
        try:
            if ".." in text:
                a, b = text.split("..", 1)
                return cls("date-range", start=dt.date.fromisoformat(a), end=dt.date.fromisoformat(b))
            return cls("specific-date", date=dt.date.fromisoformat(text))
        except ValueError as exc:
            raise InvalidSelector(f"bad selector {text!r}: {exc}") from exc

    def __str__(self) -> str:
        if self.mode == "specific-date":
            return self.date.isoformat()
        if self.mode == "date-range":
            return f"{self.start.isoformat()}..{self.end.isoformat()}"
        return self.mode

    def mask(self, window_start: np.ndarray, utc_offset_min: int = 480) -> np.ndarray:
        window_start = np.asarray(window_start, dtype=np.int64)
        if self.mode == "all":
            return np.ones(len(window_start), dtype=bool)
        if self.mode in ("weekday", "weekend"):
            dow = day_of_week(window_start, utc_offset_min)
            return dow < 5 if self.mode == "weekday" else dow >= 5
        day = local_day(window_start, utc_offset_min)
        if self.mode == "specific-date":
            return day == date_to_day(self.date)
        return (day >= date_to_day(self.start)) & (day <= date_to_day(self.end))


def filter_temporal(frame: AlignedFrame, selector: TemporalSelector | str,
                    utc_offset_min: int = 480) -> AlignedFrame:
    if isinstance(selector, str):
        selector = TemporalSelector.parse(selector)
    if not isinstance(selector, TemporalSelector):
        raise InvalidSelector(f"not a selector: {selector!r}")
    if selector.mode == "all":
        return frame
    return frame.take(selector.mask(frame.window_start, utc_offset_min))


def build_frames(readings_by_node: dict[str, list[ValidatedReading]],
                 start: int | None = None, end: int | None = None) -> dict[str, AlignedFrame]:
    """Deduplicate and align every node onto one shared window range."""
    if start is None and end is None:
        stamps = [r.timestamp for rs in readings_by_node.values() for r in rs]
        if stamps:
            start, end = min(stamps), max(stamps)
    frames = {}
    for uid, readings in readings_by_node.items():
        unique, removed = deduplicate(readings)
        frames[uid] = align_to_windows(unique, uid, start, end, duplicates=removed)
    return frames
