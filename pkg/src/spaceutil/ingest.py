"""Raw node log parsing, per-token validation and per-node splitting.

Wire format, one record per line::

    epoch_ms,uid,ID:VALUE;ID:VALUE;...

The noise histogram travels as a single token whose value is five
comma-separated bin counts (``X:10,20,5,3,0``).  Lines starting with ``#``
are comments.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from .errors import AllTokensGarbage, InvalidConfig, MalformedLine

SYMBOLS = ("M", "X", "K", "L", "R", "U", "B", "H")
KINDS = ("motion", "noise", "temperature", "lux", "rain", "uv", "barometer", "humidity")
NOISE_BINS = ("0-6", "6-10", "10-20", "20-50", ">50")

MAX_TIMESTAMP_MS = 253_402_300_799_999  # 9999-12-31T23:59:59.999Z

_TIMESTAMP_RE = re.compile(r"\d{1,15}")
_UID_RE = re.compile(r"[A-Za-z0-9_.\-]{1,64}")
_NUMBER_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d{1,3})?")

DROP_REASONS = ("unknown_id", "unparseable", "out_of_range", "duplicate_id")


@dataclass(frozen=True)
class SensorSpec:
    token: str
    kind: str
    min: float
    max: float
    units: str
    bins: tuple[str, ...] | None = None
    max_total: float | None = None


class SensorCatalog:
    """Sensor-id token -> (kind, range, units) lookup."""

    def __init__(self, entries: dict[str, SensorSpec]):
        kinds = sorted(spec.kind for spec in entries.values())
        if kinds != sorted(KINDS):
            raise InvalidConfig(f"catalog must declare exactly the sensors {KINDS}, got {kinds}")
        for spec in entries.values():
            if not spec.min < spec.max:
                raise InvalidConfig(f"catalog entry {spec.token}: min must be < max")
            if spec.kind == "noise" and (spec.bins is None or len(spec.bins) != 5):
                raise InvalidConfig("noise entry must declare exactly 5 bins")
        self.entries = dict(entries)
        self.by_kind = {spec.kind: spec for spec in entries.values()}

    @classmethod
    def from_dict(cls, raw: dict) -> "SensorCatalog":
        entries = {}
        for token, item in raw.items():
            try:
                entries[token] = SensorSpec(
                    token=token,
                    kind=item["kind"],
                    min=float(item["min"]),
                    max=float(item["max"]),
                    units=item.get("units", ""),
                    bins=tuple(item["bins"]) if "bins" in item else None,
                    max_total=float(item["max_total"]) if "max_total" in item else None,
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidConfig(f"bad catalog entry {token!r}: {exc}") from exc
        return cls(entries)

    @classmethod
    def from_json(cls, path: str | Path) -> "SensorCatalog":
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidConfig(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def default(cls) -> "SensorCatalog":
        text = resources.files("spaceutil").joinpath("data/catalog.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def __getitem__(self, token: str) -> SensorSpec:
        return self.entries[token]

    def __contains__(self, token: str) -> bool:
        return token in self.entries


@dataclass(frozen=True)
class RawPacket:
    timestamp: int
    node_uid: str
    tokens: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class ValidatedReading:
    timestamp: int
    node_uid: str
    motion: float | None = None
    noise: tuple[float, ...] | None = None
    temperature: float | None = None
    lux: float | None = None
    rain: float | None = None
    uv: float | None = None
    barometer: float | None = None
    humidity: float | None = None

    def present(self) -> dict[str, object]:
        """Kind -> value for every field that survived validation."""
        out = {}
        for f in fields(self)[2:]:
            value = getattr(self, f.name)
            if value is not None:
                out[f.name] = value
        return out

    def to_line(self, catalog: SensorCatalog | None = None) -> str:
        catalog = catalog or _default_catalog()
        parts = []
        for spec in catalog.entries.values():
            value = getattr(self, spec.kind)
            if value is None:
                continue
            if spec.kind == "noise":
                parts.append(f"{spec.token}:" + ",".join(format_number(v) for v in value))
            else:
                parts.append(f"{spec.token}:{format_number(value)}")
        return f"{self.timestamp},{self.node_uid}," + ";".join(parts)


@dataclass
class DropStats:
    lines_total: int = 0
    lines_ignored: int = 0
    lines_parsed: int = 0
    lines_malformed: int = 0
    tokens_total: int = 0
    tokens_kept: int = 0
    tokens_dropped_by_reason: Counter = field(default_factory=Counter)
    readings_all_garbage: int = 0

    @property
    def tokens_dropped(self) -> int:
        return sum(self.tokens_dropped_by_reason.values())

    def merge(self, other: "DropStats") -> None:
        self.lines_total += other.lines_total
        self.lines_ignored += other.lines_ignored
        self.lines_parsed += other.lines_parsed
        self.lines_malformed += other.lines_malformed
        self.tokens_total += other.tokens_total
        self.tokens_kept += other.tokens_kept
        self.tokens_dropped_by_reason.update(other.tokens_dropped_by_reason)
        self.readings_all_garbage += other.readings_all_garbage

    def to_dict(self) -> dict:
        return {
            "lines_total": self.lines_total,
            "lines_ignored": self.lines_ignored,
            "lines_parsed": self.lines_parsed,
            "lines_malformed": self.lines_malformed,
            "tokens_total": self.tokens_total,
            "tokens_kept": self.tokens_kept,
            "tokens_dropped_by_reason": {r: self.tokens_dropped_by_reason.get(r, 0) for r in DROP_REASONS},
            "readings_all_garbage": self.readings_all_garbage,
        }


_DEFAULT_CATALOG: SensorCatalog | None = None


def _default_catalog() -> SensorCatalog:
    global _DEFAULT_CATALOG
    if _DEFAULT_CATALOG is None:
        _DEFAULT_CATALOG = SensorCatalog.default()
    return _DEFAULT_CATALOG


def format_number(value: float) -> str:
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def parse_packet(line: str) -> RawPacket:
    """Split one log line into timestamp, uid and raw ``(id, value)`` pairs."""
    line = line.rstrip("\r\n")
    head = line.split(",", 2)
    if len(head) != 3:
        raise MalformedLine("expected 'epoch_ms,uid,payload'")
    ts_text, uid, payload = head
    if not _TIMESTAMP_RE.fullmatch(ts_text):
        raise MalformedLine(f"non-numeric timestamp {ts_text[:32]!r}")
    timestamp = int(ts_text)
    if timestamp > MAX_TIMESTAMP_MS:
        raise MalformedLine("timestamp out of range")
    if not _UID_RE.fullmatch(uid):
        raise MalformedLine(f"bad node uid {uid[:32]!r}")
    tokens = []
    for piece in payload.split(";"):
        if not piece:
            continue
        ident, sep, value = piece.partition(":")
        tokens.append((ident, value if sep else ""))
    return RawPacket(timestamp, uid, tuple(tokens))


def _parse_number(text: str) -> float | None:
    if not _NUMBER_RE.fullmatch(text):
        return None
    value = float(text)
    return value if math.isfinite(value) else None


def _check_token(spec: SensorSpec, text: str) -> tuple[object, str | None]:
    if spec.kind == "noise":
        parts = text.split(",")
        if len(parts) != 5:
            return None, "unparseable"
        counts = [_parse_number(p) for p in parts]
        if any(c is None for c in counts):
            return None, "unparseable"
        if any(c < spec.min or c > spec.max for c in counts):
            return None, "out_of_range"
        if spec.max_total is not None and sum(counts) > spec.max_total:
            return None, "out_of_range"
        return tuple(counts), None
    value = _parse_number(text)
    if value is None:
        return None, "unparseable"
    if value < spec.min or value > spec.max:
        return None, "out_of_range"
    return value, None


def validate(packet: RawPacket, catalog: SensorCatalog | None = None,
             stats: DropStats | None = None) -> ValidatedReading:
    """Keep every token that parses and lies in its catalog range.

    Bad tokens are dropped one at a time; the rest of the packet survives.
    Raises :class:`AllTokensGarbage` when a non-empty payload loses every
    token.
    """
    catalog = catalog or _default_catalog()
    kept: dict[str, object] = {}
    dropped = Counter()
    for ident, text in packet.tokens:
        spec = catalog.entries.get(ident)
        if spec is None:
            dropped["unknown_id"] += 1
            continue
        if spec.kind in kept:
            dropped["duplicate_id"] += 1
            continue
        value, reason = _check_token(spec, text)
        if reason is not None:
            dropped[reason] += 1
            continue
        kept[spec.kind] = value
    if stats is not None:
        stats.tokens_total += len(packet.tokens)
        stats.tokens_kept += len(kept)
        stats.tokens_dropped_by_reason.update(dropped)
    if packet.tokens and not kept:
        if stats is not None:
            stats.readings_all_garbage += 1
        raise AllTokensGarbage(f"all {len(packet.tokens)} tokens dropped")
    return ValidatedReading(packet.timestamp, packet.node_uid, **kept)


def parse_lines(lines: Iterable[str], catalog: SensorCatalog | None = None,
                stats: DropStats | None = None) -> Iterator[ValidatedReading]:
    catalog = catalog or _default_catalog()
    stats = stats if stats is not None else DropStats()
    for line in lines:
        stats.lines_total += 1
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            stats.lines_ignored += 1
            continue
        try:
            packet = parse_packet(line)
        except MalformedLine:
            stats.lines_malformed += 1
            continue
        stats.lines_parsed += 1
        try:
            yield validate(packet, catalog, stats)
        except AllTokensGarbage:
            continue


def read_log(path: str | Path, catalog: SensorCatalog | None = None,
             stats: DropStats | None = None) -> list[ValidatedReading]:
    with open(path, encoding="utf-8", errors="replace", newline="\n") as fh:
        return list(parse_lines(fh, catalog, stats))


def split_by_node(readings: Iterable[ValidatedReading]) -> dict[str, list[ValidatedReading]]:
    """Partition by uid; each list sorted by timestamp (stable)."""
    out: dict[str, list[ValidatedReading]] = {}
    for reading in readings:
        out.setdefault(reading.node_uid, []).append(reading)
    for uid in out:
        out[uid].sort(key=lambda r: r.timestamp)
    return dict(sorted(out.items()))


def write_readings(path: str | Path, readings: Iterable[ValidatedReading],
                   catalog: SensorCatalog | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for reading in readings:
            fh.write(reading.to_line(catalog) + "\n")
