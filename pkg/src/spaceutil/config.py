"""Pipeline configuration shared by the CLI stages.

Precedence for the UTC offset: command-line flag, then the
``SPACEUTIL_UTC_OFFSET`` environment variable, then the config file, then
+08:00.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import InvalidConfig
from .ingest import SensorCatalog
from .motion import CalibrationConfig
from .sound.analysis import SoundConfig
from .timeline import TemporalSelector, format_utc_offset, parse_utc_offset

ENV_UTC_OFFSET = "SPACEUTIL_UTC_OFFSET"
DEFAULT_UTC_OFFSET = "+08:00"
DEFAULT_SELECTORS = ("all", "weekday", "weekend")
KEYS = {"catalog", "calibration", "sound", "utc_offset", "selectors", "vmax"}


def resolve_utc_offset(flag: str | None = None, configured: str | None = None) -> int:
    """Offset in minutes from the first source that is set."""
    for text in (flag, os.environ.get(ENV_UTC_OFFSET), configured, DEFAULT_UTC_OFFSET):
        if text:
            try:
                return parse_utc_offset(text)
            except ValueError as exc:
                raise InvalidConfig(str(exc)) from exc
    raise AssertionError("unreachable")


@dataclass
class PipelineConfig:
    catalog_path: Path | None = None        # None: bundled catalog
    calibration_path: Path | None = None    # None: bundled calibration
    sound: SoundConfig = field(default_factory=SoundConfig)
    utc_offset: str | None = None
    selectors: tuple[str, ...] = DEFAULT_SELECTORS
    vmax: float = 0.5

    def __post_init__(self):
        for sel in self.selectors:
            TemporalSelector.parse(sel)
        if not self.vmax > 0:
            raise InvalidConfig("vmax must be positive")
        for path in (self.catalog_path, self.calibration_path):
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"config references missing file {path}")

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir: str | Path = ".") -> "PipelineConfig":
        unknown = set(raw) - KEYS
        if unknown:
            raise InvalidConfig(f"unknown pipeline config keys: {sorted(unknown)}")
        base = Path(base_dir)
        rel = lambda key: None if raw.get(key) is None else base / raw[key]
        offset = raw.get("utc_offset")
        if offset is not None:
            try:
                parse_utc_offset(offset)
            except ValueError as exc:
                raise InvalidConfig(str(exc)) from exc
        return cls(
            catalog_path=rel("catalog"),
            calibration_path=rel("calibration"),
            sound=SoundConfig.from_dict(raw.get("sound", {})),
            utc_offset=offset,
            selectors=tuple(raw.get("selectors", DEFAULT_SELECTORS)),
            vmax=float(raw.get("vmax", 0.5)),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidConfig(f"{path}: expected a JSON object")
        return cls.from_dict(raw, path.parent)

    def catalog(self) -> SensorCatalog:
        if self.catalog_path is None:
            return SensorCatalog.default()
        return SensorCatalog.from_json(self.catalog_path)

    def calibration(self) -> CalibrationConfig:
        if self.calibration_path is None:
            return CalibrationConfig.default()
        return CalibrationConfig.from_json(self.calibration_path)

    def offset_minutes(self, flag: str | None = None) -> int:
        return resolve_utc_offset(flag, self.utc_offset)

    def to_dict(self, offset_min: int | None = None) -> dict:
        """Resolved view, as recorded in run reports."""
        return {
            "catalog": None if self.catalog_path is None else str(self.catalog_path),
            "calibration": None if self.calibration_path is None else str(self.calibration_path),
            "sound": self.sound.to_dict(),
            "utc_offset": format_utc_offset(offset_min) if offset_min is not None else self.utc_offset,
            "selectors": list(self.selectors),
            "vmax": self.vmax,
        }
