"""Seeded generator of raw node logs with ground-truth labels.

A scenario is a JSON document; anything it leaves out is taken from the
bundled default scenario (``data/default_scenario.json``), which also carries
the notes on how its constants were tuned.  Output layout::

    out/logs/<uid>.log          raw lines in the ingest wire format
    out/truth/<uid>.csv         per-window labels
    out/truth/rain.csv          injected rain events
    out/truth/corruption.json   exact counts of injected damage
    out/scenario.json           the fully-resolved scenario
"""

from __future__ import annotations

import copy
import csv
import datetime as dt
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import InvalidScenario
from .motion import DEFAULT_BOUNDS, likelihood
from .timeline import (DAY_MS, WINDOW_MS, WINDOWS_PER_DAY, day_of_week,
                       local_midnight_ms, parse_utc_offset)

MARKERS = "~!^"
TRUTH_COLUMNS = ("window_start", "activity", "audible", "false_alarm", "rain", "weather",
                 "raw_motion", "activity_motion", "fa_motion")


def default_scenario() -> dict:
    text = resources.files("spaceutil").joinpath("data/default_scenario.json").read_text("utf-8")
    return json.loads(text)


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _hhmm(text: str) -> int:
    try:
        hours, minutes = text.split(":")
        total = int(hours) * 60 + int(minutes)
    except ValueError as exc:
        raise InvalidScenario(f"bad time of day {text!r}") from exc
    if not 0 <= total < 24 * 60:
        raise InvalidScenario(f"time of day out of range: {text!r}")
    return total


@dataclass
class Scenario:
    raw: dict

    @classmethod
    def from_dict(cls, raw: Mapping | None = None) -> "Scenario":
        scenario = cls(_merge(default_scenario(), raw or {}))
        scenario.validate()
        return scenario

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidScenario(f"{path}: {exc}") from exc
        return cls.from_dict(raw)

    def __getitem__(self, key: str) -> Any:
        return self.raw[key]

    @property
    def nodes(self) -> list[str]:
        nodes = self.raw["nodes"]
        if isinstance(nodes, int):
            return [f"N{i + 1}" for i in range(nodes)]
        return list(nodes)

    @property
    def start_date(self) -> dt.date:
        return dt.date.fromisoformat(self.raw["start_date"])

    @property
    def utc_offset_min(self) -> int:
        return parse_utc_offset(self.raw["utc_offset"])

    @property
    def days(self) -> int:
        return int(self.raw["days"])

    def validate(self) -> None:
        try:
            self._validate()
        except InvalidScenario:
            raise
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise InvalidScenario(f"malformed scenario: {exc!r}") from exc

    def _validate(self) -> None:
        r = self.raw
        try:
            start = self.start_date
            offset = self.utc_offset_min
        except Exception as exc:  # noqa: BLE001 - any parse failure is a bad scenario
            raise InvalidScenario(str(exc)) from exc
        if not isinstance(r.get("seed"), int) or r["seed"] < 0:
            raise InvalidScenario("seed must be a non-negative integer")
        if self.days < 1:
            raise InvalidScenario("days must be >= 1")
        if not self.nodes or len(set(self.nodes)) != len(self.nodes):
            raise InvalidScenario("need at least one node with unique uids")
        for key, value in r["corruption"].items():
            if not 0.0 <= float(value) <= 1.0:
                raise InvalidScenario(f"corruption.{key} must be in [0, 1]")
        act = r["activity"]
        for key in ("weekday_rate", "weekend_rate"):
            if len(act[key]) != 24 or any(not 0.0 <= float(v) <= 1.0 for v in act[key]):
                raise InvalidScenario(f"activity.{key} needs 24 rates in [0, 1]")
        scale = act["node_scale"]
        if isinstance(scale, list) and len(scale) < len(self.nodes):
            raise InvalidScenario("activity.node_scale shorter than node list")
        end = start + dt.timedelta(days=self.days)
        for ev in r["rain"]["events"]:
            day = dt.date.fromisoformat(ev["date"])
            if not start <= day < end:
                raise InvalidScenario(f"rain event on {day} outside the scenario range")
            _hhmm(ev["start"])
            if ev["duration_min"] <= 0:
                raise InvalidScenario("rain duration must be positive")
        for ev in act.get("events", []):
            if ev["node"] not in self.nodes:
                raise InvalidScenario(f"activity event for unknown node {ev['node']}")
            day = dt.date.fromisoformat(ev["date"])
            if not start <= day < end:
                raise InvalidScenario(f"activity event on {day} outside the scenario range")
            _hhmm(ev["start"])
        for seg in r["sound"]["segments"]:
            for key in ("weekday", "weekend"):
                if len(seg[key]) != 5 or min(seg[key]) < 0 or sum(seg[key]) <= 0:
                    raise InvalidScenario("sound segment profiles need 5 non-negative weights")
        sound = r["sound"]
        profiles = np.atleast_2d(np.asarray(sound["activity_profile"], dtype=float))
        if profiles.ndim != 2 or profiles.shape[1] != 5 or (profiles < 0).any() or \
                (profiles.sum(axis=1) <= 0).any():
            raise InvalidScenario("sound.activity_profile needs one or more 5-weight profiles")
        if not 0.0 <= float(sound.get("sample_loss", 0.0)) < 1.0:
            raise InvalidScenario("sound.sample_loss must be in [0, 1)")
        if float(sound["concentration"]) <= 0:
            raise InvalidScenario("sound.concentration must be positive")
        aud = r.get("audible")
        if aud:
            for key in ("weekday_rate", "weekend_rate"):
                if len(aud[key]) != 24 or any(not 0.0 <= float(v) <= 1.0 for v in aud[key]):
                    raise InvalidScenario(f"audible.{key} needs 24 rates in [0, 1]")
            if not 1 <= aud["duration"][0] <= aud["duration"][1]:
                raise InvalidScenario("audible.duration must be an increasing pair >= 1")
        fa = r["false_alarm"]
        if fa["gain"] < 0 or not 0 <= fa["jitter"][0] <= fa["jitter"][1]:
            raise InvalidScenario("false_alarm gain/jitter invalid")
        del offset

    def window_starts(self) -> np.ndarray:
        first = local_midnight_ms(self.start_date, self.utc_offset_min)
        return first + WINDOW_MS * np.arange(self.days * WINDOWS_PER_DAY, dtype=np.int64)


@dataclass
class Generated:
    logs: dict[str, list[str]]
    truth: dict[str, dict[str, np.ndarray]]
    rain_events: list[tuple[str, int, int]]
    corruption: dict[str, dict[str, int]]


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def _weather(scn: Scenario, ws: np.ndarray, rain_mask: np.ndarray, rain_sensor: np.ndarray):
    """Shared (all-node) clean weather for every window."""
    w = scn["weather"]
    rng = _rng(scn["seed"], 0)
    n = len(ws)
    offset = scn.utc_offset_min * 60_000
    hour = ((ws + offset) % DAY_MS) / 3_600_000.0
    day = np.arange(n) // WINDOWS_PER_DAY
    sun = rng.uniform(w["sun_min"], w["sun_max"], size=scn.days)[day]

    daylight = np.clip(np.sin(np.pi * (hour - w["sunrise"]) / (w["sunset"] - w["sunrise"])), 0.0, None)
    cloud = np.exp(rng.normal(0.0, w["lux_noise"], size=n))
    lux = w["lux_peak"] * sun * daylight ** 1.3 * cloud
    lux = np.where(rain_mask, lux * scn["rain"]["lux_factor"], lux)

    heat = np.exp(-(((hour - w["temp_peak_hour"]) / w["temp_width"]) ** 2))
    temp = w["temp_night"] + (w["temp_peak"] - w["temp_night"]) * sun * heat
    temp = temp + rng.normal(0.0, w["temp_noise"], size=n)
    temp = np.where(rain_mask, temp - scn["rain"]["temp_drop"], temp)

    humidity = w["humidity_night"] + w["humidity_per_degree"] * (temp - w["temp_night"])
    humidity = humidity + rng.normal(0.0, w["humidity_noise"], size=n)
    humidity = np.where(rain_mask | (rain_sensor > 50), humidity + scn["rain"]["humidity_rise"], humidity)

    uv = w["uv_per_klux"] * lux / 1000.0
    baro = w["baro_mean"] + w["baro_amp"] * np.sin(2 * np.pi * hour / 12.0) + rng.normal(0, w["baro_noise"], n)
    return {
        "temperature": np.clip(np.round(temp, 1), -10, 80),
        "lux": np.clip(np.round(lux, 1), 0.1, 40000),
        "humidity": np.clip(np.round(humidity, 1), 0, 100),
        "uv": np.clip(np.round(uv), 0, 1024),
        "barometer": np.clip(np.round(baro, 1), 300, 1200),
        "sun": sun,
    }


def _rain_schedule(scn: Scenario, ws: np.ndarray):
    """Rain mask, per-event windows and a lagged/lingering rain-sensor trace."""
    r = scn["rain"]
    rng = _rng(scn["seed"], 1)
    n = len(ws)
    mask = np.zeros(n, dtype=bool)
    sensor = np.zeros(n)
    events = []
    for ev in r["events"]:
        date = dt.date.fromisoformat(ev["date"])
        start = local_midnight_ms(date, scn.utc_offset_min) + _hhmm(ev["start"]) * 60_000
        end = start + int(ev["duration_min"]) * 60_000
        lo = int((start - ws[0]) // WINDOW_MS)
        hi = int(-(-(end - ws[0]) // WINDOW_MS))
        lo, hi = max(lo, 0), min(hi, n)
        if lo >= hi:
            continue
        mask[lo:hi] = True
        events.append((date.isoformat(), int(ws[lo]), int(ws[hi - 1]) + WINDOW_MS))
        lag = int(rng.integers(r["sensor_lag"][0], r["sensor_lag"][1] + 1))
        linger = float(rng.uniform(*r["sensor_linger"]))
        t = np.arange(n) - (lo + lag)
        wet = np.where(t < 0, 0.0, np.where(t < hi - lo, 1.0, np.exp(-np.clip(t - (hi - lo), 0, None) / linger)))
        sensor = np.maximum(sensor, r["sensor_peak"] * wet)
    return mask, events, sensor


def _activity(scn: Scenario, node_index: int, uid: str, ws: np.ndarray, rng: np.random.Generator):
    act = scn["activity"]
    n = len(ws)
    offset = scn.utc_offset_min * 60_000
    hour = (((ws + offset) % DAY_MS) // 3_600_000).astype(int)
    weekend = day_of_week(ws, scn.utc_offset_min) >= 5
    rate = np.where(weekend, np.asarray(act["weekend_rate"])[hour], np.asarray(act["weekday_rate"])[hour])
    scale = act["node_scale"]
    scale = scale[node_index] if isinstance(scale, list) else float(scale)
    starts = rng.random(n) < np.clip(rate * scale, 0.0, 1.0)
    durations = rng.integers(act["duration"][0], act["duration"][1] + 1, size=n)
    active = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(starts):
        active[i:i + durations[i]] = True
    motion = np.where(active, rng.integers(act["motion"][0], act["motion"][1] + 1, size=n), 0)
    shift = np.where(active, rng.uniform(act["sound_shift"][0], act["sound_shift"][1], size=n), 0.0)
    for ev in act.get("events", []):
        if ev["node"] != uid:
            continue
        date = dt.date.fromisoformat(ev["date"])
        start = local_midnight_ms(date, scn.utc_offset_min) + _hhmm(ev["start"]) * 60_000
        lo = int((start - ws[0]) // WINDOW_MS)
        hi = min(n, lo + int(ev.get("duration", 1)))
        active[lo:hi] = True
        motion[lo:hi] = int(ev.get("motion", act["motion"][1]))
        shift[lo:hi] = float(ev.get("sound_shift", act["sound_shift"][1]))
    return active, motion.astype(int), shift


def _audible(scn: Scenario, ws: np.ndarray, rng: np.random.Generator):
    """Sound-only activity: people heard by the node but outside the PIR's view."""
    aud = scn.raw.get("audible")
    n = len(ws)
    if not aud:
        return np.zeros(n, dtype=bool), np.zeros(n)
    hour = (((ws + scn.utc_offset_min * 60_000) % DAY_MS) // 3_600_000).astype(int)
    weekend = day_of_week(ws, scn.utc_offset_min) >= 5
    rate = np.where(weekend, np.asarray(aud["weekend_rate"])[hour], np.asarray(aud["weekday_rate"])[hour])
    starts = rng.random(n) < np.clip(rate, 0.0, 1.0)
    durations = rng.integers(aud["duration"][0], aud["duration"][1] + 1, size=n)
    heard = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(starts):
        heard[i:i + durations[i]] = True
    shift = np.where(heard, rng.uniform(aud["sound_shift"][0], aud["sound_shift"][1], size=n), 0.0)
    return heard, shift


def _histograms(scn: Scenario, node_index: int, ws: np.ndarray, active_shift: np.ndarray,
                rain_mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    s = scn["sound"]
    n = len(ws)
    offset = scn.utc_offset_min * 60_000
    hour = ((ws + offset) % DAY_MS) / 3_600_000.0
    weekend = day_of_week(ws, scn.utc_offset_min) >= 5
    base = np.zeros((n, 5))
    for seg in s["segments"]:
        sel = (hour >= seg["start"]) & (hour < seg["end"])
        for key, rows in (("weekday", sel & ~weekend), ("weekend", sel & weekend)):
            prof = np.asarray(seg[key], dtype=float)
            base[rows] = prof / prof.sum()
    tilt = np.exp(_rng(scn["seed"], 2, node_index).normal(0.0, s["node_tilt"], size=5))
    base = base * tilt
    base /= base.sum(axis=1, keepdims=True)

    # several activity kinds, each pulling the histogram towards its own profile
    targets = np.atleast_2d(np.asarray(s["activity_profile"], dtype=float))
    targets = targets / targets.sum(axis=1, keepdims=True)
    target = targets[rng.integers(0, len(targets), size=n)]
    spread = s.get("activity_spread")
    if spread:
        # each activity window draws its own profile around its kind
        g = rng.gamma(np.clip(target * float(spread), 1e-3, None))
        target = g / g.sum(axis=1, keepdims=True)
    mean = (1 - active_shift[:, None]) * base + active_shift[:, None] * target
    conc = np.full(n, float(s["concentration"]))

    rain_prof = np.asarray(scn["rain"]["sound_profile"], dtype=float)
    rain_prof /= rain_prof.sum()
    mean[rain_mask] = rain_prof
    conc[rain_mask] = scn["rain"]["concentration"]

    g = rng.gamma(np.clip(mean * conc[:, None], 1e-3, None))
    probs = g / g.sum(axis=1, keepdims=True)
    total = np.full(n, int(s["total"]))
    loss = float(s.get("sample_loss", 0.0))
    if loss > 0:
        # samples dropped by the node during busy radio periods
        total = np.round(total * (1.0 - loss * rng.random(n))).astype(int)
    return rng.multinomial(total, probs)


def _fmt(value: float, places: int) -> str:
    text = f"{value:.{places}f}"
    return text.rstrip("0").rstrip(".") if "." in text else text


def _garbage(rng: np.random.Generator, size: int) -> str:
    return "".join(MARKERS[i] for i in rng.integers(0, len(MARKERS), size=size))


def generate(scenario: Scenario | Mapping | None = None) -> Generated:
    scn = scenario if isinstance(scenario, Scenario) else Scenario.from_dict(scenario)
    ws = scn.window_starts()
    n = len(ws)
    rain_mask, rain_events, rain_sensor = _rain_schedule(scn, ws)
    weather = _weather(scn, ws, rain_mask, rain_sensor)
    fa_cfg = scn["false_alarm"]
    corr = scn["corruption"]
    sun_clear = scn["weather"]["clear_threshold"]

    logs, truth, corruption = {}, {}, {}
    for j, uid in enumerate(scn.nodes):
        rng = _rng(scn["seed"], 10, j)
        temp = np.clip(np.round(weather["temperature"] + rng.normal(0, 0.2, n), 1), -10, 80)
        lux = np.clip(np.round(weather["lux"] * np.exp(rng.normal(0, 0.03, n)), 1), 0.1, 40000)
        humidity = np.clip(np.round(weather["humidity"] + rng.normal(0, 0.5, n), 1), 0, 100)
        rain_val = np.clip(np.round(rain_sensor * rng.uniform(0.85, 1.0, n) + rng.uniform(0, 4, n)), 0, 1024)

        active, act_motion, shift = _activity(scn, j, uid, ws, rng)
        p_true = (likelihood(temp, DEFAULT_BOUNDS[0]) + likelihood(lux, DEFAULT_BOUNDS[1])) / 2
        jitter = rng.uniform(fa_cfg["jitter"][0], fa_cfg["jitter"][1], n)
        fa_motion = np.floor(fa_cfg["gain"] * p_true ** fa_cfg["exponent"] * jitter).astype(int)
        raw_motion = np.minimum(act_motion + fa_motion, 100)
        false_alarm = (fa_motion > 0) & ~active
        heard, heard_shift = _audible(scn, ws, _rng(scn["seed"], 11, j))
        hist = _histograms(scn, j, ws, np.maximum(shift, heard_shift), rain_mask, rng)

        tags = np.where(rain_mask, "rain", np.where(weather["sun"] >= sun_clear, "clear", "cloudy"))
        truth[uid] = {
            "window_start": ws, "activity": active.astype(int), "audible": (heard & ~active).astype(int),
            "false_alarm": false_alarm.astype(int),
            "rain": rain_mask.astype(int), "weather": tags, "raw_motion": raw_motion,
            "activity_motion": act_motion, "fa_motion": fa_motion,
        }

        jitter_ms = rng.integers(0, WINDOW_MS, size=n)
        lost = rng.random(n) < corr["loss_rate"]
        malformed = rng.random(n) < corr["malformed_rate"]
        duplicate = rng.random(n) < corr["duplicate_rate"]
        garbage = rng.random((n, 8)) < corr["garbage_token_rate"]
        garbage_kind = rng.integers(0, 2, size=(n, 8))
        counts = dict(lines_written=0, lost_lines=0, malformed_lines=0, duplicate_lines=0,
                      garbage_tokens=0, all_garbage_lines=0)
        lines = []
        for i in range(n):
            if lost[i]:
                counts["lost_lines"] += 1
                continue
            ts = int(ws[i] + jitter_ms[i])
            if malformed[i]:
                lines.append(_garbage(rng, 12))
                counts["malformed_lines"] += 1
                counts["lines_written"] += 1
                continue
            h = hist[i]
            tokens = [
                ("M", str(int(raw_motion[i]))),
                ("X", f"{h[0]},{h[1]},{h[2]},{h[3]},{h[4]}"),
                ("K", _fmt(temp[i], 1)),
                ("L", _fmt(lux[i], 1)),
                ("R", str(int(rain_val[i]))),
                ("U", str(int(weather["uv"][i]))),
                ("B", _fmt(weather["barometer"][i], 1)),
                ("H", _fmt(humidity[i], 1)),
            ]
            n_bad = 0
            for t in range(8):
                if garbage[i, t]:
                    ident, _ = tokens[t]
                    tokens[t] = (_garbage(rng, 2), "0") if garbage_kind[i, t] else (ident, _garbage(rng, 3))
                    n_bad += 1
            line = f"{ts},{uid}," + ";".join(f"{k}:{v}" for k, v in tokens)
            copies = 2 if duplicate[i] else 1
            lines.extend([line] * copies)
            counts["lines_written"] += copies
            counts["duplicate_lines"] += copies - 1
            counts["garbage_tokens"] += n_bad * copies
            counts["all_garbage_lines"] += copies if n_bad == 8 else 0
        logs[uid] = lines
        corruption[uid] = counts
    return Generated(logs, truth, rain_events, corruption)


def write_generated(gen: Generated, out: str | Path, scenario: Scenario | None = None) -> Path:
    out = Path(out)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    for uid, lines in gen.logs.items():
        with open(out / "logs" / f"{uid}.log", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# node {uid}\n")
            for line in lines:
                fh.write(line + "\n")
    for uid, cols in gen.truth.items():
        with open(out / "truth" / f"{uid}.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRUTH_COLUMNS)
            for row in zip(*(cols[c] for c in TRUTH_COLUMNS)):
                writer.writerow([str(v) for v in row])
    with open(out / "truth" / "rain.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["day", "start", "end"])
        writer.writerows(gen.rain_events)
    (out / "truth" / "corruption.json").write_text(
        json.dumps(gen.corruption, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    if scenario is not None:
        (out / "scenario.json").write_text(json.dumps(scenario.raw, indent=1, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return out


def read_truth(path: str | Path) -> dict[str, np.ndarray | list]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    out: dict[str, Any] = {}
    for col in TRUTH_COLUMNS:
        values = [r[col] for r in rows]
        out[col] = values if col == "weather" else np.array([int(v) for v in values], dtype=np.int64)
    return out


def read_rain_truth(path: str | Path) -> list[tuple[str, int, int]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [(r["day"], int(r["start"]), int(r["end"])) for r in csv.DictReader(fh)]
