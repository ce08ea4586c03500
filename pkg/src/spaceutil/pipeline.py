"""Stage functions and their file formats, shared by the CLI and ``e2e``.

Each stage reads and writes plain files so it can be run and inspected on
its own.  Every float written here is rounded to 6 places and every mapping
is emitted with sorted keys, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import fusion, ingest, motion, plotting, synthgen, timeline
from .config import PipelineConfig, resolve_utc_offset
from .errors import EmptySelection, InsufficientBins, InvalidConfig, SpaceUtilError
from .sound.analysis import SoundConfig, SoundResult, analyze_frames
from .sound.rain import RainInterval
from .timeline import AlignedFrame, format_utc_offset, local_day, local_midnight_ms

LABELED_HEADER = ("window_start", "p_alpha", "raw_motion", "is_false_alarm")
RAIN_HEADER = ("day", "start", "end")
WEATHER_SYMBOLS = ("K", "L", "R", "U", "B", "H")


def _num(value, places: int = 6):
    value = float(value)
    return None if np.isnan(value) else round(value, places)


def _dump(path: str | Path, payload, indent: int | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=indent, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load(path: str | Path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


# ingest ---------------------------------------------------------------------

def log_paths(inputs: Iterable[str | Path]) -> list[Path]:
    """Expand directories to their ``*.log`` files; order is sorted by path."""
    out: list[Path] = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            out.extend(sorted(p.glob("*.log")))
        elif p.exists():
            out.append(p)
        else:
            raise FileNotFoundError(f"no such input: {p}")
    return out


def ingest_logs(paths: Sequence[str | Path], catalog: ingest.SensorCatalog | None = None
                ) -> tuple[dict[str, list[ingest.ValidatedReading]], ingest.DropStats]:
    stats = ingest.DropStats()
    readings: list[ingest.ValidatedReading] = []
    for path in log_paths(paths):
        readings.extend(ingest.read_log(path, catalog, stats))
    return ingest.split_by_node(readings), stats


def write_node_logs(by_node: Mapping[str, list[ingest.ValidatedReading]], out_dir: str | Path,
                    catalog: ingest.SensorCatalog | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for uid, readings in sorted(by_node.items()):
        path = out / f"{uid}.log"
        ingest.write_readings(path, readings, catalog)
        paths.append(path)
    return paths


# align ----------------------------------------------------------------------

def day_range(by_node: Mapping[str, list[ingest.ValidatedReading]], utc_offset_min: int
              ) -> tuple[int, int] | tuple[None, None]:
    """First and last window start of the whole local days the readings touch."""
    stamps = [r.timestamp for rs in by_node.values() for r in rs]
    if not stamps:
        return None, None
    first = int(local_day(min(stamps), utc_offset_min))
    last = int(local_day(max(stamps), utc_offset_min))
    start = local_midnight_ms(timeline.day_to_date(first), utc_offset_min)
    end = local_midnight_ms(timeline.day_to_date(last), utc_offset_min) + timeline.DAY_MS - timeline.WINDOW_MS
    return start, end


def align(by_node: Mapping[str, list[ingest.ValidatedReading]], utc_offset_min: int,
          start: int | None = None, end: int | None = None) -> dict[str, AlignedFrame]:
    if start is None and end is None:
        start, end = day_range(by_node, utc_offset_min)
    return timeline.build_frames(dict(by_node), start, end)


def write_frames(frames: Mapping[str, AlignedFrame], out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for uid, frame in sorted(frames.items()):
        frame.to_csv(out / f"{uid}.csv")
        _dump(out / f"{uid}.json", frame.manifest(), indent=1)
        paths.append(out / f"{uid}.csv")
    return paths


def read_frames(paths: Sequence[str | Path]) -> dict[str, AlignedFrame]:
    """Load frame CSVs; a sibling ``<uid>.json`` manifest restores the counters."""
    frames = {}
    for item in paths:
        p = Path(item)
        if p.is_dir():
            frames.update(read_frames(sorted(p.glob("*.csv"))))
            continue
        manifest = p.with_suffix(".json")
        meta = _load(manifest) if manifest.is_file() else {}
        uid = meta.get("node") or p.stem
        frames[uid] = AlignedFrame.from_csv(p, uid, meta.get("conflicts", 0), meta.get("duplicates", 0))
    if not frames:
        raise InvalidConfig("no frames given")
    return dict(sorted(frames.items()))


# motion ---------------------------------------------------------------------

def labeled_corpus(frames: Mapping[str, AlignedFrame], truth: Mapping[str, Mapping],
                   bounds=motion.DEFAULT_BOUNDS) -> list[tuple[int, float, float, int]]:
    """Rows for every window with motion, flagged from synthgen truth."""
    rows = []
    for uid, frame in sorted(frames.items()):
        if uid not in truth:
            continue
        t = truth[uid]
        fa = set(np.asarray(t["window_start"])[np.asarray(t["false_alarm"]) == 1].tolist())
        rows.extend(motion.labeled_samples(frame, fa, bounds))
    return rows


def write_labeled(path: str | Path, rows: Iterable[tuple[int, float, float, int]]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABELED_HEADER)
        for ws, pa, raw, flag in rows:
            writer.writerow([int(ws), f"{pa:.6f}", ingest.format_number(raw), int(flag)])
    return path


def read_labeled(path: str | Path) -> list[tuple[int, float, float, int]]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LABELED_HEADER:
            raise InvalidConfig(f"{path}: header must be {','.join(LABELED_HEADER)}")
        for lineno, r in enumerate(reader, start=2):
            try:
                flag = int(r["is_false_alarm"])
                pa = float(r["p_alpha"])
                raw = float(r["raw_motion"])
                if flag not in (0, 1) or not 0.0 <= pa <= 1.0 or not np.isfinite(raw):
                    raise ValueError("value out of range")
                rows.append((int(r["window_start"]), pa, raw, flag))
            except (TypeError, ValueError) as exc:
                raise InvalidConfig(f"{path}:{lineno}: {exc}") from exc
    return rows


def fit_calibration(rows: Iterable[tuple[int, float, float, int]],
                    base: motion.CalibrationConfig | None = None) -> motion.CalibrationConfig:
    """Fit the deduction table on the false-alarm rows of a labeled corpus."""
    base = base or motion.CalibrationConfig()
    samples = [(pa, raw) for _, pa, raw, flag in rows if flag]
    table = motion.fit_deduction_table(samples)
    return motion.CalibrationConfig(base.bounds, table, base.G, base.norm_value)


def calibrate(frames: Mapping[str, AlignedFrame], config: motion.CalibrationConfig
              ) -> dict[str, motion.MotionResult]:
    return {uid: motion.calibrate_frame(frame, config) for uid, frame in sorted(frames.items())}


def write_motion(path: str | Path, results: Mapping[str, motion.MotionResult], utc_offset_min: int) -> Path:
    nodes = {}
    for uid, r in sorted(results.items()):
        nodes[uid] = [
            {"window": int(ws), "raw": _num(raw), "p_alpha": _num(pa), "D": _num(d),
             "calibrated": _num(c), "scaled": _num(s), "eta_M": _num(e)}
            for ws, raw, pa, d, c, s, e in zip(r.window_start, r.raw, r.p_alpha, r.deduction,
                                               r.calibrated, r.scaled, r.eta)
        ]
    return _dump(path, {"utc_offset": format_utc_offset(utc_offset_min), "nodes": nodes})


def _channel(path: str | Path, key: str) -> tuple[dict[str, tuple[np.ndarray, np.ndarray]], str | None]:
    raw = _load(path)
    try:
        out = {}
        for uid, recs in raw["nodes"].items():
            ws = np.array([r["window"] for r in recs], dtype=np.int64)
            vals = np.array([np.nan if r[key] is None else r[key] for r in recs], dtype=float)
            out[uid] = (ws, vals)
    except (KeyError, TypeError, AttributeError) as exc:
        raise InvalidConfig(f"{path}: missing {exc} in channel file") from exc
    return out, raw.get("utc_offset")


def read_motion(path: str | Path):
    return _channel(path, "eta_M")


# sound ----------------------------------------------------------------------

def write_sound(path: str | Path, result: SoundResult, config: SoundConfig, utc_offset_min: int) -> Path:
    nodes = {}
    for uid, r in sorted(result.nodes.items()):
        recs = []
        for i, ws in enumerate(r.window_start):
            has = not np.isnan(r.chi2[i])
            recs.append({
                "window": int(ws),
                "chi2": _num(r.chi2[i]),
                "eta_N": _num(r.eta[i]),
                "cluster": int(r.cluster[i]) if has else None,
                "period_id": int(r.period_id[i]) if has else None,
            })
        nodes[uid] = recs
    p_counts = np.bincount(np.asarray(result.components, dtype=int), minlength=9)[:9] if result.components \
        else np.zeros(9, dtype=int)
    payload = {
        "utc_offset": format_utc_offset(utc_offset_min),
        "beta": _num(result.beta),
        "config": config.to_dict(),
        "components": {str(p): int(c) for p, c in enumerate(p_counts) if c},
        "nodes": nodes,
    }
    return _dump(path, payload)


def read_sound(path: str | Path):
    return _channel(path, "eta_N")


def rain_rows(rain: Mapping[str, list[RainInterval]]) -> list[tuple[str, int, int]]:
    return [(day, iv.start, iv.end) for day, ivs in sorted(rain.items()) for iv in ivs]


def write_rain(path: str | Path, rows: Iterable[tuple[str, int, int]]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RAIN_HEADER)
        writer.writerows(rows)
    return path


def read_rain(path: str | Path) -> list[tuple[str, int, int]]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RAIN_HEADER:
            raise InvalidConfig(f"{path}: header must be {','.join(RAIN_HEADER)}")
        try:
            return [(r["day"], int(r["start"]), int(r["end"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise InvalidConfig(f"{path}: {exc}") from exc


# fusion ---------------------------------------------------------------------

def rain_tags(window_start: np.ndarray, rows: Iterable[tuple[str, int, int]]) -> list[str]:
    tags = np.full(len(window_start), "dry", dtype=object)
    for _, start, end in rows:
        tags[(window_start >= start) & (window_start < end)] = "rain"
    return list(tags)


def fuse_channels(motion_ch: Mapping[str, tuple[np.ndarray, np.ndarray]],
                  sound_ch: Mapping[str, tuple[np.ndarray, np.ndarray]],
                  rain: Iterable[tuple[str, int, int]] | None = None,
                  truth: Mapping[str, Mapping] | None = None) -> dict[str, fusion.UtilizationSeries]:
    """Join the two channels on window start per node and fuse them.

    Weather tags come from synthgen truth when given, otherwise from rain
    intervals (``rain``/``dry``), otherwise they are left out.
    """
    rain = list(rain) if rain is not None else None
    series = {}
    for uid in sorted(set(motion_ch) | set(sound_ch)):
        parts = [ch[uid][0] for ch in (motion_ch, sound_ch) if uid in ch]
        ws = np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)

        def spread(ch):
            out = np.full(len(ws), np.nan)
            if uid in ch:
                src_ws, vals = ch[uid]
                out[np.searchsorted(ws, src_ws)] = vals
            return out

        weather = None
        if truth is not None and uid in truth:
            t = truth[uid]
            lookup = dict(zip(np.asarray(t["window_start"]).tolist(), t["weather"]))
            weather = [lookup.get(int(w)) for w in ws]
        elif rain is not None:
            weather = rain_tags(ws, rain)
        series[uid] = fusion.build_series(uid, ws, spread(motion_ch), spread(sound_ch), weather)
    return series


def heatmaps(series: Mapping[str, fusion.UtilizationSeries], selectors: Sequence[str],
             utc_offset_min: int) -> dict[tuple[str, str], fusion.Heatmap]:
    """Per-node maps, plus one over all nodes pooled when there are several."""
    out = {}
    items = sorted(series.items())
    if len(items) > 1:
        pooled = fusion.pool_series(series)
        items.append((pooled.node_uid, pooled))
    for uid, s in items:
        for sel in selectors:
            try:
                out[(uid, sel)] = fusion.aggregate_heatmap(s, sel, utc_offset_min)
            except EmptySelection:
                continue
    return out


def heatmap_name(uid: str, selector: str) -> str:
    return f"{uid}_{selector.replace('..', '_to_')}"


# end to end -----------------------------------------------------------------

def _truth_eval(frames, motion_res, sound_res, truth) -> dict:
    fa_ok = fa_n = act_ok = act_n = 0
    tp = fp = fn = 0
    for uid, frame in frames.items():
        if uid not in truth:
            continue
        t = truth[uid]
        idx = np.searchsorted(np.asarray(t["window_start"]), frame.window_start)
        fa = np.asarray(t["false_alarm"])[idx] == 1
        act = np.asarray(t["activity"])[idx] == 1
        heard = act | (np.asarray(t["audible"])[idx] == 1)
        eta_m = motion_res[uid].eta
        ok = ~np.isnan(eta_m)
        fa_n += int(np.sum(ok & fa))
        fa_ok += int(np.sum(ok & fa & (eta_m < 0.1)))
        act_n += int(np.sum(ok & act))
        act_ok += int(np.sum(ok & act & (eta_m >= 0.2)))
        eta_n = sound_res.nodes[uid].eta
        has = ~np.isnan(eta_n)
        flagged = has & (eta_n == 1)
        tp += int(np.sum(flagged & heard))
        fp += int(np.sum(flagged & ~heard))
        fn += int(np.sum(has & ~flagged & heard))
    ratio = lambda a, b: None if b == 0 else round(a / b, 6)
    return {
        "false_alarm_windows": fa_n,
        "false_alarm_suppressed": ratio(fa_ok, fa_n),
        "activity_windows": act_n,
        "activity_retained": ratio(act_ok, act_n),
        "sound_precision": ratio(tp, tp + fp),
        "sound_recall": ratio(tp, tp + fn),
    }


def interval_iou(a: tuple[int, int], b: tuple[int, int]) -> float:
    inter = max(0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


def rain_eval(detected: Sequence[tuple[str, int, int]], truth: Sequence[tuple[str, int, int]]) -> dict:
    truth_days = {d for d, _, _ in truth}
    events = []
    for day, start, end in truth:
        best = max((interval_iou((start, end), (s, e)) for d, s, e in detected if d == day), default=0.0)
        events.append({"day": day, "start": start, "end": end, "iou": round(best, 6)})
    return {
        "events": events,
        "false_positive_intervals": sum(1 for d, _, _ in detected if d not in truth_days),
    }


def motion_pearson(frames: Mapping[str, AlignedFrame]) -> dict[str, float | None]:
    """Correlation of raw motion with each weather sensor, pooled over nodes."""
    raw = np.concatenate([f["motion"] for f in frames.values()])
    out = {}
    for sym in WEATHER_SYMBOLS:
        other = np.concatenate([f[timeline.COLUMN_KINDS[sym]] for f in frames.values()])
        try:
            out[sym] = round(motion.pearson(raw, other), 6)
        except SpaceUtilError:
            out[sym] = None
    return out


def run_e2e(scenario: synthgen.Scenario, out_dir: str | Path, config: PipelineConfig | None = None,
            utc_offset: str | None = None) -> dict:
    """synth -> ingest -> align -> fit/calibrate -> sound -> fuse -> heatmaps -> report."""
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # flag, env and config beat the scenario's own offset
    offset = resolve_utc_offset(utc_offset, config.utc_offset or scenario["utc_offset"])
    catalog = config.catalog()

    gen = synthgen.generate(scenario)
    synthgen.write_generated(gen, out / "synth", scenario)

    by_node, stats = ingest_logs([out / "synth" / "logs"], catalog)
    write_node_logs(by_node, out / "readings", catalog)
    _dump(out / "ingest_stats.json", stats.to_dict(), indent=1)

    ws = scenario.window_starts()
    frames = align(by_node, offset, int(ws[0]), int(ws[-1]))
    write_frames(frames, out / "frames")

    rows = labeled_corpus(frames, gen.truth)
    write_labeled(out / "labeled.csv", rows)
    if config.calibration_path is not None:
        calib = config.calibration()
        calib_source = "config"
    else:
        try:
            calib = fit_calibration(rows)
            calib_source = "fitted"
        except InsufficientBins:
            calib = motion.CalibrationConfig.default()
            calib_source = "bundled"
    calib.write(out / "calibration.json")
    motion_res = calibrate(frames, calib)
    write_motion(out / "motion.json", motion_res, offset)

    sound_res = analyze_frames(frames, config.sound, offset, rain=True)
    write_sound(out / "sound.json", sound_res, config.sound, offset)
    detected = rain_rows(sound_res.rain)
    write_rain(out / "rain.csv", detected)

    motion_ch, _ = read_motion(out / "motion.json")
    sound_ch, _ = read_sound(out / "sound.json")
    series = fuse_channels(motion_ch, sound_ch, truth=gen.truth)
    fusion.write_series_json(out / "series.json", series, format_utc_offset(offset))

    maps = heatmaps(series, config.selectors, offset)
    hm_dir = out / "heatmaps"
    hm_dir.mkdir(exist_ok=True)
    peaks = {}
    for (uid, sel), hm in maps.items():
        name = heatmap_name(uid, sel)
        for fmt in ("csv", "json", "svg"):
            fusion.export(hm, hm_dir / f"{name}.{fmt}", fmt, vmax=config.vmax)
        if sel == "weekday":
            weekday_rows = np.nanmean(hm.mean[:5], axis=0)
            peaks[uid] = int(np.nanargmax(weekday_rows))

    fig_dir = out / "figures"
    fig_dir.mkdir(exist_ok=True)
    plotting.save_figure(plotting.deduction_figure(calib.table), fig_dir / "deduction.svg")
    first = next(iter(sorted(motion_res)), None)
    if first is not None:
        r = motion_res[first]
        span = slice(0, min(len(r.window_start), 3 * timeline.WINDOWS_PER_DAY))
        plotting.save_figure(
            plotting.calibration_figure(r.window_start[span], r.raw[span], r.scaled[span], r.p_alpha[span],
                                        f"{first}: raw vs calibrated motion"),
            fig_dir / f"calibration_{first}.svg")

    raw_motion = np.concatenate([r.raw for r in motion_res.values()])
    report = {
        "scenario": {"seed": scenario["seed"], "start_date": scenario["start_date"], "days": scenario.days,
                     "nodes": scenario.nodes},
        "config": config.to_dict(offset),
        "ingest": stats.to_dict(),
        "corruption_injected": gen.corruption,
        "frames": {uid: f.manifest() for uid, f in sorted(frames.items())},
        "calibration": {"source": calib_source, "table": calib.table.to_dict()},
        "motion_cdf85": motion.cdf_threshold(raw_motion, 0.85),
        "motion_pearson": motion_pearson(frames),
        "beta": _num(sound_res.beta),
        "truth_evaluation": _truth_eval(frames, motion_res, sound_res, gen.truth),
        "rain": rain_eval(detected, gen.rain_events),
        "series_missing": {uid: {"motion": s.missing_motion, "sound": s.missing_sound}
                           for uid, s in sorted(series.items())},
        "weekday_peak_hour": peaks,
        "outputs": sorted([str(p.relative_to(out)) for p in out.rglob("*") if p.is_file()] + ["report.json"]),
    }
    _dump(out / "report.json", report, indent=1)
    return report
