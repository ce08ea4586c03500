"""Command-line front end.

Exit codes: 0 success, 1 validation error (including usage errors), 2 I/O
error.  Diagnostics go to stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, fusion, motion, pipeline, plotting, synthgen
from .config import PipelineConfig, resolve_utc_offset
from .errors import InvalidConfig, SpaceUtilError
from .sound.analysis import SoundConfig, analyze_frames
from .sound.clustering import CH_DENOMINATORS
from .sound.pca import ALPHA_READINGS
from .timeline import format_utc_offset


class UsageError(SpaceUtilError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2, which we reserve for I/O
        raise UsageError(f"{self.prog}: {message}")


def emit(level: str, **fields) -> None:
    print(json.dumps({"level": level, **fields}, sort_keys=True, default=str), file=sys.stderr)


def _config(args) -> PipelineConfig:
    return PipelineConfig.from_json(args.config) if getattr(args, "config", None) else PipelineConfig()


def _offset(args, config: PipelineConfig) -> int:
    return config.offset_minutes(getattr(args, "utc_offset", None))


def _parse_bound(text: str | None, offset: int, end: bool = False) -> int | None:
    """Epoch ms, or an ISO date meaning that local day's first (or last) window."""
    if text is None:
        return None
    if text.isdigit():
        return int(text)
    import datetime as dt
    from .timeline import DAY_MS, WINDOW_MS, local_midnight_ms
    try:
        start = local_midnight_ms(dt.date.fromisoformat(text), offset)
    except ValueError as exc:
        raise InvalidConfig(f"bad range bound {text!r}: {exc}") from exc
    return start + DAY_MS - WINDOW_MS if end else start


def _truth_dir(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"no truth directory {path}")
    return {p.stem: synthgen.read_truth(p) for p in sorted(path.glob("*.csv")) if p.stem != "rain"}


# subcommands ----------------------------------------------------------------

def cmd_synth(args) -> dict:
    scenario = synthgen.Scenario.from_json(args.scenario) if args.scenario else synthgen.Scenario.from_dict({})
    if args.seed is not None:
        scenario = synthgen.Scenario.from_dict({**scenario.raw, "seed": args.seed})
    gen = synthgen.generate(scenario)
    out = synthgen.write_generated(gen, args.out, scenario)
    return {"out": str(out), "nodes": scenario.nodes, "rain_events": len(gen.rain_events)}


def cmd_ingest(args) -> dict:
    config = _config(args)
    catalog = config.catalog() if not args.catalog else pipeline.ingest.SensorCatalog.from_json(args.catalog)
    by_node, stats = pipeline.ingest_logs(args.inputs, catalog)
    paths = pipeline.write_node_logs(by_node, args.out, catalog)
    pipeline._dump(Path(args.out) / "drop_stats.json", stats.to_dict(), indent=1)
    emit("info", event="drop_stats", **stats.to_dict())
    return {"out": str(args.out), "nodes": [p.stem for p in paths]}


def cmd_align(args) -> dict:
    config = _config(args)
    offset = _offset(args, config)
    by_node, _ = pipeline.ingest_logs(args.inputs, config.catalog())
    start = _parse_bound(args.start, offset)
    end = _parse_bound(args.end, offset, end=True)
    if (start is None) != (end is None):
        raise InvalidConfig("give both --start and --end, or neither")
    frames = pipeline.align(by_node, offset, start, end)
    pipeline.write_frames(frames, args.out)
    return {"out": str(args.out), "frames": {uid: f.manifest() for uid, f in frames.items()}}


def cmd_fit_deduction(args) -> dict:
    rows = []
    for path in args.labeled:
        rows.extend(pipeline.read_labeled(path))
    if args.frame:
        if not args.truth:
            raise InvalidConfig("--frame needs --truth to label false alarms")
        rows.extend(pipeline.labeled_corpus(pipeline.read_frames(args.frame), _truth_dir(args.truth)))
    if not rows:
        raise InvalidConfig("no labeled rows: give labeled CSVs or --frame with --truth")
    if args.corpus_out:
        pipeline.write_labeled(args.corpus_out, rows)
    base = motion.CalibrationConfig.from_json(args.calib) if args.calib else motion.CalibrationConfig()
    calib = pipeline.fit_calibration(rows, base)
    calib.write(args.out)
    if args.figure:
        plotting.save_figure(plotting.deduction_figure(calib.table), args.figure)
    return {"out": str(args.out), "rows": len(rows), "d": calib.table.d}


def cmd_calibrate(args) -> dict:
    config = _config(args)
    offset = _offset(args, config)
    calib = motion.CalibrationConfig.from_json(args.calib) if args.calib else config.calibration()
    frames = pipeline.read_frames(args.frame)
    results = pipeline.calibrate(frames, calib)
    pipeline.write_motion(args.out, results, offset)
    raw = [v for r in results.values() for v in r.raw.tolist() if v == v]
    return {"out": str(args.out), "nodes": list(results),
            "motion_cdf85": motion.cdf_threshold(raw) if raw else None}


def cmd_sound_analyze(args) -> dict:
    config = _config(args)
    offset = _offset(args, config)
    sound = config.sound
    if args.sound_config:
        try:
            raw = json.loads(Path(args.sound_config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"{args.sound_config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise InvalidConfig(f"{args.sound_config}: expected a JSON object")
        sound = SoundConfig.from_dict(raw)
    overrides = {k: v for k, v in (("alpha_reading", args.alpha_reading), ("ch_denominator", args.ch_denominator),
                                   ("beta", args.beta)) if v is not None}
    if overrides:
        sound = SoundConfig.from_dict({**sound.to_dict(), **overrides})
    frames = pipeline.read_frames(args.frame)
    result = analyze_frames(frames, sound, offset, rain=not args.no_rain)
    pipeline.write_sound(args.out, result, sound, offset)
    rows = pipeline.rain_rows(result.rain)
    if args.rain_out:
        pipeline.write_rain(args.rain_out, rows)
    return {"out": str(args.out), "beta": result.beta, "rain_intervals": len(rows)}


def cmd_fuse(args) -> dict:
    motion_ch, m_off = pipeline.read_motion(args.motion)
    sound_ch, s_off = pipeline.read_sound(args.sound)
    if m_off and s_off and m_off != s_off:
        raise InvalidConfig(f"motion ({m_off}) and sound ({s_off}) files disagree on the UTC offset")
    rain = pipeline.read_rain(args.rain) if args.rain else None
    truth = _truth_dir(args.truth) if args.truth else None
    series = pipeline.fuse_channels(motion_ch, sound_ch, rain, truth)
    config = _config(args)
    offset = resolve_utc_offset(args.utc_offset, config.utc_offset or m_off or s_off)
    fusion.write_series_json(args.out, series, format_utc_offset(offset))
    return {"out": str(args.out), "nodes": list(series),
            "missing": {uid: {"motion": s.missing_motion, "sound": s.missing_sound} for uid, s in series.items()}}


def cmd_heatmap(args) -> dict:
    series, stored = fusion.read_series_json(args.series)
    config = _config(args)
    offset = resolve_utc_offset(args.utc_offset, config.utc_offset or stored)
    if args.node:
        if args.node not in series:
            raise InvalidConfig(f"node {args.node!r} not in {sorted(series)}")
        s = series[args.node]
    elif len(series) == 1:
        s = next(iter(series.values()))
    else:
        s = fusion.pool_series(series)
    heatmap = fusion.aggregate_heatmap(s, args.select, offset, weather=args.weather)
    fmt = args.format or Path(args.out).suffix.lstrip(".").lower()
    vmax = args.vmax if args.vmax is not None else config.vmax
    fusion.export(heatmap, args.out, fmt, vmax=vmax)
    return {"out": str(args.out), "node": s.node_uid, "selector": heatmap.selector,
            "windows": int(heatmap.count.sum())}


def cmd_e2e(args) -> dict:
    config = _config(args)
    scenario = synthgen.Scenario.from_json(args.scenario) if args.scenario else synthgen.Scenario.from_dict({})
    report = pipeline.run_e2e(scenario, args.out, config, args.utc_offset)
    return {"out": str(args.out), "beta": report["beta"], "motion_cdf85": report["motion_cdf85"],
            "rain_false_positives": report["rain"]["false_positive_intervals"]}


# parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON")
    common.add_argument("--utc-offset", help="local time offset such as +08:00 (beats SPACEUTIL_UTC_OFFSET)")

    parser = _Parser(prog="spaceutil", description="Public-space utilization from sensor-node logs.")
    parser.add_argument("--version", action="version", version=f"spaceutil {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", help="generate a synthetic scenario with ground truth")
    p.add_argument("--scenario", help="scenario JSON (merged over the bundled default)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="parse and validate logs, split by node")
    p.add_argument("inputs", nargs="+", help="log files or directories of *.log")
    p.add_argument("--catalog", help="sensor catalog JSON")
    p.add_argument("--out", required=True, help="directory for <uid>.log and drop_stats.json")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("align", parents=[common], help="snap readings onto 5-minute windows")
    p.add_argument("inputs", nargs="+", help="log files or directories")
    p.add_argument("--start", help="first window: epoch ms or local ISO date")
    p.add_argument("--end", help="last window: epoch ms or local ISO date (whole day)")
    p.add_argument("--out", required=True, help="directory for <uid>.csv frames and manifests")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("fit-deduction", help="fit the deduction table from labeled false alarms")
    p.add_argument("labeled", nargs="*", help="CSV window_start,p_alpha,raw_motion,is_false_alarm")
    p.add_argument("--frame", action="append", default=[], help="frame CSV (with --truth)")
    p.add_argument("--truth", help="synthgen truth directory used to label --frame windows")
    p.add_argument("--corpus-out", help="also write the labeled corpus here")
    p.add_argument("--calib", help="existing calibration whose bounds/normValue are kept")
    p.add_argument("--figure", help="write a deduction plot (svg/png)")
    p.add_argument("--out", required=True, help="calibration JSON")
    p.set_defaults(func=cmd_fit_deduction)

    p = sub.add_parser("calibrate", parents=[common], help="motion calibration to eta_M")
    p.add_argument("--frame", action="append", required=True, help="frame CSV or directory (repeatable)")
    p.add_argument("--calib", help="calibration JSON (default: config, then bundled)")
    p.add_argument("--out", required=True, help="motion JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("sound", help="sound analytics")
    sound_sub = p.add_subparsers(dest="sound_command", parser_class=_Parser, metavar="ACTION")
    sound_sub.required = True
    a = sound_sub.add_parser("analyze", parents=[common], help="clustering, chi-square activity and rain")
    a.add_argument("--frame", action="append", required=True, help="frame CSV or directory (repeatable)")
    a.add_argument("--sound-config", help="sound config JSON (overrides the pipeline config's sound block)")
    a.add_argument("--alpha-reading", choices=ALPHA_READINGS)
    a.add_argument("--ch-denominator", choices=CH_DENOMINATORS)
    a.add_argument("--beta", type=float, help="fixed critical value instead of the 85th percentile")
    a.add_argument("--no-rain", action="store_true", help="skip joint rain detection")
    a.add_argument("--out", required=True, help="per-window JSON")
    a.add_argument("--rain-out", help="rain intervals CSV day,start,end")
    a.set_defaults(func=cmd_sound_analyze)

    p = sub.add_parser("fuse", parents=[common], help="combine motion and sound utilization")
    p.add_argument("--motion", required=True)
    p.add_argument("--sound", required=True)
    p.add_argument("--rain", help="rain CSV; tags windows rain/dry")
    p.add_argument("--truth", help="synthgen truth directory; tags windows with its weather labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("heatmap", parents=[common], help="day-of-week x hour heatmap")
    p.add_argument("--series", required=True)
    p.add_argument("--select", default="all", help="all | weekday | weekend | YYYY-MM-DD | A..B")
    p.add_argument("--node", help="node uid (default: pool every node)")
    p.add_argument("--weather", help="keep only windows with this weather tag")
    p.add_argument("--format", choices=fusion.EXPORT_FORMATS)
    p.add_argument("--vmax", type=float, help="top of the colour ramp (0.5 default, 1 for full range)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("e2e", parents=[common], help="synth through report in one directory")
    p.add_argument("--scenario", help="scenario JSON (default: bundled month)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_e2e)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        summary = args.func(args)
    except SpaceUtilError as exc:
        emit("error", error=type(exc).__name__, message=str(exc))
        if isinstance(exc, UsageError):
            print(parser.format_usage().rstrip(), file=sys.stderr)
        return 1
    except OSError as exc:
        emit("error", error=type(exc).__name__, message=str(exc))
        return 2
    emit("info", command=args.command, **summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
