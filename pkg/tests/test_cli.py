from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from spaceutil import pipeline
from spaceutil.cli import main
from spaceutil.config import ENV_UTC_OFFSET
from spaceutil.fusion import Heatmap, read_series_json

SMALL = {"seed": 7, "days": 2, "nodes": 3, "start_date": "2016-08-01",
         "rain": {"events": [{"date": "2016-08-02", "start": "14:00", "duration_min": 60}]}}


def run(*argv) -> int:
    return main([str(a) for a in argv])


def stderr_events(capsys) -> list[dict]:
    return [json.loads(line) for line in capsys.readouterr().err.splitlines() if line.startswith("{")]


@pytest.fixture(scope="module")
def stages(tmp_path_factory):
    """Run every stage once on the small scenario; return the work directory."""
    w = tmp_path_factory.mktemp("stages")
    (w / "scenario.json").write_text(json.dumps(SMALL))
    assert run("synth", "--scenario", w / "scenario.json", "--out", w / "synth") == 0
    assert run("ingest", w / "synth" / "logs", "--out", w / "readings") == 0
    assert run("align", w / "readings", "--start", "2016-08-01", "--end", "2016-08-02",
               "--out", w / "frames") == 0
    assert run("fit-deduction", "--frame", w / "frames", "--truth", w / "synth" / "truth",
               "--corpus-out", w / "labeled.csv", "--figure", w / "deduction.svg",
               "--out", w / "calib.json") == 0
    assert run("calibrate", "--frame", w / "frames", "--calib", w / "calib.json", "--out", w / "motion.json") == 0
    assert run("sound", "analyze", "--frame", w / "frames", "--out", w / "sound.json",
               "--rain-out", w / "rain.csv") == 0
    assert run("fuse", "--motion", w / "motion.json", "--sound", w / "sound.json", "--rain", w / "rain.csv",
               "--out", w / "series.json") == 0
    return w


def test_stage_outputs(stages):
    w = stages
    assert sorted(p.name for p in (w / "readings").glob("*.log")) == ["N1.log", "N2.log", "N3.log"]
    stats = json.loads((w / "readings" / "drop_stats.json").read_text())
    assert stats["lines_total"] == stats["lines_ignored"] + stats["lines_parsed"] + stats["lines_malformed"]
    frames = pipeline.read_frames([w / "frames"])
    assert all(len(f) == 576 for f in frames.values())
    assert (w / "deduction.svg").read_text().startswith("<?xml")
    rows = pipeline.read_rain(w / "rain.csv")
    assert [r[0] for r in rows] == ["2016-08-02"]
    series, offset = read_series_json(w / "series.json")
    assert offset == "+08:00" and sorted(series) == ["N1", "N2", "N3"]
    assert {w_ for s in series.values() for w_ in s.weather} == {"rain", "dry"}


def test_labeled_corpus_gives_same_fit(stages, tmp_path):
    assert run("fit-deduction", stages / "labeled.csv", "--out", tmp_path / "c.json") == 0
    assert (tmp_path / "c.json").read_bytes() == (stages / "calib.json").read_bytes()


def test_heatmap_outputs(stages, tmp_path, capsys):
    for fmt in ("csv", "json", "svg"):
        assert run("heatmap", "--series", stages / "series.json", "--select", "weekday", "--node", "N2",
                   "--out", tmp_path / f"h.{fmt}") == 0
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 8
    series, _ = read_series_json(stages / "series.json")
    hm = Heatmap.from_dict(json.loads((tmp_path / "h.json").read_text()))
    assert hm.count.sum() == len(series["N2"]) and hm.node_uid == "N2"
    capsys.readouterr()
    assert run("heatmap", "--series", stages / "series.json", "--out", tmp_path / "all.json") == 0
    info = stderr_events(capsys)[-1]
    assert info["node"] == "all-nodes" and info["windows"] == sum(len(s) for s in series.values())


def test_heatmap_weather_filter(stages, tmp_path):
    assert run("heatmap", "--series", stages / "series.json", "--weather", "rain", "--out", tmp_path / "r.json") == 0
    hm = Heatmap.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert set(zip(*np.nonzero(hm.count))) <= {(1, 14), (1, 15)}


def test_utc_offset_precedence(stages, tmp_path, monkeypatch):
    monkeypatch.delenv(ENV_UTC_OFFSET, raising=False)
    series = stages / "series.json"
    # the same calendar date selects different windows under each offset
    assert run("heatmap", "--series", series, "--select", "2016-08-01", "--out", tmp_path / "a.json") == 0
    monkeypatch.setenv(ENV_UTC_OFFSET, "+00:00")
    assert run("heatmap", "--series", series, "--select", "2016-08-01", "--out", tmp_path / "b.json") == 0
    assert run("heatmap", "--series", series, "--select", "2016-08-01", "--utc-offset", "+08:00",
               "--out", tmp_path / "c.json") == 0
    a, b, c = (Heatmap.from_dict(json.loads((tmp_path / f"{x}.json").read_text())) for x in "abc")
    assert np.array_equal(a.count, c.count)
    assert set(np.nonzero(a.count.sum(axis=1))[0]) == {0}
    assert not np.array_equal(a.count, b.count)


def test_sound_overrides(stages, tmp_path):
    assert run("sound", "analyze", "--frame", stages / "frames", "--beta", "3.5", "--no-rain",
               "--ch-denominator", "unadjusted", "--out", tmp_path / "s.json") == 0
    raw = json.loads((tmp_path / "s.json").read_text())
    assert raw["beta"] == 3.5 and raw["config"]["ch_denominator"] == "unadjusted"


def test_e2e_small(tmp_path, capsys):
    (tmp_path / "s.json").write_text(json.dumps(SMALL))
    assert run("e2e", "--scenario", tmp_path / "s.json", "--out", tmp_path / "run") == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    for name in ("series.json", "report.json", "heatmaps/N1_weekday.svg", "heatmaps/all-nodes_all.csv"):
        assert name in report["outputs"]
    for name in report["outputs"]:
        assert (tmp_path / "run" / name).is_file()
    assert report["rain"]["false_positive_intervals"] == 0
    assert stderr_events(capsys)[-1]["command"] == "e2e"


@pytest.mark.parametrize("argv, code", [
    (["frobnicate"], 1),
    ([], 1),
    (["heatmap", "--series", "/nonexistent/series.json", "--out", "x.csv"], 2),
    (["calibrate", "--frame", "/nonexistent", "--out", "m.json"], 2),
    (["synth", "--scenario", "/nonexistent.json", "--out", "x"], 2),
    (["fit-deduction", "--out", "c.json"], 1),
])
def test_exit_codes(argv, code, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code


def test_validation_errors_exit_one(stages, tmp_path, capsys):
    assert run("heatmap", "--series", stages / "series.json", "--select", "monday", "--out", tmp_path / "h.csv") == 1
    err = stderr_events(capsys)[-1]
    assert err["level"] == "error" and err["error"] == "InvalidSelector"
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"nope": 1}))
    assert run("heatmap", "--config", bad, "--series", stages / "series.json", "--out", tmp_path / "h.csv") == 1
    assert run("heatmap", "--series", stages / "series.json", "--node", "N9", "--out", tmp_path / "h.csv") == 1
    assert run("align", stages / "readings", "--start", "2016-08-01", "--out", tmp_path / "f") == 1


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("spaceutil ")


def test_read_frames_requires_csv(tmp_path):
    with pytest.raises(FileNotFoundError):
        pipeline.read_frames([Path(tmp_path) / "none"])
