from __future__ import annotations

import numpy as np
import pytest

from spaceutil import pipeline
from spaceutil.errors import InvalidConfig


def test_interval_iou():
    assert pipeline.interval_iou((0, 10), (0, 10)) == 1.0
    assert pipeline.interval_iou((0, 10), (5, 15)) == pytest.approx(5 / 15)
    assert pipeline.interval_iou((0, 10), (20, 30)) == 0.0


def test_rain_eval():
    truth = [("2016-08-04", 100, 200)]
    detected = [("2016-08-04", 120, 200), ("2016-08-05", 0, 50)]
    out = pipeline.rain_eval(detected, truth)
    assert out["events"][0]["iou"] == 0.8
    assert out["false_positive_intervals"] == 1
    assert pipeline.rain_eval([], truth)["events"][0]["iou"] == 0.0


def test_rain_tags():
    assert pipeline.rain_tags(np.array([0, 100, 200]), [("d", 100, 200)]) == ["dry", "rain", "dry"]


def test_fuse_channels_missing_channels():
    motion_ch = {"A": (np.array([0, 300_000]), np.array([0.3, np.nan])), "M": (np.array([0]), np.array([0.1]))}
    sound_ch = {"A": (np.array([300_000, 600_000]), np.array([1.0, 0.0])), "S": (np.array([0]), np.array([1.0]))}
    series = pipeline.fuse_channels(motion_ch, sound_ch, rain=[("d", 600_000, 900_000)])
    a = series["A"]
    assert a.window_start.tolist() == [0, 300_000, 600_000]
    assert a.eta.tolist() == [0.3, 1.0, 0.0]
    assert (a.missing_motion, a.missing_sound) == (2, 1)
    assert a.weather == ["dry", "dry", "rain"]
    assert series["M"].eta.tolist() == [0.1] and series["M"].missing_sound == 1
    assert series["S"].eta.tolist() == [1.0] and series["S"].missing_motion == 1


def test_fuse_channels_truth_weather():
    truth = {"A": {"window_start": np.array([0, 300_000]), "weather": ["clear", "cloudy"]}}
    series = pipeline.fuse_channels({"A": (np.array([0, 300_000]), np.array([0.0, 0.0]))}, {}, truth=truth)
    assert series["A"].weather == ["clear", "cloudy"]


def test_labeled_round_trip(tmp_path):
    rows = [(0, 0.25, 3.0, 1), (300_000, 0.5, 0.0, 0)]
    path = pipeline.write_labeled(tmp_path / "l.csv", rows)
    assert pipeline.read_labeled(path) == rows
    path.write_text("window_start,p_alpha,raw_motion,is_false_alarm\n0,1.5,3,1\n")
    with pytest.raises(InvalidConfig):
        pipeline.read_labeled(path)
    path.write_text("a,b\n")
    with pytest.raises(InvalidConfig):
        pipeline.read_labeled(path)


def test_rain_round_trip(tmp_path):
    rows = [("2016-08-04", 1, 2)]
    assert pipeline.read_rain(pipeline.write_rain(tmp_path / "r.csv", rows)) == rows
    (tmp_path / "bad.csv").write_text("day,start\n")
    with pytest.raises(InvalidConfig):
        pipeline.read_rain(tmp_path / "bad.csv")


def test_heatmap_names():
    assert pipeline.heatmap_name("N1", "2016-08-01..2016-08-07") == "N1_2016-08-01_to_2016-08-07"
