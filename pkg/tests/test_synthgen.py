from __future__ import annotations

import numpy as np
import pytest

from spaceutil import ingest, synthgen, timeline
from spaceutil.errors import InvalidScenario

ZERO24 = [0.0] * 24
NULL = {
    "days": 1, "nodes": 2, "rain": {"events": []},
    "activity": {"weekday_rate": ZERO24, "weekend_rate": ZERO24},
    "audible": {"weekday_rate": ZERO24, "weekend_rate": ZERO24},
    "false_alarm": {"gain": 0.0},
    "corruption": {"malformed_rate": 0.0, "garbage_token_rate": 0.0, "duplicate_rate": 0.0,
                   "loss_rate": 0.0},
}


def _readings(gen):
    return ingest.split_by_node(r for lines in gen.logs.values() for r in ingest.parse_lines(lines))


def test_null_scenario():
    scn = synthgen.Scenario.from_dict({**NULL, "sound": {"node_tilt": 0.0}})
    gen = synthgen.generate(scn)
    by_node = _readings(gen)
    for uid, rs in by_node.items():
        assert len(rs) == 288
        assert all(r.motion == 0 for r in rs)
        hist = np.array([r.noise for r in rs])
        share = hist / hist.sum(axis=1, keepdims=True)
        hour = timeline.local_hour([r.timestamp for r in rs], scn.utc_offset_min)
        for seg in scn["sound"]["segments"]:
            sel = (hour >= seg["start"]) & (hour < seg["end"])
            np.testing.assert_allclose(share[sel].mean(axis=0), seg["weekday"], atol=0.03)
        t = gen.truth[uid]
        assert not t["activity"].any() and not t["false_alarm"].any() and not t["rain"].any()


def test_duplicate_rate_one():
    raw = {**NULL, "corruption": {**NULL["corruption"], "duplicate_rate": 1.0}}
    gen = synthgen.generate(raw)
    for lines in gen.logs.values():
        assert len(lines) == 2 * 288
        assert lines[0::2] == lines[1::2]
    base = _readings(synthgen.generate(NULL))
    for uid, rs in _readings(gen).items():
        unique, removed = timeline.deduplicate(rs)
        assert removed == 288
        assert unique == base[uid]


def test_deterministic_and_seeded(small_scenario):
    a = synthgen.generate(small_scenario)
    b = synthgen.generate(small_scenario)
    c = synthgen.generate({**small_scenario, "seed": 8})
    assert a.logs == b.logs
    assert a.logs != c.logs


def test_truth_consistency(small_scenario):
    gen = synthgen.generate(small_scenario)
    for t in gen.truth.values():
        np.testing.assert_array_equal(t["raw_motion"], np.minimum(t["activity_motion"] + t["fa_motion"], 100))
        assert not np.any(t["false_alarm"].astype(bool) & t["activity"].astype(bool))
        assert not np.any(t["audible"].astype(bool) & t["activity"].astype(bool))
        assert set(t["weather"]) <= {"clear", "cloudy", "rain"}
    (day, start, end), = gen.rain_events
    assert day == "2016-08-02" and end - start == 60 * 60_000


def test_corruption_counts_reconcile():
    gen = synthgen.generate({**NULL, "corruption": {"malformed_rate": 0.05, "garbage_token_rate": 0.05,
                                                    "duplicate_rate": 0.05, "loss_rate": 0.05}})
    for uid, lines in gen.logs.items():
        c = gen.corruption[uid]
        assert c["lines_written"] == len(lines)
        assert c["lost_lines"] + c["lines_written"] - c["duplicate_lines"] == 288
        stats = ingest.DropStats()
        list(ingest.parse_lines(lines, stats=stats))
        assert stats.lines_malformed == c["malformed_lines"]


def test_write_and_read_truth(tmp_path, small_scenario):
    scn = synthgen.Scenario.from_dict(small_scenario)
    gen = synthgen.generate(scn)
    out = synthgen.write_generated(gen, tmp_path, scn)
    assert sorted(p.name for p in (out / "logs").iterdir()) == ["N1.log", "N2.log", "N3.log"]
    t = synthgen.read_truth(out / "truth" / "N1.csv")
    for col in synthgen.TRUTH_COLUMNS:
        if col == "weather":
            assert t[col] == list(gen.truth["N1"][col])
        else:
            np.testing.assert_array_equal(t[col], gen.truth["N1"][col])
    assert synthgen.read_rain_truth(out / "truth" / "rain.csv") == gen.rain_events
    assert synthgen.Scenario.from_json(out / "scenario.json").raw == scn.raw


def test_default_scenario_shape():
    scn = synthgen.Scenario.from_dict({})
    assert scn.days == 31 and len(scn.nodes) == 7
    assert scn.utc_offset_min == 480
    assert len(scn.window_starts()) == 31 * 288


@pytest.mark.parametrize("override", [
    {"seed": -1},
    {"seed": "x"},
    {"days": 0},
    {"nodes": ["A", "A"]},
    {"start_date": "2016-02-30"},
    {"utc_offset": "+25:00"},
    {"corruption": {"loss_rate": 1.5}},
    {"activity": {"weekday_rate": [0.1] * 23}},
    {"rain": {"events": [{"date": "2017-01-01", "start": "10:00", "duration_min": 30}]}},
    {"rain": {"events": [{"date": "2016-08-02", "start": "25:00", "duration_min": 30}]}},
    {"rain": {"events": [{"date": "2016-08-02", "start": "10:00"}]}},
    {"sound": {"activity_profile": [1, 2, 3]}},
    {"sound": {"sample_loss": 1.0}},
    {"sound": {"concentration": 0}},
    {"audible": {"duration": [3, 1]}},
    {"false_alarm": {"gain": -1}},
])
def test_invalid_scenarios(override):
    with pytest.raises(InvalidScenario):
        synthgen.Scenario.from_dict(override)


def test_bad_scenario_json(tmp_path):
    path = tmp_path / "s.json"
    path.write_text("{not json")
    with pytest.raises(InvalidScenario):
        synthgen.Scenario.from_json(path)
