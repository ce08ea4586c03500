from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaceutil.errors import AllTokensGarbage, InvalidConfig, MalformedLine
from spaceutil.ingest import (DropStats, RawPacket, SensorCatalog, ValidatedReading, format_number,
                              parse_lines, parse_packet, read_log, split_by_node, validate,
                              write_readings)


def test_parse_packet_two_tokens():
    p = parse_packet("1470000000000,N1,K:31.5;L:12000")
    assert p == RawPacket(1470000000000, "N1", (("K", "31.5"), ("L", "12000")))


def test_parse_packet_empty_payload():
    p = parse_packet("1470000000000,N1,")
    assert p.tokens == ()


@pytest.mark.parametrize("line", [
    "garbage-no-commas",
    "abc,N1,K:1",
    "1470000000000,,K:1",
    "1470000000000,N 1,K:1",
    "99999999999999999,N1,K:1",
])
def test_parse_packet_malformed(line):
    with pytest.raises(MalformedLine):
        parse_packet(line)


def test_unknown_id_dropped():
    stats = DropStats()
    r = validate(RawPacket(1, "N1", (("K", "31.5"), ("Z", "99"))), stats=stats)
    assert r.temperature == 31.5
    assert r.present() == {"temperature": 31.5}
    assert stats.tokens_dropped == 1
    assert stats.tokens_dropped_by_reason["unknown_id"] == 1


def test_out_of_range_only_token_is_all_garbage():
    with pytest.raises(AllTokensGarbage):
        validate(RawPacket(1, "N1", (("K", "250"),)))


def test_histogram_token():
    r = validate(RawPacket(1, "N1", (("X", "10,20,5,3,0"),)))
    assert r.noise == (10.0, 20.0, 5.0, 3.0, 0.0)


@pytest.mark.parametrize("text, reason", [
    ("10,20,5,3", "unparseable"),
    ("10,20,5,3,x", "unparseable"),
    ("10,20,5,3,-1", "out_of_range"),
    ("1000,1000,1000,1000,1", "out_of_range"),
])
def test_bad_histograms(text, reason):
    stats = DropStats()
    r = validate(RawPacket(1, "N1", (("X", text), ("M", "3"))), stats=stats)
    assert r.noise is None and r.motion == 3.0
    assert stats.tokens_dropped_by_reason[reason] == 1


def test_per_token_salvage_and_duplicate_id():
    stats = DropStats()
    r = validate(RawPacket(1, "N1", (("K", "nan"), ("L", "inf"), ("M", "4"), ("M", "5"), ("H", "55"))),
                 stats=stats)
    assert r.motion == 4.0 and r.humidity == 55.0
    assert r.temperature is None and r.lux is None
    assert stats.tokens_dropped_by_reason["unparseable"] == 2
    assert stats.tokens_dropped_by_reason["duplicate_id"] == 1


def test_range_boundaries_inclusive():
    r = validate(RawPacket(1, "N1", (("K", "-10"), ("H", "100"), ("M", "0"))))
    assert (r.temperature, r.humidity, r.motion) == (-10.0, 100.0, 0.0)


def test_split_by_node_partition_and_sort():
    rs = [ValidatedReading(t, uid, motion=1.0) for t, uid in
          [(5, "N1"), (3, "N2"), (1, "N1"), (4, "N1"), (2, "N2")]]
    out = split_by_node(rs)
    assert [len(out["N1"]), len(out["N2"])] == [3, 2]
    assert [r.timestamp for r in out["N1"]] == [1, 4, 5]
    assert split_by_node([]) == {}


def test_parse_lines_counts():
    lines = ["# header", "", "1,N1,K:30", "bad", "2,N1,K:999", "3,N2,"]
    stats = DropStats()
    out = list(parse_lines(lines, stats=stats))
    assert [r.timestamp for r in out] == [1, 3]
    assert stats.lines_total == 6
    assert stats.lines_ignored == 2
    assert stats.lines_malformed == 1
    assert stats.lines_parsed == 3
    assert stats.readings_all_garbage == 1


def test_round_trip_through_file(tmp_path):
    rs = [ValidatedReading(1470000000000, "N1", motion=3.0, noise=(1.0, 2.0, 3.0, 4.0, 5.0), lux=0.5),
          ValidatedReading(1470000300000, "N1", temperature=31.25)]
    path = tmp_path / "n1.log"
    write_readings(path, rs)
    assert read_log(path) == rs


def test_format_number():
    assert format_number(3.0) == "3"
    assert format_number(31.5) == "31.5"
    assert format_number(-0.0) == "0"


def test_catalog_rejects_missing_kind():
    raw = {"M": {"kind": "motion", "min": 0, "max": 100}}
    with pytest.raises(InvalidConfig):
        SensorCatalog.from_dict(raw)


def test_catalog_default_ranges():
    cat = SensorCatalog.default()
    assert (cat["K"].min, cat["K"].max) == (-10.0, 80.0)
    assert cat["X"].max_total == 3000.0


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=80))
def test_parse_lines_never_raises(line):
    stats = DropStats()
    out = list(parse_lines([line], stats=stats))
    assert len(out) <= 1
    assert stats.lines_total == stats.lines_ignored + stats.lines_malformed + stats.lines_parsed
    assert stats.tokens_total == stats.tokens_kept + stats.tokens_dropped


_token = st.tuples(st.sampled_from("MXKLRUBHZ"), st.one_of(
    st.floats(allow_nan=True, allow_infinity=True).map(repr),
    st.integers(-50, 5000).map(str),
    st.lists(st.integers(-5, 900), min_size=4, max_size=6).map(lambda v: ",".join(map(str, v)))))


@settings(max_examples=300, deadline=None)
@given(st.lists(_token, max_size=10))
def test_validated_values_in_range(tokens):
    cat = SensorCatalog.default()
    try:
        r = validate(RawPacket(1, "N1", tuple(tokens)), cat)
    except AllTokensGarbage:
        return
    for spec in cat.entries.values():
        value = getattr(r, spec.kind)
        if value is None:
            continue
        values = value if spec.kind == "noise" else (value,)
        assert all(spec.min <= v <= spec.max for v in values)
