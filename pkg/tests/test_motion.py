from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaceutil.errors import (DeductionAtCapacity, EmptyInput, InsufficientBins, InvalidConfig,
                              ZeroVariance)
from spaceutil.motion import (DEFAULT_BOUNDS, CalibrationConfig, DeductionTable, LikelihoodBounds,
                              aggregate_likelihood, bin_index, calibrate, calibrate_frame,
                              cdf_threshold, deduction, fit_deduction_table, labeled_samples,
                              likelihood, normalize_motion, p_alpha_series, pearson, rescale)
from spaceutil.timeline import AlignedFrame

TEMP = LikelihoodBounds("temperature", 28.0, 40.0)


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(ZeroVariance):
        pearson([1, 2, 3], [5, 5, 5])


def test_pearson_ignores_nan_pairs():
    assert pearson([1, 2, np.nan, 3], [2, 4, 100, 6]) == pytest.approx(1.0)


def test_likelihood_examples():
    assert likelihood(27, TEMP) == 0.0
    assert likelihood(40, TEMP) == 1.0
    assert likelihood(34, TEMP) == 0.5


def test_aggregate_examples():
    assert aggregate_likelihood([1.0, 0.5]) == 0.75
    assert aggregate_likelihood([0.0, 0.0]) == 0.0
    assert aggregate_likelihood([1.0]) == 1.0
    with pytest.raises(EmptyInput):
        aggregate_likelihood([])


def test_bounds_must_increase():
    with pytest.raises(InvalidConfig):
        LikelihoodBounds("lux", 5.0, 5.0)


def test_p_alpha_series_missing_counts_zero():
    cols = {"temperature": np.array([34.0, np.nan]), "lux": np.array([33000.0, 33000.0])}
    np.testing.assert_allclose(p_alpha_series(cols, DEFAULT_BOUNDS), [0.75, 0.5])


def test_bins_half_open():
    assert bin_index(0.0) == 0
    assert bin_index(0.1) == 0
    assert bin_index(0.1000001) == 1
    assert bin_index(1.0) == 9


def test_fit_zero_motion_gives_zero_table():
    samples = [(p, 0.0) for p in np.linspace(0.05, 0.95, 10)]
    assert fit_deduction_table(samples).d == [0.0] * 10


def test_fit_needs_four_bins():
    with pytest.raises(InsufficientBins):
        fit_deduction_table([(0.05, 1), (0.15, 2), (0.25, 3)])


def _normal_equation_cubic(x, y):
    a = np.vander(np.asarray(x, dtype=float), 4)
    return np.linalg.solve(a.T @ a, a.T @ np.asarray(y, dtype=float))


def test_fit_matches_normal_equations():
    means = [2.0, 4.0, 8.0, 16.0, 32.0]
    centers = [0.05, 0.15, 0.25, 0.35, 0.45]
    samples = [(c, m + e) for c, m in zip(centers, means) for e in (-1.0, 1.0)]
    table = fit_deduction_table(samples)
    coef = _normal_equation_cubic(centers, [1.5 * m for m in means])
    np.testing.assert_allclose(table.fitted, coef, rtol=1e-9, atol=1e-9)
    fitted = np.polyval(coef, centers)
    residual = np.max(np.abs(fitted - 1.5 * np.array(means)))
    for d, m in zip(table.d[:5], means):
        assert d >= 1.5 * m - residual - 1e-9
    assert table.bin_means[:5] == means and table.bin_means[5] is None
    assert table.bin_counts == [2, 2, 2, 2, 2, 0, 0, 0, 0, 0]


def test_fit_clamps_and_is_monotone():
    samples = [(c, v) for c, v in zip([0.05, 0.35, 0.65, 0.95], [90.0, 0.0, 95.0, 99.0])]
    d = fit_deduction_table(samples).d
    assert all(0 <= v <= 99 for v in d)
    assert d == sorted(d)


def test_deduction_lookup():
    table = DeductionTable.zeros()
    table = DeductionTable(table.lambda_low, table.lambda_high, [float(i) for i in range(1, 11)])
    assert deduction(0.0, table) == 0.0
    assert deduction(1.0, table) == 10.0
    assert deduction(0.55, table) == 6.0
    np.testing.assert_array_equal(deduction(np.array([0.0, 0.1, 0.11]), table), [0.0, 1.0, 2.0])


def test_bundled_table_bin_six():
    # frozen from the deduction fit on the default scenario's false-alarm corpus
    table = CalibrationConfig.default().table
    assert deduction(0.55, table) == table.d[5] == 14.569007821


@pytest.mark.parametrize("bad", [
    [1.0] * 9 + [100.0],
    [2.0, 1.0] + [3.0] * 8,
    [-1.0] + [0.0] * 9,
])
def test_table_validation(bad):
    z = DeductionTable.zeros()
    with pytest.raises(InvalidConfig):
        DeductionTable(z.lambda_low, z.lambda_high, bad)


def test_calibrate_examples():
    assert calibrate(30, 12) == 18
    assert calibrate(5, 12) == 0
    assert calibrate(7, 0) == 7


def test_rescale_examples():
    assert rescale(18, 12, 100) == pytest.approx(20.454545454545453)
    assert rescale(42, 0, 100) == 42
    with pytest.raises(DeductionAtCapacity):
        rescale(50, 100, 100)


def test_cdf_threshold_examples():
    assert cdf_threshold(range(1, 101), 0.85) == 85
    assert cdf_threshold([3.0] * 7, 0.85) == 3.0
    assert cdf_threshold(np.linspace(0, 10, 101), 0.85) == pytest.approx(8.5)
    with pytest.raises(EmptyInput):
        cdf_threshold([])


def test_normalize_examples():
    assert normalize_motion(4, 10) == 0.4
    assert normalize_motion(25, 10) == 1.0
    assert normalize_motion(0, 10) == 0.0


def test_calibration_config_round_trip(tmp_path):
    cfg = CalibrationConfig.default()
    path = tmp_path / "c.json"
    cfg.write(path)
    back = CalibrationConfig.from_json(path)
    assert back.to_dict() == cfg.to_dict()
    with pytest.raises(InvalidConfig):
        CalibrationConfig.from_dict({"bounds": {}, "table": {}})


def test_calibrate_frame_keeps_missing():
    cfg = CalibrationConfig.default()
    cols = {"motion": np.array([30.0, np.nan, 0.0]), "temperature": np.array([40.0, 40.0, 20.0]),
            "lux": np.array([33000.0, 33000.0, 0.0])}
    res = calibrate_frame(AlignedFrame("N1", np.arange(3) * 300_000, cols), cfg)
    assert res.deduction[0] == cfg.table.d[-1]
    assert np.isnan(res.eta[1])
    assert res.eta[2] == 0.0
    expected = min((30.0 - cfg.table.d[-1]) * 100 / (100 - cfg.table.d[-1]) / 10, 1.0)
    assert res.eta[0] == pytest.approx(expected)


def test_labeled_samples():
    cols = {"motion": np.array([3.0, np.nan]), "temperature": np.array([34.0, 34.0]),
            "lux": np.array([8000.0, 8000.0])}
    rows = labeled_samples(AlignedFrame("N1", np.array([0, 300_000]), cols), {0})
    assert rows == [(0, 0.25, 3.0, 1)]


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 1), st.floats(0, 1))
def test_chain_monotone_in_motion(m1, m2, p1, p2):
    table = CalibrationConfig.default().table
    lo, hi = sorted((m1, m2))
    d = deduction(p1, table)
    eta = lambda m: normalize_motion(rescale(calibrate(m, d), d), 10.0)
    assert 0.0 <= eta(lo) <= eta(hi) <= 1.0
    # more false-alarm-prone weather never raises the calibrated value
    pl, ph = sorted((p1, p2))
    out = lambda p: calibrate(hi, deduction(p, table))
    assert out(ph) <= out(pl)
