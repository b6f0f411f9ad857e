import numpy as np
import pytest

from conftest import make_panel
from glad.core import ForecastSet
from glad.detection import (TAU_MIN, ResidualSet, ThresholdMap, candidate_thresholds, flag, interval_flag,
                            residuals, sweep_thresholds)


def res_of(values, valid=None, start=0):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    valid = np.ones(values.shape, bool) if valid is None else np.asarray(valid, bool)
    return ResidualSet(start, values, valid)


def test_residuals_absolute_and_masked():
    v = np.array([[1.0, np.nan, 3.0, 5.0]])
    p = make_panel(v)
    r = residuals(p, ForecastSet(1, np.array([[0.0, 4.0, 4.0]])))
    assert r.start == 1
    np.testing.assert_array_equal(r.valid, [[False, True, True]])
    np.testing.assert_array_equal(r.values, [[0.0, 1.0, 1.0]])
    with pytest.raises(ValueError):
        residuals(p, ForecastSet(1, np.zeros((1, 3))), range(0, 3))


def test_candidates_include_floor_midpoints_and_top():
    c = candidate_thresholds(np.array([0.5, 0.1, 0.5, 0.3]))
    np.testing.assert_allclose(c[:3], [TAU_MIN, 0.2, 0.4])
    assert c[-1] > 0.5


def test_sweep_finds_separating_threshold():
    r = res_of([[0.1, 0.2, 3.0, 0.15, 2.5, 0.3]])
    lab = np.array([[0, 0, 1, 0, 1, 0]], bool)
    tm = sweep_thresholds(r, lab)
    assert 0.3 < tm.thresholds[0] < 2.5 and tm.val_f1[0] == 1.0
    # ties go to the largest threshold: every tau in (0.3, 2.5) is optimal
    assert tm.thresholds[0] == pytest.approx((0.3 + 2.5) / 2)


def test_node_without_labels_uses_pooled_threshold():
    r = res_of([[0.1, 4.0, 0.1], [0.2, 0.3, 9.0]])
    lab = np.array([[0, 1, 0], [0, 0, 0]], bool)
    tm = sweep_thresholds(r, lab)
    assert tm.pooled.tolist() == [False, True]
    assert tm.thresholds[1] > 0.3
    own = sweep_thresholds(r, lab, fallback=False)
    assert own.thresholds[1] > 9.0 and own.val_f1[1] == 1.0


def test_flag_is_strict():
    r = res_of([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(flag(r, [2.0]), [[False, False, True]])


def test_flag_ignores_invalid_positions():
    r = res_of([[5.0, 5.0]], valid=[[True, False]])
    np.testing.assert_array_equal(flag(r, [1.0]), [[True, False]])


def test_sweep_needs_valid_residuals():
    with pytest.raises(ValueError):
        sweep_thresholds(res_of([[1.0]], valid=[[False]]), np.zeros((1, 1), bool))


def test_threshold_csv_round_trip(tmp_path):
    tm = ThresholdMap(("a", "b"), np.array([0.25, 1.5]), np.array([1.0, 0.5]), np.zeros(2, int),
                      np.zeros(2, bool))
    tm.to_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "node_id,threshold,val_f1"
    back = ThresholdMap.from_csv(tmp_path / "t.csv")
    assert back.node_ids == ("a", "b") and np.array_equal(back.thresholds, tm.thresholds)


def test_interval_flag():
    p = make_panel([[0.0, 1.0, 5.0]])
    fc = ForecastSet(1, np.array([[0.5, 0.5]]), np.array([[1.0, 1.0]]))
    np.testing.assert_array_equal(interval_flag(p, fc), [[False, True]])
    with pytest.raises(ValueError):
        interval_flag(p, ForecastSet(1, np.zeros((1, 2))))


def test_window_bounds():
    r = res_of(np.zeros((1, 10)), start=5)
    assert r.window(range(7, 9)).values.shape == (1, 2)
    with pytest.raises(ValueError):
        r.window(range(3, 9))
