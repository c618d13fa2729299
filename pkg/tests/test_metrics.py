import numpy as np
import pytest

from jadce.metrics import (
    calibrate_threshold,
    detect_and_pmd,
    joint_activity_statistic,
    nmse,
    timed,
)


def test_nmse_hand_computed():
    true = np.array([[1.0 + 0j, 0.0], [2.0, 0.0], [0.0, 0.0]])
    est = np.array([[0.5 + 0j, 0.0], [2.0, 0.0], [9.0, 9.0]])
    # rows 0 and 1 active: errors 0.25/1 and 0/4
    out = nmse(true, est, np.array([0, 1]))
    np.testing.assert_allclose(out, 0.5 * (0.25 + 0.0))
    assert nmse(true, est, np.array([], dtype=int)) is None
    with pytest.raises(ValueError):
        nmse(true, est[:2], np.array([0]))


def test_threshold_is_upper_order_statistic():
    scores = np.arange(1.0, 1001.0)
    assert calibrate_threshold(scores, 1e-3) == 1000.0
    assert calibrate_threshold(scores, 2e-3) == 999.0
    # the 'higher' method never interpolates below an observed score
    assert calibrate_threshold(np.array([0.0, 0.0, 0.0, 5.0]), 0.3) == 5.0


def test_threshold_warns_on_small_batches():
    with pytest.warns(UserWarning, match="unreliable"):
        calibrate_threshold(np.arange(10.0), 1e-3)


def test_threshold_validation():
    with pytest.raises(ValueError):
        calibrate_threshold(np.array([]), 1e-3)
    with pytest.raises(ValueError):
        calibrate_threshold(np.arange(10.0), 0.0)


def test_detection_rates_hand_computed():
    activity = np.array([1, 1, 0, 0, 0])
    scores = np.array([5.0, 0.1, 3.0, 0.2, 0.2])
    decisions, pmd, pfa = detect_and_pmd(activity, scores, threshold=1.0)
    np.testing.assert_array_equal(decisions, [1, 0, 1, 0, 0])
    assert pmd == 0.5
    assert pfa == pytest.approx(1.0 / 3.0)


def test_detection_threshold_is_inclusive():
    # a score exactly at the threshold counts as a detection
    decisions, _, _ = detect_and_pmd(np.array([1]), np.array([2.0]), 2.0)
    assert decisions[0] == 1


def test_detection_rates_none_when_undefined():
    _, pmd, pfa = detect_and_pmd(np.zeros(4, dtype=int), np.zeros(4), 1.0)
    assert pmd is None and pfa == 0.0
    _, pmd, pfa = detect_and_pmd(np.ones(4, dtype=int), np.ones(4), 0.5)
    assert pmd == 0.0 and pfa is None


def test_joint_activity_statistic():
    block = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert joint_activity_statistic(block) == 5.0


def test_timed_uses_injected_timer():
    ticks = iter([10.0, 17.5])
    result, elapsed = timed(lambda a, b: a + b, 2, 3, timer=lambda: next(ticks))
    assert result == 5
    assert elapsed == 7.5


def test_timed_fills_runtime_attribute():
    class Holder:
        runtime_s = 0.0

    ticks = iter([0.0, 0.25])
    holder, elapsed = timed(lambda: Holder(), timer=lambda: next(ticks))
    assert holder.runtime_s == 0.25
    assert elapsed == 0.25
