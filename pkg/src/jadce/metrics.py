"""Estimation and detection quality measures.

Detection uses a score-threshold rule: a device is declared active when
its row score meets a threshold calibrated on inactive-device scores
from an independent batch, targeting a fixed false-alarm rate.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np


def nmse(
    true_signals: np.ndarray, estimate: np.ndarray, active: np.ndarray
) -> float | None:
    """Mean over active devices of ||x_n - xhat_n||^2 / ||x_n||^2.

    Returns None when there is no active device, signalling that the
    sample should be skipped rather than averaged as zero.
    """
    X = np.asarray(true_signals)
    Xh = np.asarray(estimate)
    if X.shape != Xh.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Xh.shape}")
    active = np.asarray(active, dtype=int).ravel()
    if active.size == 0:
        return None
    err = np.linalg.norm(X[active] - Xh[active], axis=1) ** 2
    ref = np.linalg.norm(X[active], axis=1) ** 2
    return float(np.mean(err / ref))


def calibrate_threshold(null_scores: np.ndarray, target_pfa: float) -> float:
    """Empirical (1 - target_pfa) quantile of inactive-device scores.

    Uses the 'higher' order statistic so the achieved false-alarm rate
    errs on the conservative side. Scores must come from a batch disjoint
    from the one being evaluated.
    """
    scores = np.asarray(null_scores, dtype=float).ravel()
    if scores.size == 0:
        raise ValueError("cannot calibrate a threshold from zero scores")
    if not 0.0 < target_pfa < 1.0:
        raise ValueError(f"target false-alarm rate must lie in (0, 1), got {target_pfa}")
    if scores.size < 1.0 / target_pfa:
        warnings.warn(
            f"only {scores.size} null scores for a target false-alarm rate of "
            f"{target_pfa}; the quantile estimate is unreliable",
            stacklevel=2,
        )
    return float(np.quantile(scores, 1.0 - target_pfa, method="higher"))


def detect_and_pmd(
    activity: np.ndarray, scores: np.ndarray, threshold: float
) -> tuple[np.ndarray, float | None, float | None]:
    """Threshold scores and measure missed-detection / false-alarm rates.

    Returns (decisions, pmd, pfa). pmd is None when no device is active;
    pfa is None when no device is inactive.
    """
    alpha = np.asarray(activity, dtype=int).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    if alpha.shape != s.shape:
        raise ValueError(f"shape mismatch: activity {alpha.shape}, scores {s.shape}")
    decisions = (s >= threshold).astype(np.uint8)
    num_active = int(alpha.sum())
    num_inactive = alpha.size - num_active
    misses = int(np.sum((alpha == 1) & (decisions == 0)))
    false_alarms = int(np.sum((alpha == 0) & (decisions == 1)))
    pmd = misses / num_active if num_active > 0 else None
    pfa = false_alarms / num_inactive if num_inactive > 0 else None
    return decisions, pmd, pfa


def joint_activity_statistic(decorrelated: np.ndarray) -> float:
    """Frobenius norm of a cluster's correlator output.

    Diagnostic for whether any device in the cluster is active at all;
    compare against a noise-calibrated threshold.
    """
    return float(np.linalg.norm(np.asarray(decorrelated)))


def timed(func, *args, timer=time.perf_counter, **kwargs):
    """Run func and measure wall time around the call only.

    Returns (result, seconds). If the result has a runtime_s attribute it
    is filled in as well.
    """
    start = timer()
    result = func(*args, **kwargs)
    elapsed = timer() - start
    if hasattr(result, "runtime_s"):
        result.runtime_s = elapsed
    return result, elapsed


@dataclass
class MetricSample:
    """One (algorithm, sweep value, trial) outcome row.

    The count fields beyond the delimited-output columns support pooled
    rate computations without re-running detectors.
    """

    algorithm: str
    sweep_name: str
    sweep_value: float
    trial: int
    nmse: float | None
    pmd: float | None
    pfa: float | None
    runtime_s: float
    iterations: int
    skipped: bool
    zeta: float | None = None
    active_count: int = 0
    inactive_count: int = 0
    misses: int = 0
    false_alarms: int = 0
