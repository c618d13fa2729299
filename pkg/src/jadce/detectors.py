"""Row-sparse recovery detectors.

Three families, each usable per cluster on corrected observations or on
the full network as a centralized baseline:

* cb_somp: simultaneous orthogonal matching pursuit on the raw
  observation, correlating against the cluster's own pilots.
* aem_admm: group-lasso solve of the whitened corrected model
  0.5 * ||C (S X - V)||_F^2 + lam * sum_n ||row_n(X)||_2 with V the
  back-projected observation plus the calibrated mismatch mean.
* aem_sbl: sparse Bayesian learning by expectation maximization on the
  same corrected model, with per-device precisions.

Results carry the estimate, per-device row scores (exact row norms of
the estimate), and iteration/convergence bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .calibration import AemCalibration, identity_calibration


@dataclass
class DetectionResult:
    """Estimate plus detection scores for one detector invocation."""

    estimate: np.ndarray
    row_scores: np.ndarray
    iterations: int
    converged: bool
    runtime_s: float = 0.0
    gamma: np.ndarray | None = None
    trace: list[dict] | None = None


def _finish(estimate, iterations, converged, gamma=None, trace=None) -> DetectionResult:
    return DetectionResult(
        estimate=estimate,
        row_scores=np.linalg.norm(estimate, axis=1),
        iterations=iterations,
        converged=converged,
        gamma=gamma,
        trace=trace,
    )


def group_soft_threshold(matrix: np.ndarray, threshold: float) -> np.ndarray:
    """Shrink each row's norm by `threshold`; rows at or below it become exact zeros."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    norms = np.linalg.norm(matrix, axis=1)
    scale = np.zeros_like(norms)
    keep = norms > threshold
    scale[keep] = (norms[keep] - threshold) / norms[keep]
    return matrix * scale[:, None]


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    denom = np.linalg.norm(new)
    if denom == 0.0:
        return 0.0 if np.linalg.norm(old) == 0.0 else np.inf
    return float(np.linalg.norm(new - old) / denom)


def _check_finite(array: np.ndarray, name: str, iteration: int) -> None:
    if not np.all(np.isfinite(array)):
        raise RuntimeError(
            f"{name} produced non-finite iterates at iteration {iteration}; "
            "the run was aborted"
        )


def dump_trace_csv(result: DetectionResult, path) -> None:
    """Write a per-iteration trace (if one was recorded) as CSV."""
    if result.trace is None:
        raise ValueError("detector was run without keep_trace=True")
    keys = list(result.trace[0].keys()) if result.trace else ["iteration"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for row in result.trace:
            fh.write(",".join(repr(row[k]) for k in keys) + "\n")


# ---------------------------------------------------------------------------
# Simultaneous orthogonal matching pursuit
# ---------------------------------------------------------------------------

RESIDUAL_FLOOR = 1e-10


def cb_somp(
    received: np.ndarray,
    pilots: np.ndarray,
    tolerance: float = 1e-4,
    max_selections: int | None = None,
) -> DetectionResult:
    """Greedy support pursuit with least-squares refits.

    Per round: correlate pilots against the residual, pick the device
    whose correlation row has the largest l1 norm (normalized by pilot
    norm), refit all selected rows by least squares, update the residual.
    Stops on small relative change of the estimate, a residual below
    RESIDUAL_FLOOR times the observation norm, a repeated selection, or
    after max_selections rounds.
    """
    Y = np.asarray(received, dtype=np.complex128)
    S = np.asarray(pilots, dtype=np.complex128)
    if S.ndim != 2 or Y.ndim != 2 or S.shape[0] != Y.shape[0]:
        raise ValueError(f"incompatible shapes: pilots {S.shape}, received {Y.shape}")
    length, num_devices = S.shape
    if max_selections is None:
        max_selections = min(length, num_devices)
    col_norms = np.linalg.norm(S, axis=0)
    if np.any(col_norms == 0):
        raise ValueError("pilot matrix contains a zero column")

    estimate = np.zeros((num_devices, Y.shape[1]), dtype=np.complex128)
    support: list[int] = []
    residual = Y.copy()
    y_norm = np.linalg.norm(Y)
    converged = False
    rounds = 0
    while rounds < max_selections:
        if np.linalg.norm(residual) <= RESIDUAL_FLOOR * y_norm:
            converged = True
            break
        scores = np.abs(S.conj().T @ residual).sum(axis=1) / col_norms
        pick = int(np.argmax(scores))
        if pick in support:
            converged = True  # stagnation: the best atom is already in use
            break
        support.append(pick)
        rounds += 1
        previous = estimate
        estimate = np.zeros_like(estimate)
        sub = S[:, support]
        coef, *_ = np.linalg.lstsq(sub, Y, rcond=None)
        estimate[support] = coef
        residual = Y - sub @ coef
        if _relative_change(estimate, previous) < tolerance:
            converged = True
            break
    return _finish(estimate, rounds, converged)


# ---------------------------------------------------------------------------
# Group-lasso ADMM on the corrected model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmmOperator:
    """Factorizations reused across trials for fixed (pilots, calibration, rho)."""

    chol: tuple
    correlator: np.ndarray  # S^H C^H C, applied to the corrected observation
    rho: float


def admm_operator(pilots: np.ndarray, calibration: AemCalibration, rho: float) -> AdmmOperator:
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    S = np.asarray(pilots, dtype=np.complex128)
    CS = calibration.whitener @ S
    gram = CS.conj().T @ CS
    gram = 0.5 * (gram + gram.conj().T)
    system = gram + rho * np.eye(S.shape[1])
    return AdmmOperator(
        chol=cho_factor(system, lower=True),
        correlator=CS.conj().T @ calibration.whitener,
        rho=float(rho),
    )


def aem_admm(
    projected: np.ndarray,
    pilots: np.ndarray,
    calibration: AemCalibration,
    lam: float,
    rho: float = 1.0,
    tolerance: float = 1e-4,
    max_iter: int = 500,
    operator: AdmmOperator | None = None,
    keep_trace: bool = False,
) -> DetectionResult:
    """Scaled-form ADMM for the whitened group lasso.

    Splitting X = Z with dual Theta, each sweep does:
      Z  <- (S^H C^H C S + rho I)^{-1} (rho X - Theta + S^H C^H C V)
      X  <- row-wise soft threshold of Z + Theta / rho at level lam / rho
      Theta <- Theta + rho (Z - X)
    with V the corrected observation. Stops when the relative change of Z
    falls below `tolerance`. The returned estimate is the soft-thresholded
    iterate, so inactive rows are exact zeros.
    """
    if lam < 0:
        raise ValueError(f"lam must be nonnegative, got {lam}")
    S = np.asarray(pilots, dtype=np.complex128)
    V = np.asarray(projected, dtype=np.complex128) + calibration.mean
    if operator is None:
        operator = admm_operator(S, calibration, rho)
    rho = operator.rho
    data_term = operator.correlator @ V

    num_devices = S.shape[1]
    X = np.zeros((num_devices, V.shape[1]), dtype=np.complex128)
    Z = np.zeros_like(X)
    Theta = np.zeros_like(X)
    threshold = lam / rho
    converged = False
    trace: list[dict] | None = [] if keep_trace else None
    iterations = 0
    for t in range(max_iter):
        iterations = t + 1
        # finiteness is checked once per sweep below, not inside LAPACK
        Z_new = cho_solve(operator.chol, rho * X - Theta + data_term,
                          check_finite=False)
        X = group_soft_threshold(Z_new + Theta / rho, threshold)
        Theta = Theta + rho * (Z_new - X)
        _check_finite(Z_new, "aem_admm", iterations)
        change = _relative_change(Z_new, Z)
        Z = Z_new
        if keep_trace:
            trace.append(
                {
                    "iteration": iterations,
                    "relative_change": change,
                    "primal_residual": float(np.linalg.norm(X - Z)),
                    "dual_norm": float(np.linalg.norm(Theta)),
                }
            )
        if change < tolerance:
            converged = True
            break
    return _finish(X, iterations, converged, trace=trace)


# ---------------------------------------------------------------------------
# Sparse Bayesian learning on the corrected model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SblOperator:
    """Whitened gram and correlator reused across trials."""

    gram: np.ndarray        # S^H R^{-1} S with R the regularized covariance
    correlator: np.ndarray  # S^H R^{-1}


def sbl_operator(pilots: np.ndarray, calibration: AemCalibration) -> SblOperator:
    S = np.asarray(pilots, dtype=np.complex128)
    CS = calibration.whitener @ S
    gram = CS.conj().T @ CS
    gram = 0.5 * (gram + gram.conj().T)
    return SblOperator(gram=gram, correlator=CS.conj().T @ calibration.whitener)


def _log_evidence(
    pilots: np.ndarray,
    calibration: AemCalibration,
    gamma: np.ndarray,
    corrected: np.ndarray,
) -> float:
    # Marginal Gaussian likelihood of the corrected observation, summed
    # over antennas: covariance S diag(1/gamma) S^H + regularized.
    cov = (pilots / gamma[None, :]) @ pilots.conj().T + calibration.regularized
    cov = 0.5 * (cov + cov.conj().T)
    chol = cho_factor(cov, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]).real)))
    solved = cho_solve(chol, corrected)
    quad = float(np.sum(corrected.conj() * solved).real)
    antennas = corrected.shape[1]
    length = corrected.shape[0]
    return -antennas * length * float(np.log(np.pi)) - antennas * logdet - quad


def aem_sbl(
    projected: np.ndarray,
    pilots: np.ndarray,
    calibration: AemCalibration,
    tolerance: float = 1e-4,
    max_iter: int = 200,
    gamma_max: float = 1e12,
    gamma_init: np.ndarray | None = None,
    operator: SblOperator | None = None,
    keep_trace: bool = False,
) -> DetectionResult:
    """Expectation-maximization sparse Bayesian learning.

    Device rows are zero-mean Gaussian with per-device precision gamma_n,
    shared across antennas. E-step: posterior covariance
    Sigma = (S^H R^{-1} S + diag(gamma))^{-1} and posterior mean
    X = Sigma S^H R^{-1} V for all antennas in one solve. M-step:
    gamma_n = 1 / (||row_n(X)||^2 / M + Sigma_nn), clamped to
    (0, gamma_max]. Stops on small relative change of the posterior mean.
    """
    S = np.asarray(pilots, dtype=np.complex128)
    V = np.asarray(projected, dtype=np.complex128) + calibration.mean
    if operator is None:
        operator = sbl_operator(S, calibration)
    num_devices = S.shape[1]
    antennas = V.shape[1]
    if gamma_init is None:
        gamma = np.ones(num_devices)
    else:
        gamma = np.asarray(gamma_init, dtype=float).copy()
        if gamma.shape != (num_devices,) or np.any(gamma <= 0):
            raise ValueError("gamma_init must be positive with one entry per device")
    if gamma_max <= 0:
        raise ValueError(f"gamma_max must be positive, got {gamma_max}")

    data_term = operator.correlator @ V
    X = np.zeros((num_devices, antennas), dtype=np.complex128)
    eye = np.eye(num_devices)
    converged = False
    trace: list[dict] | None = [] if keep_trace else None
    iterations = 0
    for t in range(max_iter):
        iterations = t + 1
        if keep_trace:
            evidence = _log_evidence(S, calibration, gamma, V)
        system = operator.gram + np.diag(gamma)
        chol = cho_factor(system, lower=True, check_finite=False)
        posterior_cov = cho_solve(chol, eye, check_finite=False)
        X_new = cho_solve(chol, data_term, check_finite=False)
        _check_finite(X_new, "aem_sbl", iterations)
        variances = np.clip(np.diag(posterior_cov).real, 0.0, None)
        row_energy = np.einsum("nm,nm->n", X_new, X_new.conj()).real / antennas
        with np.errstate(divide="ignore"):
            gamma = 1.0 / (row_energy + variances)
        gamma = np.minimum(gamma, gamma_max)
        change = _relative_change(X_new, X)
        X = X_new
        if keep_trace:
            trace.append(
                {
                    "iteration": iterations,
                    "relative_change": change,
                    "log_evidence": evidence,
                    "min_posterior_eig": float(
                        np.linalg.eigvalsh(posterior_cov).min()
                    ),
                }
            )
        if change < tolerance:
            converged = True
            break
    return _finish(X, iterations, converged, gamma=gamma, trace=trace)


# ---------------------------------------------------------------------------
# Centralized baselines
# ---------------------------------------------------------------------------

BASELINE_KINDS = ("somp", "admm", "sbl")


def centralized_baseline(
    kind: str,
    received: np.ndarray,
    pilots: np.ndarray,
    noise_power: float,
    lam: float | None = None,
    rho: float = 1.0,
    tolerance: float = 1e-4,
    max_iter: int = 500,
    max_selections: int | None = None,
    operator=None,
) -> DetectionResult:
    """Single-cluster reductions of the corrected detectors.

    somp runs the pursuit on the full pilot matrix; admm solves the
    unwhitened group lasso (identity correction); sbl assumes white noise
    at the configured power.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}, expected one of {BASELINE_KINDS}")
    Y = np.asarray(received, dtype=np.complex128)
    S = np.asarray(pilots, dtype=np.complex128)
    if kind == "somp":
        return cb_somp(Y, S, tolerance=tolerance, max_selections=max_selections)
    length = S.shape[0]
    if kind == "admm":
        if lam is None:
            raise ValueError("the admm baseline requires lam")
        calib = identity_calibration(length, 1.0)
        return aem_admm(
            Y, S, calib, lam=lam, rho=rho, tolerance=tolerance,
            max_iter=max_iter, operator=operator,
        )
    if noise_power <= 0:
        raise ValueError(f"the sbl baseline requires positive noise power, got {noise_power}")
    calib = identity_calibration(length, noise_power)
    return aem_sbl(
        Y, S, calib, tolerance=tolerance, max_iter=max_iter, operator=operator,
    )
