"""Per-cluster decorrelation and error-moment calibration.

Because cluster pilot blocks are orthogonal, projecting the received
signal onto a cluster's pilot subspace removes every other cluster
exactly. What remains is the cluster's own signal plus projected noise.
Calibration runs training trials with known ground truth, records the
mismatch between the projected observation and the ideal noise-free
model, and summarizes it by a mean, a pooled covariance, and a whitening
factor used by the downstream detectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .channel import NetworkScenario, sample_realization
from .pilots import PilotBank
from .seeding import derive_rng

# Relative cutoff for the pseudo-inverse in the back-projection.
PINV_RTOL = 1e-10


def decorrelate(cluster_pilots: np.ndarray, received: np.ndarray) -> np.ndarray:
    """Correlator outputs S_g^H Y for one cluster."""
    S = np.asarray(cluster_pilots)
    Y = np.asarray(received)
    if S.ndim != 2 or Y.ndim != 2 or S.shape[0] != Y.shape[0]:
        raise ValueError(
            f"incompatible shapes: pilots {S.shape}, received {Y.shape}"
        )
    return S.conj().T @ Y


def back_project(
    cluster_pilots: np.ndarray, decorrelated: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Lift correlator outputs back to the pilot subspace.

    Returns (y_hat, projector) where y_hat = (S S^H)^+ S X_tilde computed
    through an SVD with singular values below PINV_RTOL * sigma_max
    treated as zero, and projector is the orthogonal projector onto the
    pilot span. When X_tilde = S^H Y this equals projector @ Y.
    """
    S = np.asarray(cluster_pilots, dtype=np.complex128)
    Xt = np.asarray(decorrelated, dtype=np.complex128)
    if S.ndim != 2 or Xt.ndim != 2 or S.shape[1] != Xt.shape[0]:
        raise ValueError(
            f"incompatible shapes: pilots {S.shape}, decorrelated {Xt.shape}"
        )
    u, sv, vh = np.linalg.svd(S, full_matrices=False)
    if sv[0] == 0:
        raise ValueError("cluster pilot matrix is zero")
    rank = int(np.sum(sv > PINV_RTOL * sv[0]))
    ur = u[:, :rank]
    y_hat = ur @ ((vh[:rank] @ Xt) / sv[:rank, None])
    projector = ur @ ur.conj().T
    return y_hat, projector


def subspace_basis(cluster_pilots: np.ndarray) -> np.ndarray:
    """Orthonormal basis U of the cluster pilot span (projector = U U^H)."""
    S = np.asarray(cluster_pilots, dtype=np.complex128)
    u, sv, _ = np.linalg.svd(S, full_matrices=False)
    if sv[0] == 0:
        raise ValueError("cluster pilot matrix is zero")
    rank = int(np.sum(sv > PINV_RTOL * sv[0]))
    return u[:, :rank]


@dataclass(frozen=True)
class ClusterProjection:
    """Decorrelated observation, its back-projection, and the projector."""

    decorrelated: np.ndarray
    projected: np.ndarray
    projector: np.ndarray


def cluster_projection(cluster_pilots: np.ndarray, received: np.ndarray) -> ClusterProjection:
    x_tilde = decorrelate(cluster_pilots, received)
    y_hat, projector = back_project(cluster_pilots, x_tilde)
    return ClusterProjection(decorrelated=x_tilde, projected=y_hat, projector=projector)


@dataclass(frozen=True)
class AemCalibration:
    """Error moments of one cluster's projected model.

    mean:       (L, M) per-antenna mismatch means.
    covariance: (L, L) antenna-averaged mismatch covariance.
    regularized: covariance + delta * I, always positive definite.
    whitener:   C with C^H C = regularized^{-1}.
    """

    mean: np.ndarray
    covariance: np.ndarray
    regularized: np.ndarray
    whitener: np.ndarray
    delta: float
    trials: int
    seed: int | None = None


def regularization_delta(covariance: np.ndarray) -> float:
    """Diagonal loading scaled to the covariance trace, floored at 1e-12."""
    trace = float(np.trace(covariance).real)
    return max(1e-8 * trace / covariance.shape[0], 1e-12)


def calibration_from_moments(
    mean: np.ndarray,
    covariance: np.ndarray,
    trials: int,
    seed: int | None = None,
) -> AemCalibration:
    """Regularize a mismatch covariance and factor its inverse.

    The whitener comes from the Cholesky factor of the regularized
    covariance: with regularized = R R^H, C = R^{-1} satisfies
    C^H C = regularized^{-1}.
    """
    mean = np.asarray(mean, dtype=np.complex128)
    covariance = np.asarray(covariance, dtype=np.complex128)
    if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
        raise ValueError(f"covariance must be square, got shape {covariance.shape}")
    if mean.shape[0] != covariance.shape[0]:
        raise ValueError(
            f"mean has {mean.shape[0]} rows but covariance is "
            f"{covariance.shape[0]} x {covariance.shape[1]}"
        )
    covariance = 0.5 * (covariance + covariance.conj().T)
    delta = regularization_delta(covariance)
    length = covariance.shape[0]
    regularized = covariance + delta * np.eye(length)
    try:
        chol = np.linalg.cholesky(regularized)
    except np.linalg.LinAlgError as exc:
        eigvals = np.linalg.eigvalsh(regularized)
        raise RuntimeError(
            "mismatch covariance is not positive definite after loading: "
            f"min eigenvalue {eigvals[0]:.3e}, trace {np.trace(regularized).real:.3e}, "
            f"delta {delta:.3e}"
        ) from exc
    whitener = solve_triangular(chol, np.eye(length), lower=True)
    return AemCalibration(
        mean=mean,
        covariance=covariance,
        regularized=regularized,
        whitener=whitener,
        delta=float(delta),
        trials=int(trials),
        seed=seed,
    )


def identity_calibration(length: int, variance: float = 1.0) -> AemCalibration:
    """Trivial correction: zero mean, white covariance variance * I.

    This is what reduces the corrected detectors to their centralized
    single-cluster forms.
    """
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    eye = np.eye(length, dtype=np.complex128)
    return AemCalibration(
        mean=np.zeros((length, 1), dtype=np.complex128),
        covariance=variance * eye,
        regularized=variance * eye,
        whitener=eye / np.sqrt(variance),
        delta=0.0,
        trials=0,
        seed=None,
    )


def _accumulate_moments(sum_err, sum_outer, trials, antennas, seed):
    mean = sum_err / trials
    pooled = (sum_outer - trials * (mean @ mean.conj().T)) / (antennas * (trials - 1))
    return mean, pooled


def calibrate_cluster(
    scenario: NetworkScenario,
    pilots: PilotBank,
    cluster: int,
    trials: int,
    seed: int = 0,
) -> AemCalibration:
    """Estimate one cluster's mismatch moments from training realizations.

    Training trial i regenerates a full-network realization from a seed
    derived from (seed, i) and compares the known cluster contribution
    S_g X_g against the back-projected observation. The covariance is the
    unbiased sample covariance pooled over antennas.
    """
    if trials < 2:
        raise ValueError(f"need at least 2 training trials, got {trials}")
    if not 0 <= cluster < pilots.num_clusters:
        raise ValueError(f"cluster index {cluster} out of range")
    S_g = pilots.cluster_pilots(cluster)
    rows = pilots.cluster_slice(cluster)
    basis = subspace_basis(S_g)
    length = pilots.length
    antennas = scenario.antennas
    sum_err = np.zeros((length, antennas), dtype=np.complex128)
    sum_outer = np.zeros((length, length), dtype=np.complex128)
    for i in range(trials):
        real = sample_realization(scenario, pilots, derive_rng(seed, i))
        y_hat = basis @ (basis.conj().T @ real.received)
        err = S_g @ real.signals[rows] - y_hat
        sum_err += err
        sum_outer += err @ err.conj().T
    mean, pooled = _accumulate_moments(sum_err, sum_outer, trials, antennas, seed)
    return calibration_from_moments(mean, pooled, trials, seed=seed)


def calibrate_all(
    scenario: NetworkScenario,
    pilots: PilotBank,
    trials: int,
    seed: int = 0,
) -> list[AemCalibration]:
    """Calibrate every cluster from one shared stream of training trials.

    Produces exactly the same moments as calling calibrate_cluster per
    cluster with the same seed, but generates each training realization
    only once.
    """
    if trials < 2:
        raise ValueError(f"need at least 2 training trials, got {trials}")
    G = pilots.num_clusters
    length = pilots.length
    antennas = scenario.antennas
    bases = [subspace_basis(pilots.cluster_pilots(g)) for g in range(G)]
    blocks = [pilots.cluster_pilots(g) for g in range(G)]
    slices = [pilots.cluster_slice(g) for g in range(G)]
    sum_err = [np.zeros((length, antennas), dtype=np.complex128) for _ in range(G)]
    sum_outer = [np.zeros((length, length), dtype=np.complex128) for _ in range(G)]
    for i in range(trials):
        real = sample_realization(scenario, pilots, derive_rng(seed, i))
        for g in range(G):
            y_hat = bases[g] @ (bases[g].conj().T @ real.received)
            err = blocks[g] @ real.signals[slices[g]] - y_hat
            sum_err[g] += err
            sum_outer[g] += err @ err.conj().T
    out = []
    for g in range(G):
        mean, pooled = _accumulate_moments(
            sum_err[g], sum_outer[g], trials, antennas, seed
        )
        out.append(calibration_from_moments(mean, pooled, trials, seed=seed))
    return out


def save_calibration(calibration: AemCalibration, path) -> None:
    """Persist calibration moments as a compressed binary archive."""
    np.savez_compressed(
        path,
        mean=calibration.mean,
        covariance=calibration.covariance,
        regularized=calibration.regularized,
        whitener=calibration.whitener,
        delta=calibration.delta,
        trials=calibration.trials,
        seed=-1 if calibration.seed is None else calibration.seed,
    )


def load_calibration(path) -> AemCalibration:
    with np.load(path) as data:
        seed = int(data["seed"])
        return AemCalibration(
            mean=data["mean"],
            covariance=data["covariance"],
            regularized=data["regularized"],
            whitener=data["whitener"],
            delta=float(data["delta"]),
            trials=int(data["trials"]),
            seed=None if seed < 0 else seed,
        )
