"""Network geometry, channel statistics, and Monte Carlo realizations.

Devices are dropped uniformly in an annulus around a single receiver,
assigned to clusters in contiguous index blocks, and power-controlled by
path-loss inversion so every device hits the receiver at the configured
SNR. Channels are either uncorrelated Rayleigh or spatially correlated
via a Gaussian local scattering model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .pilots import PilotBank, split_evenly
from .seeding import as_rng

# Angular spread of the scatterer cloud around the nominal azimuth (rad).
SCATTER_HALF_WIDTH = 2.0 * np.pi / 9.0


def path_loss_db(distance_m) -> np.ndarray | float:
    """Large-scale fading in dB at a distance in meters: -130 - 37.6 log10(d)."""
    d = np.asarray(distance_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = -130.0 - 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def db_to_linear(value_db) -> np.ndarray | float:
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def uncorrelated_covariance(beta: float, antennas: int) -> np.ndarray:
    """Spatially white covariance beta * I."""
    if beta < 0:
        raise ValueError(f"path loss must be nonnegative, got {beta}")
    if antennas < 1:
        raise ValueError(f"antennas must be >= 1, got {antennas}")
    return beta * np.eye(antennas, dtype=np.complex128)


def local_scattering_covariance(
    beta: float,
    nominal_angle: float,
    sigma_phi: float,
    antennas: int,
    multipaths: int = 6,
    seed: int | np.random.Generator = 0,
    floor_eigenvalues: bool = True,
) -> np.ndarray:
    """Gaussian local scattering covariance for a uniform linear array.

    Each of `multipaths` scattering paths draws an azimuth uniformly within
    +-40 degrees of the nominal angle; per-path entries follow
    exp(j pi d sin(phi)) * exp(-0.5 sigma_phi^2 (pi d cos(phi))^2) for
    antenna offset d, averaged over paths and scaled by beta.

    The matrix is Hermitian Toeplitz and positive semidefinite up to
    roundoff; tiny negative eigenvalues are floored at zero unless
    floor_eigenvalues is False.
    """
    if beta < 0:
        raise ValueError(f"path loss must be nonnegative, got {beta}")
    if antennas < 1:
        raise ValueError(f"antennas must be >= 1, got {antennas}")
    if multipaths < 1:
        raise ValueError(f"multipaths must be >= 1, got {multipaths}")
    if sigma_phi < 0:
        raise ValueError(f"angular deviation must be nonnegative, got {sigma_phi}")
    rng = as_rng(seed)
    phis = rng.uniform(
        nominal_angle - SCATTER_HALF_WIDTH,
        nominal_angle + SCATTER_HALF_WIDTH,
        size=multipaths,
    )
    offsets = np.arange(antennas)[:, None]
    phase = np.exp(1j * np.pi * offsets * np.sin(phis)[None, :])
    spread = np.exp(-0.5 * sigma_phi**2 * (np.pi * offsets * np.cos(phis)[None, :]) ** 2)
    first_col = (beta / multipaths) * (phase * spread).sum(axis=1)
    cov = toeplitz(first_col, first_col.conj())
    cov = 0.5 * (cov + cov.conj().T)
    if floor_eigenvalues:
        eigvals, eigvecs = np.linalg.eigh(cov)
        if eigvals[0] < 0:
            eigvals = np.clip(eigvals, 0.0, None)
            cov = (eigvecs * eigvals) @ eigvecs.conj().T
            cov = 0.5 * (cov + cov.conj().T)
    return cov


def sample_activity(
    num_devices: int, activity_prob: float, seed: int | np.random.Generator = 0
) -> np.ndarray:
    """Bernoulli activity indicators, one per device."""
    if num_devices < 1:
        raise ValueError(f"num_devices must be >= 1, got {num_devices}")
    if not 0.0 <= activity_prob <= 1.0:
        raise ValueError(f"activity probability must lie in [0, 1], got {activity_prob}")
    rng = as_rng(seed)
    return (rng.random(num_devices) < activity_prob).astype(np.uint8)


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Circular complex Gaussian entries with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class NetworkScenario:
    """Static network state shared by all Monte Carlo trials."""

    num_devices: int
    antennas: int
    cluster_sizes: tuple[int, ...]
    cluster_of: np.ndarray
    distances: np.ndarray
    path_loss: np.ndarray          # linear large-scale gains
    powers: np.ndarray             # transmit powers from path-loss inversion
    activity_prob: float
    noise_power: float
    snr_db: float
    correlated: bool
    covariances: np.ndarray | None     # (N, M, M) or None when uncorrelated
    cov_factors: np.ndarray | None     # factors F with F F^H = covariance
    nominal_angles: np.ndarray
    sigma_phi: float
    multipaths: int
    cell_radius: float
    min_distance: float
    coherence_interval: int            # metadata only, not used numerically
    seed: int

    @property
    def num_clusters(self) -> int:
        return len(self.cluster_sizes)

    def cluster_slice(self, cluster: int) -> slice:
        edges = np.concatenate([[0], np.cumsum(self.cluster_sizes)])
        return slice(int(edges[cluster]), int(edges[cluster + 1]))


def build_scenario(
    num_devices: int,
    num_clusters: int,
    antennas: int,
    activity_prob: float = 0.01,
    noise_power: float = 2e-13,
    snr_db: float = 10.0,
    correlated: bool = False,
    sigma_phi_deg: float = 10.0,
    multipaths: int = 6,
    cell_radius: float = 250.0,
    min_distance: float = 25.0,
    coherence_interval: int = 300,
    cluster_sizes: tuple[int, ...] | None = None,
    seed: int = 0,
) -> NetworkScenario:
    """Drop devices, compute power control, and fix channel statistics.

    Placement is uniform over the annulus [min_distance, cell_radius];
    cluster membership is the contiguous index split (devices are
    exchangeable, so this matches a uniform random partition in law).
    """
    if num_devices < 1:
        raise ValueError(f"num_devices must be >= 1, got {num_devices}")
    if antennas < 1:
        raise ValueError(f"antennas must be >= 1, got {antennas}")
    if not 0.0 <= activity_prob <= 1.0:
        raise ValueError(f"activity probability must lie in [0, 1], got {activity_prob}")
    if noise_power < 0:
        raise ValueError(f"noise power must be nonnegative, got {noise_power}")
    if not 0 < min_distance < cell_radius:
        raise ValueError(
            f"need 0 < min_distance < cell_radius, got {min_distance}, {cell_radius}"
        )
    if cluster_sizes is None:
        cluster_sizes = split_evenly(num_devices, num_clusters)
    else:
        cluster_sizes = tuple(int(n) for n in cluster_sizes)
        if sum(cluster_sizes) != num_devices:
            raise ValueError(
                f"cluster sizes sum to {sum(cluster_sizes)}, expected {num_devices}"
            )

    rng = as_rng(seed)
    # Uniform over the annulus area.
    radii = np.sqrt(rng.uniform(min_distance**2, cell_radius**2, size=num_devices))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=num_devices)
    loss_db = path_loss_db(radii)
    beta = db_to_linear(loss_db)
    powers = db_to_linear(snr_db) * noise_power / beta

    sigma_phi = np.deg2rad(sigma_phi_deg)
    covariances = None
    factors = None
    if correlated:
        covariances = np.empty((num_devices, antennas, antennas), dtype=np.complex128)
        factors = np.empty_like(covariances)
        for n in range(num_devices):
            cov = local_scattering_covariance(
                float(beta[n]), float(angles[n]), float(sigma_phi),
                antennas, multipaths, seed=rng,
            )
            eigvals, eigvecs = np.linalg.eigh(cov)
            eigvals = np.clip(eigvals, 0.0, None)
            covariances[n] = cov
            factors[n] = eigvecs * np.sqrt(eigvals)

    return NetworkScenario(
        num_devices=num_devices,
        antennas=antennas,
        cluster_sizes=cluster_sizes,
        cluster_of=np.repeat(np.arange(len(cluster_sizes)), cluster_sizes),
        distances=radii,
        path_loss=beta,
        powers=powers,
        activity_prob=float(activity_prob),
        noise_power=float(noise_power),
        snr_db=float(snr_db),
        correlated=bool(correlated),
        covariances=covariances,
        cov_factors=factors,
        nominal_angles=angles,
        sigma_phi=float(sigma_phi),
        multipaths=int(multipaths),
        cell_radius=float(cell_radius),
        min_distance=float(min_distance),
        coherence_interval=int(coherence_interval),
        seed=int(seed),
    )


@dataclass(frozen=True)
class ChannelRealization:
    """One Monte Carlo draw: activity, effective signals, noise, observation."""

    activity: np.ndarray   # (N,) 0/1
    signals: np.ndarray    # (N, M) rows sqrt(p) * h^T, zero when inactive
    noise: np.ndarray      # (L, M)
    received: np.ndarray   # (L, M) = pilots @ signals + noise

    @property
    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.activity)


def sample_realization(
    scenario: NetworkScenario,
    pilots: PilotBank | np.ndarray,
    seed: int | np.random.Generator = 0,
) -> ChannelRealization:
    """Draw activity, channels for active devices, and noise; form Y = S X + W."""
    matrix = pilots.pilots if isinstance(pilots, PilotBank) else np.asarray(pilots)
    if matrix.ndim != 2 or matrix.shape[1] != scenario.num_devices:
        raise ValueError(
            f"pilot matrix has shape {matrix.shape}, expected "
            f"(L, {scenario.num_devices})"
        )
    rng = as_rng(seed)
    activity = sample_activity(scenario.num_devices, scenario.activity_prob, rng)
    signals = np.zeros((scenario.num_devices, scenario.antennas), dtype=np.complex128)
    for n in np.flatnonzero(activity):
        draw = complex_normal(rng, scenario.antennas)
        if scenario.correlated:
            h = scenario.cov_factors[n] @ draw
        else:
            h = np.sqrt(scenario.path_loss[n]) * draw
        signals[n] = np.sqrt(scenario.powers[n]) * h
    noise = np.sqrt(scenario.noise_power) * complex_normal(
        rng, (matrix.shape[0], scenario.antennas)
    )
    received = matrix @ signals + noise
    return ChannelRealization(
        activity=activity, signals=signals, noise=noise, received=received
    )
