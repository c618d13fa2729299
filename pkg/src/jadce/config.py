"""Experiment configuration: a flat key = value text format.

Defaults follow the standard simulation setup (single cell of radius
250 m, 1000 devices in 4 clusters, 64-symbol pilots, 32 antennas, 1%
activity, 10 dB SNR, -127 dBm noise power). Exactly one sweep axis is
active per experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

# Axes the harness knows how to sweep.
SWEEPABLE = (
    "pilot_length",
    "snr_db",
    "antennas",
    "activity_prob",
    "num_devices",
    "num_clusters",
    "sigma_phi_deg",
)

KNOWN_ALGORITHMS = ("cb_somp", "aem_admm", "aem_sbl", "somp", "admm", "sbl")

_INT_AXES = {"pilot_length", "antennas", "num_devices", "num_clusters"}


@dataclass(frozen=True)
class ExperimentConfig:
    # Network
    cell_radius_m: float = 250.0
    min_distance_m: float = 25.0
    num_devices: int = 1000
    num_clusters: int = 4
    antennas: int = 32
    activity_prob: float = 0.01
    snr_db: float = 10.0
    noise_power_w: float = 2e-13
    coherence_interval: int = 300
    correlated: bool = False
    sigma_phi_deg: float = 10.0
    multipaths: int = 6
    # Pilots
    pilot_length: int = 64
    weight_cardinality: int = 0          # 0 means the per-cluster default
    pool_factor: int = 20
    # Detectors
    algorithms: tuple[str, ...] = KNOWN_ALGORITHMS
    tolerance: float = 1e-4
    max_iter: int = 500
    admm_rho: float = 1.0
    admm_lambda: float = 0.0             # 0 means grid-searched per sweep point
    lambda_trials: int = 16
    gamma_max: float = 1e12
    # Monte Carlo
    trials: int = 1000
    calibration_trials: int = 2000
    threshold_trials: int = 0            # 0 means same as trials
    target_pfa: float = 1e-3
    master_seed: int = 0
    threads: int = 1
    # Sweep
    sweep: str = "pilot_length"
    sweep_values: tuple[float, ...] = (16, 32, 64, 128)
    # Diagnostics
    rip_subset: int = 0                  # 0 means round(activity_prob * N_g), at least 1
    rip_samples: int = 1000
    coherence_seeds: int = 10
    output_dir: str = "results"

    def resolved_threshold_trials(self) -> int:
        return self.threshold_trials if self.threshold_trials > 0 else self.trials

    def validate(self) -> None:
        if self.num_devices < 1:
            raise ValueError(f"num_devices must be >= 1, got {self.num_devices}")
        if self.num_clusters < 1:
            raise ValueError(f"num_clusters must be >= 1, got {self.num_clusters}")
        if self.antennas < 1:
            raise ValueError(f"antennas must be >= 1, got {self.antennas}")
        if not 0.0 <= self.activity_prob <= 1.0:
            raise ValueError(
                f"activity_prob must lie in [0, 1], got {self.activity_prob}"
            )
        if self.noise_power_w <= 0:
            raise ValueError(f"noise_power_w must be positive, got {self.noise_power_w}")
        if self.pilot_length < 1 or (self.pilot_length & (self.pilot_length - 1)) != 0:
            raise ValueError(
                f"pilot_length must be a power of two, got {self.pilot_length}"
            )
        if not 0 < self.min_distance_m < self.cell_radius_m:
            raise ValueError(
                "need 0 < min_distance_m < cell_radius_m, got "
                f"{self.min_distance_m}, {self.cell_radius_m}"
            )
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.calibration_trials < 2:
            raise ValueError(
                f"calibration_trials must be >= 2, got {self.calibration_trials}"
            )
        if not 0.0 < self.target_pfa < 1.0:
            raise ValueError(f"target_pfa must lie in (0, 1), got {self.target_pfa}")
        if self.tolerance <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.admm_rho <= 0:
            raise ValueError(f"admm_rho must be positive, got {self.admm_rho}")
        if self.gamma_max <= 0:
            raise ValueError(f"gamma_max must be positive, got {self.gamma_max}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.master_seed < 0:
            raise ValueError(f"master_seed must be nonnegative, got {self.master_seed}")
        if self.sweep not in SWEEPABLE:
            raise ValueError(
                f"sweep axis {self.sweep!r} is not supported; choose one of {SWEEPABLE}"
            )
        if not self.sweep_values:
            raise ValueError("sweep_values must contain at least one value")
        if not self.algorithms:
            raise ValueError("algorithms must contain at least one entry")
        for alg in self.algorithms:
            if alg not in KNOWN_ALGORITHMS:
                raise ValueError(
                    f"unknown algorithm {alg!r}; choose from {KNOWN_ALGORITHMS}"
                )
        if self.sweep in _INT_AXES:
            for v in self.sweep_values:
                if float(v) != int(v):
                    raise ValueError(
                        f"sweep axis {self.sweep} takes integer values, got {v}"
                    )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_lines(config: ExperimentConfig) -> list[str]:
    """Render a config as canonical key = value lines."""
    return [f"{f.name} = {_format_value(getattr(config, f.name))}" for f in fields(config)]


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in config_to_lines(config):
            fh.write(line + "\n")


def _parse_scalar(text: str, example) -> object:
    text = text.strip()
    if isinstance(example, bool):
        lowered = text.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(example, int):
        return int(text)
    if isinstance(example, float):
        return float(text)
    return text


def parse_config_text(text: str) -> ExperimentConfig:
    """Parse flat key = value lines; '#' starts a comment."""
    defaults = ExperimentConfig()
    valid = {f.name: getattr(defaults, f.name) for f in fields(ExperimentConfig)}
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in valid:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}")
        if key in overrides:
            raise ValueError(f"line {lineno}: duplicate configuration key {key!r}")
        example = valid[key]
        try:
            if key == "algorithms":
                parsed: object = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "sweep_values":
                parsed = tuple(float(v) for v in value.split(",") if v.strip())
            elif isinstance(example, tuple):
                parsed = tuple(float(v) for v in value.split(",") if v.strip())
            else:
                parsed = _parse_scalar(value, example)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: key {key!r}: {exc}") from None
        overrides[key] = parsed
    config = replace(defaults, **overrides)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())
