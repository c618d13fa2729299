"""Cluster-based joint activity detection and channel estimation."""

from .calibration import (
    AemCalibration,
    back_project,
    calibrate_all,
    calibrate_cluster,
    calibration_from_moments,
    cluster_projection,
    decorrelate,
    identity_calibration,
    load_calibration,
    save_calibration,
    subspace_basis,
)
from .channel import (
    ChannelRealization,
    NetworkScenario,
    build_scenario,
    local_scattering_covariance,
    path_loss_db,
    sample_activity,
    sample_realization,
    uncorrelated_covariance,
)
from .config import ExperimentConfig, load_config, parse_config_text, save_config
from .detectors import (
    DetectionResult,
    aem_admm,
    aem_sbl,
    cb_somp,
    centralized_baseline,
    group_soft_threshold,
)
from .harness import (
    ResultsTable,
    SummaryRow,
    coherence_sweep,
    emit_outputs,
    read_results_csv,
    rip_diagnostic,
    run_experiment,
    summarize,
)
from .metrics import (
    MetricSample,
    calibrate_threshold,
    detect_and_pmd,
    nmse,
    timed,
)
from .pilots import (
    BasisMatrix,
    PilotBank,
    build_pilot_bank,
    generate_cluster_pilots,
    hadamard_basis,
    load_pilot_bank,
    min_pairwise_distance,
    mutual_coherence,
    partition_basis,
    save_pilot_bank,
    split_evenly,
)
from .seeding import derive_rng, derive_seed

__version__ = "0.1.0"

__all__ = [
    "AemCalibration",
    "BasisMatrix",
    "ChannelRealization",
    "DetectionResult",
    "ExperimentConfig",
    "MetricSample",
    "NetworkScenario",
    "PilotBank",
    "ResultsTable",
    "SummaryRow",
    "aem_admm",
    "aem_sbl",
    "back_project",
    "build_pilot_bank",
    "build_scenario",
    "calibrate_all",
    "calibrate_cluster",
    "calibrate_threshold",
    "calibration_from_moments",
    "cb_somp",
    "centralized_baseline",
    "cluster_projection",
    "coherence_sweep",
    "decorrelate",
    "derive_rng",
    "derive_seed",
    "detect_and_pmd",
    "emit_outputs",
    "generate_cluster_pilots",
    "group_soft_threshold",
    "hadamard_basis",
    "identity_calibration",
    "load_calibration",
    "load_config",
    "load_pilot_bank",
    "local_scattering_covariance",
    "min_pairwise_distance",
    "mutual_coherence",
    "nmse",
    "parse_config_text",
    "partition_basis",
    "path_loss_db",
    "read_results_csv",
    "rip_diagnostic",
    "run_experiment",
    "sample_activity",
    "sample_realization",
    "save_calibration",
    "save_config",
    "save_pilot_bank",
    "split_evenly",
    "subspace_basis",
    "summarize",
    "timed",
    "uncorrelated_covariance",
]
