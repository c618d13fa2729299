"""Monte Carlo harness: sweeps, paired trials, and delimited outputs.

One experiment sweeps exactly one axis. At every sweep point the harness
builds pilots, drops a network, calibrates the per-cluster corrections,
fixes detection thresholds on a dedicated batch, and then scores all
configured algorithms on identical evaluation realizations. Every random
draw is keyed by (master seed, phase, sweep index, trial), so outputs do
not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .calibration import (
    AemCalibration,
    calibrate_all,
    identity_calibration,
    subspace_basis,
)
from .channel import ChannelRealization, NetworkScenario, build_scenario, sample_realization
from .config import ExperimentConfig, config_to_lines
from .detectors import (
    AdmmOperator,
    SblOperator,
    admm_operator,
    aem_admm,
    aem_sbl,
    cb_somp,
    sbl_operator,
)
from .metrics import MetricSample, calibrate_threshold, detect_and_pmd, nmse, timed
from .pilots import PilotBank, build_pilot_bank, mutual_coherence, split_evenly
from .seeding import derive_rng, derive_seed

# Seed-path phase tags. Evaluation is phase 0 so a trial seed is literally
# derived from (master seed, 0, trial). Trial seeds deliberately exclude the
# sweep index: trial t sees the same activity pattern and channel draws at
# every sweep point, which pairs the comparison across points.
_PHASE_EVAL = 0
_PHASE_THRESHOLD = 1
_PHASE_LAMBDA = 2
_PHASE_PILOTS = 3
_PHASE_CALIBRATION = 4
_PHASE_SCENARIO = 5
_PHASE_COHERENCE = 6

RESULT_COLUMNS = (
    "algorithm",
    "sweep_name",
    "sweep_value",
    "trial",
    "nmse",
    "pmd",
    "pfa",
    "runtime_s",
    "iterations",
    "skipped",
)

SUMMARY_COLUMNS = (
    "algorithm",
    "sweep_name",
    "sweep_value",
    "trials",
    "skipped",
    "nmse_mean",
    "nmse_se",
    "pmd_mean",
    "pmd_se",
    "pfa_mean",
    "pfa_se",
    "runtime_s_mean",
    "runtime_s_se",
    "iterations_mean",
    "zeta",
)

LAMBDA_GRID = (0.1, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class _ClusterOps:
    pilots: np.ndarray
    rows: slice
    basis: np.ndarray
    calibration: AemCalibration | None
    admm_op: AdmmOperator | None
    sbl_op: SblOperator | None
    # Mean squared whitened pilot norm; converts the shared unwhitened
    # penalty scale into this cluster's whitened objective units.
    lambda_gain: float = 1.0


@dataclass(frozen=True)
class _PointContext:
    """Everything fixed at one sweep point."""

    sweep_index: int
    sweep_value: float
    config: ExperimentConfig
    bank: PilotBank
    scenario: NetworkScenario
    clusters: list[_ClusterOps]
    central_admm_op: AdmmOperator | None
    central_sbl_op: SblOperator | None
    lambdas: dict[str, float]
    zetas: dict[str, float]


@dataclass
class SummaryRow:
    algorithm: str
    sweep_name: str
    sweep_value: float
    trials: int
    skipped: int
    nmse_mean: float | None
    nmse_se: float | None
    pmd_mean: float | None
    pmd_se: float | None
    pfa_mean: float | None
    pfa_se: float | None
    runtime_s_mean: float | None
    runtime_s_se: float | None
    iterations_mean: float | None
    zeta: float | None


@dataclass
class ResultsTable:
    config: ExperimentConfig
    rows: list[MetricSample]

    def summary(self) -> list[SummaryRow]:
        return summarize(self.rows)


def resolve_point(config: ExperimentConfig, value: float) -> ExperimentConfig:
    """Apply one sweep value to the configuration."""
    if config.sweep in ("pilot_length", "antennas", "num_devices", "num_clusters"):
        return replace(config, **{config.sweep: int(value)})
    return replace(config, **{config.sweep: float(value)})


def _mean_se(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return mean, se


def summarize(rows: list[MetricSample]) -> list[SummaryRow]:
    """One row per (algorithm, sweep value): means and standard errors."""
    groups: dict[tuple[str, float], list[MetricSample]] = {}
    order: list[tuple[str, float]] = []
    for row in rows:
        key = (row.algorithm, row.sweep_value)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    out = []
    for alg, value in order:
        members = groups[(alg, value)]
        nm, nse = _mean_se([r.nmse for r in members if r.nmse is not None])
        pm, pse = _mean_se([r.pmd for r in members if r.pmd is not None])
        fm, fse = _mean_se([r.pfa for r in members if r.pfa is not None])
        rm, rse = _mean_se([r.runtime_s for r in members if not r.skipped])
        im, _ = _mean_se([float(r.iterations) for r in members if not r.skipped])
        zetas = [r.zeta for r in members if r.zeta is not None]
        out.append(
            SummaryRow(
                algorithm=alg,
                sweep_name=members[0].sweep_name,
                sweep_value=value,
                trials=len(members),
                skipped=sum(1 for r in members if r.skipped),
                nmse_mean=nm,
                nmse_se=nse,
                pmd_mean=pm,
                pmd_se=pse,
                pfa_mean=fm,
                pfa_se=fse,
                runtime_s_mean=rm,
                runtime_s_se=rse,
                iterations_mean=im,
                zeta=zetas[0] if zetas else None,
            )
        )
    return out


def _build_point(
    config: ExperimentConfig, sweep_index: int, value: float
) -> tuple[ExperimentConfig, PilotBank, NetworkScenario]:
    point = resolve_point(config, value)
    sizes = split_evenly(point.num_devices, point.num_clusters)
    bank = build_pilot_bank(
        point.pilot_length,
        sizes,
        cardinality=point.weight_cardinality or None,
        pool_factor=point.pool_factor,
        seed=derive_seed(point.master_seed, _PHASE_PILOTS, sweep_index),
    )
    # Scenario entropy depends only on placement-relevant parameters, so the
    # same device drop is reused across sweeps of L, SNR, activity, or G
    # (the cluster count never touches the placement stream).
    scenario_seed = derive_seed(
        point.master_seed,
        _PHASE_SCENARIO,
        point.num_devices,
        point.antennas,
        int(point.correlated),
        int(round(point.sigma_phi_deg * 1000)),
        point.multipaths,
    )
    scenario = build_scenario(
        num_devices=point.num_devices,
        num_clusters=point.num_clusters,
        antennas=point.antennas,
        activity_prob=point.activity_prob,
        noise_power=point.noise_power_w,
        snr_db=point.snr_db,
        correlated=point.correlated,
        sigma_phi_deg=point.sigma_phi_deg,
        multipaths=point.multipaths,
        cell_radius=point.cell_radius_m,
        min_distance=point.min_distance_m,
        coherence_interval=point.coherence_interval,
        cluster_sizes=sizes,
        seed=scenario_seed,
    )
    return point, bank, scenario


def _lambda_gain(pilots: np.ndarray, calibration: AemCalibration) -> float:
    whitened = calibration.whitener @ pilots
    return float(np.mean(np.linalg.norm(whitened, axis=0) ** 2))


class _AlgorithmRunner:
    """Applies one algorithm to a realization inside a fixed sweep point."""

    def __init__(self, context: _PointContext, algorithm: str):
        self.ctx = context
        self.alg = algorithm

    def __call__(self, realization: ChannelRealization, timer) -> tuple:
        ctx = self.ctx
        Y = realization.received
        num_devices = ctx.scenario.num_devices
        antennas = ctx.scenario.antennas
        estimate = np.zeros((num_devices, antennas), dtype=np.complex128)
        runtime = 0.0
        iterations = 0
        converged = True
        if self.alg in ("somp", "admm", "sbl"):
            result, elapsed = timed(self._run_central, Y, timer=timer)
            estimate = result.estimate
            runtime = elapsed
            iterations = result.iterations
            converged = result.converged
        else:
            for ops in ctx.clusters:
                result, elapsed = timed(self._run_cluster, ops, Y, timer=timer)
                estimate[ops.rows] = result.estimate
                runtime += elapsed
                iterations += result.iterations
                converged = converged and result.converged
        scores = np.linalg.norm(estimate, axis=1)
        return estimate, scores, runtime, iterations, converged

    def _run_central(self, Y):
        ctx = self.ctx
        cfg = ctx.config
        if self.alg == "somp":
            return cb_somp(Y, ctx.bank.pilots, tolerance=cfg.tolerance)
        if self.alg == "admm":
            return aem_admm(
                Y,
                ctx.bank.pilots,
                identity_calibration(ctx.bank.length, 1.0),
                lam=ctx.lambdas["admm"],
                rho=cfg.admm_rho,
                tolerance=cfg.tolerance,
                max_iter=cfg.max_iter,
                operator=ctx.central_admm_op,
            )
        return aem_sbl(
            Y,
            ctx.bank.pilots,
            identity_calibration(ctx.bank.length, ctx.scenario.noise_power),
            tolerance=cfg.tolerance,
            max_iter=cfg.max_iter,
            gamma_max=cfg.gamma_max,
            operator=ctx.central_sbl_op,
        )

    def _run_cluster(self, ops: _ClusterOps, Y):
        cfg = self.ctx.config
        if self.alg == "cb_somp":
            return cb_somp(Y, ops.pilots, tolerance=cfg.tolerance)
        projected = ops.basis @ (ops.basis.conj().T @ Y)
        if self.alg == "aem_admm":
            # lambda and rho are configured in unwhitened units; the whitener
            # rescales the quadratic term by lambda_gain, so both follow.
            return aem_admm(
                projected,
                ops.pilots,
                ops.calibration,
                lam=self.ctx.lambdas["aem_admm"] * ops.lambda_gain,
                rho=cfg.admm_rho * ops.lambda_gain,
                tolerance=cfg.tolerance,
                max_iter=cfg.max_iter,
                operator=ops.admm_op,
            )
        return aem_sbl(
            projected,
            ops.pilots,
            ops.calibration,
            tolerance=cfg.tolerance,
            max_iter=cfg.max_iter,
            gamma_max=cfg.gamma_max,
            operator=ops.sbl_op,
        )


def _parallel_map(fn, count: int, threads: int) -> list:
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def _needs_lambda(algorithms) -> list[str]:
    return [a for a in algorithms if a in ("admm", "aem_admm")]


def _search_lambda(
    context: _PointContext, algorithm: str, realizations: list[ChannelRealization]
) -> float:
    """Pick the unwhitened penalty scale minimizing NMSE on held-out trials."""
    cfg = context.config
    base = np.sqrt(cfg.noise_power_w * context.scenario.antennas)
    best_lam = LAMBDA_GRID[0] * base
    best_score = np.inf
    for factor in LAMBDA_GRID:
        lam = factor * base
        trial_ctx = replace(context, lambdas={**context.lambdas, algorithm: lam})
        runner = _AlgorithmRunner(trial_ctx, algorithm)
        errors = []
        for real in realizations:
            try:
                estimate, *_ = runner(real, time.perf_counter)
            except RuntimeError:
                errors.append(np.inf)
                continue
            err = nmse(real.signals, estimate, real.active_indices)
            if err is not None:
                errors.append(err)
        score = float(np.mean(errors)) if errors else np.inf
        if score < best_score:
            best_score = score
            best_lam = lam
    return best_lam


def _prepare_context(
    config: ExperimentConfig, sweep_index: int, value: float, threads: int, progress
) -> _PointContext:
    point, bank, scenario = _build_point(config, sweep_index, value)
    needs_aem = any(a in ("aem_admm", "aem_sbl") for a in point.algorithms)
    needs_clusters = needs_aem or "cb_somp" in point.algorithms

    calibrations: list[AemCalibration | None]
    if needs_aem:
        if progress:
            progress(
                f"[{point.sweep}={value:g}] calibrating {bank.num_clusters} clusters "
                f"({point.calibration_trials} training trials)"
            )
        calibrations = list(
            calibrate_all(
                scenario,
                bank,
                point.calibration_trials,
                seed=derive_seed(point.master_seed, _PHASE_CALIBRATION, sweep_index),
            )
        )
    else:
        calibrations = [None] * bank.num_clusters

    clusters = []
    if needs_clusters:
        for g in range(bank.num_clusters):
            S_g = bank.cluster_pilots(g)
            calib = calibrations[g]
            wants_admm = calib is not None and "aem_admm" in point.algorithms
            gain = _lambda_gain(S_g, calib) if wants_admm else 1.0
            clusters.append(
                _ClusterOps(
                    pilots=S_g,
                    rows=bank.cluster_slice(g),
                    basis=subspace_basis(S_g) if needs_aem else np.empty(0),
                    calibration=calib,
                    admm_op=admm_operator(S_g, calib, point.admm_rho * gain)
                    if wants_admm
                    else None,
                    sbl_op=sbl_operator(S_g, calib)
                    if calib is not None and "aem_sbl" in point.algorithms
                    else None,
                    lambda_gain=gain,
                )
            )

    central_admm_op = None
    central_sbl_op = None
    if "admm" in point.algorithms:
        central_admm_op = admm_operator(
            bank.pilots, identity_calibration(bank.length, 1.0), point.admm_rho
        )
    if "sbl" in point.algorithms:
        central_sbl_op = sbl_operator(
            bank.pilots, identity_calibration(bank.length, scenario.noise_power)
        )

    context = _PointContext(
        sweep_index=sweep_index,
        sweep_value=float(value),
        config=point,
        bank=bank,
        scenario=scenario,
        clusters=clusters,
        central_admm_op=central_admm_op,
        central_sbl_op=central_sbl_op,
        lambdas={},
        zetas={},
    )

    lambda_algs = _needs_lambda(point.algorithms)
    lambdas: dict[str, float] = {}
    if lambda_algs:
        if point.admm_lambda > 0:
            for alg in lambda_algs:
                lambdas[alg] = point.admm_lambda
        else:
            held_out = [
                sample_realization(
                    scenario,
                    bank,
                    derive_rng(point.master_seed, _PHASE_LAMBDA, k),
                )
                for k in range(point.lambda_trials)
            ]
            for alg in lambda_algs:
                if progress:
                    progress(f"[{point.sweep}={value:g}] grid-searching lambda for {alg}")
                lambdas[alg] = _search_lambda(
                    replace(context, lambdas={alg: 0.0}), alg, held_out
                )
    context = replace(context, lambdas=lambdas)

    # Detection thresholds from a dedicated calibration batch, one per
    # algorithm, targeting the configured false-alarm rate.
    if progress:
        progress(
            f"[{point.sweep}={value:g}] calibrating thresholds "
            f"({point.resolved_threshold_trials()} trials)"
        )
    zetas = _calibrate_zetas(context, threads)
    return replace(context, zetas=zetas)


def _calibrate_zetas(context: _PointContext, threads: int) -> dict[str, float]:
    cfg = context.config
    runners = {alg: _AlgorithmRunner(context, alg) for alg in cfg.algorithms}
    count = cfg.resolved_threshold_trials()

    def one(t: int):
        real = sample_realization(
            context.scenario,
            context.bank,
            derive_rng(cfg.master_seed, _PHASE_THRESHOLD, t),
        )
        inactive = np.flatnonzero(real.activity == 0)
        null_scores = {}
        for alg, runner in runners.items():
            try:
                _, scores, *_ = runner(real, time.perf_counter)
            except RuntimeError:
                continue
            null_scores[alg] = scores[inactive]
        return null_scores

    collected = _parallel_map(one, count, threads)
    zetas = {}
    for alg in cfg.algorithms:
        pools = [batch[alg] for batch in collected if alg in batch]
        if not pools:
            raise RuntimeError(
                f"threshold calibration failed: {alg} diverged on every batch trial"
            )
        zetas[alg] = calibrate_threshold(np.concatenate(pools), cfg.target_pfa)
    return zetas


def _evaluate_point(
    context: _PointContext, threads: int, timer, progress
) -> list[MetricSample]:
    cfg = context.config
    runners = {alg: _AlgorithmRunner(context, alg) for alg in cfg.algorithms}

    def one(t: int) -> list[MetricSample]:
        real = sample_realization(
            context.scenario,
            context.bank,
            derive_rng(cfg.master_seed, _PHASE_EVAL, t),
        )
        active = real.active_indices
        samples = []
        for alg in cfg.algorithms:
            common = dict(
                algorithm=alg,
                sweep_name=cfg.sweep,
                sweep_value=context.sweep_value,
                trial=t,
                zeta=context.zetas[alg],
            )
            try:
                estimate, scores, runtime, iterations, _ = runners[alg](real, timer)
            except RuntimeError:
                samples.append(
                    MetricSample(
                        nmse=None, pmd=None, pfa=None, runtime_s=0.0,
                        iterations=0, skipped=True, **common,
                    )
                )
                continue
            err = nmse(real.signals, estimate, active)
            decisions, pmd, pfa = detect_and_pmd(real.activity, scores, context.zetas[alg])
            misses = int(np.sum((real.activity == 1) & (decisions == 0)))
            false_alarms = int(np.sum((real.activity == 0) & (decisions == 1)))
            samples.append(
                MetricSample(
                    nmse=err,
                    pmd=pmd,
                    pfa=pfa,
                    runtime_s=runtime,
                    iterations=iterations,
                    skipped=err is None,
                    active_count=int(active.size),
                    inactive_count=int(real.activity.size - active.size),
                    misses=misses,
                    false_alarms=false_alarms,
                    **common,
                )
            )
        return samples

    per_trial = _parallel_map(one, cfg.trials, threads)
    if progress:
        progress(f"[{cfg.sweep}={context.sweep_value:g}] finished {cfg.trials} trials")
    rows: list[MetricSample] = []
    for alg_index, alg in enumerate(cfg.algorithms):
        for t in range(cfg.trials):
            rows.append(per_trial[t][alg_index])
    return rows


def run_experiment(
    config: ExperimentConfig,
    threads: int | None = None,
    timer=time.perf_counter,
    progress=None,
) -> ResultsTable:
    """Run the configured sweep and return all per-trial samples.

    `timer` is the clock used for detector runtimes; injecting a constant
    callable makes the delimited outputs fully reproducible.
    """
    config.validate()
    threads = config.threads if threads is None else int(threads)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    rows: list[MetricSample] = []
    for sweep_index, value in enumerate(config.sweep_values):
        context = _prepare_context(config, sweep_index, value, threads, progress)
        rows.extend(_evaluate_point(context, threads, timer, progress))
    return ResultsTable(config=config, rows=rows)


# ---------------------------------------------------------------------------
# Delimited outputs
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(table: ResultsTable, path) -> None:
    """Per-trial rows, preceded by the resolved configuration as comments."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in config_to_lines(table.config):
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for r in table.rows:
            writer.writerow(
                [
                    r.algorithm,
                    r.sweep_name,
                    _fmt(float(r.sweep_value)),
                    r.trial,
                    _fmt(r.nmse),
                    _fmt(r.pmd),
                    _fmt(r.pfa),
                    _fmt(float(r.runtime_s)),
                    r.iterations,
                    _fmt(bool(r.skipped)),
                ]
            )


def write_summary_csv(table: ResultsTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in table.summary():
            writer.writerow(
                [
                    s.algorithm,
                    s.sweep_name,
                    _fmt(float(s.sweep_value)),
                    s.trials,
                    s.skipped,
                    _fmt(s.nmse_mean),
                    _fmt(s.nmse_se),
                    _fmt(s.pmd_mean),
                    _fmt(s.pmd_se),
                    _fmt(s.pfa_mean),
                    _fmt(s.pfa_se),
                    _fmt(s.runtime_s_mean),
                    _fmt(s.runtime_s_se),
                    _fmt(s.iterations_mean),
                    _fmt(s.zeta),
                ]
            )


def emit_outputs(table: ResultsTable, output_dir, make_plots: bool = True) -> dict[str, str]:
    """Write results.csv, summary.csv, and one vector figure per metric."""
    from pathlib import Path

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    results_path = out / "results.csv"
    write_results_csv(table, results_path)
    paths["results"] = str(results_path)
    summary_path = out / "summary.csv"
    write_summary_csv(table, summary_path)
    paths["summary"] = str(summary_path)
    if make_plots and table.rows:
        from .plots import render_metric_figures

        for name, fig_path in render_metric_figures(table, out).items():
            paths[name] = str(fig_path)
    return paths


def read_results_csv(path) -> tuple[list[str], list[dict]]:
    """Read back a results file; returns (config_lines, row dicts)."""
    config_lines = []
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header = None
        for raw in fh:
            if raw.startswith("#"):
                config_lines.append(raw[1:].strip())
                continue
            stripped = raw.rstrip("\r\n")
            if header is None:
                header = stripped.split(",")
                continue
            rows.append(dict(zip(header, stripped.split(","))))
    return config_lines, rows


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RipStats:
    """Extreme singular values of random pilot submatrices for one cluster."""

    cluster: int
    subset_size: int
    smin: np.ndarray
    smax: np.ndarray


def rip_diagnostic(
    bank: PilotBank, subset_size: int, samples: int, seed: int = 0
) -> list[RipStats]:
    """Sample random column subsets per cluster and record extreme singular values.

    No restricted-isometry constant is asserted; this reports the observed
    spread so conditioning can be judged empirically.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    out = []
    for g in range(bank.num_clusters):
        S_g = bank.cluster_pilots(g)
        n_g = S_g.shape[1]
        if not 1 <= subset_size <= n_g:
            raise ValueError(
                f"subset size {subset_size} out of range [1, {n_g}] for cluster {g}"
            )
        rng = derive_rng(seed, g)
        smin = np.empty(samples)
        smax = np.empty(samples)
        for i in range(samples):
            cols = rng.choice(n_g, size=subset_size, replace=False)
            sv = np.linalg.svd(S_g[:, cols], compute_uv=False)
            smax[i] = sv[0]
            smin[i] = sv[-1]
        out.append(RipStats(cluster=g, subset_size=subset_size, smin=smin, smax=smax))
    return out


def coherence_sweep(config: ExperimentConfig) -> list[tuple[float, int, float]]:
    """Mutual coherence of the full pilot bank along the configured sweep.

    Returns (sweep_value, seed_index, coherence) triples, averaging
    material for coherence-versus-parameter figures.
    """
    config.validate()
    if config.sweep not in ("pilot_length", "num_clusters", "num_devices"):
        raise ValueError(
            "coherence sweeps support the pilot_length, num_clusters, and "
            f"num_devices axes, not {config.sweep!r}"
        )
    rows = []
    for sweep_index, value in enumerate(config.sweep_values):
        point = resolve_point(config, value)
        sizes = split_evenly(point.num_devices, point.num_clusters)
        for k in range(config.coherence_seeds):
            bank = build_pilot_bank(
                point.pilot_length,
                sizes,
                cardinality=point.weight_cardinality or None,
                pool_factor=point.pool_factor,
                seed=derive_seed(point.master_seed, _PHASE_COHERENCE, sweep_index, k),
            )
            rows.append((float(value), k, mutual_coherence(bank.pilots)))
    return rows
