"""End-to-end sweep harness tests on deliberately tiny experiments."""

import warnings

import numpy as np
import pytest

from jadce.config import ExperimentConfig, config_to_lines
from jadce.harness import (
    RESULT_COLUMNS,
    ResultsTable,
    coherence_sweep,
    emit_outputs,
    read_results_csv,
    resolve_point,
    rip_diagnostic,
    run_experiment,
    summarize,
    write_results_csv,
)
from jadce.metrics import MetricSample
from jadce.pilots import build_pilot_bank


def _tiny(**overrides) -> ExperimentConfig:
    base = dict(
        num_devices=16,
        num_clusters=2,
        antennas=2,
        pilot_length=16,
        activity_prob=0.2,
        algorithms=("cb_somp", "aem_sbl", "sbl"),
        trials=3,
        calibration_trials=40,
        threshold_trials=4,
        target_pfa=0.05,
        max_iter=200,
        sweep="snr_db",
        sweep_values=(0.0, 10.0),
        master_seed=13,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def tiny_table():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_experiment(_tiny(), threads=1, timer=lambda: 0.0)


def test_resolve_point_casts_integer_axes():
    cfg = ExperimentConfig(sweep="pilot_length", sweep_values=(16.0, 32.0))
    point = resolve_point(cfg, 16.0)
    assert point.pilot_length == 16
    assert isinstance(point.pilot_length, int)


def test_resolve_point_keeps_float_axes():
    cfg = ExperimentConfig(sweep="snr_db", sweep_values=(2.5,))
    assert resolve_point(cfg, 2.5).snr_db == 2.5


def _sample(alg, value, trial, **overrides):
    base = dict(
        algorithm=alg,
        sweep_name="snr_db",
        sweep_value=value,
        trial=trial,
        nmse=0.5,
        pmd=0.1,
        pfa=0.0,
        runtime_s=1.0,
        iterations=10,
        skipped=False,
        zeta=0.25,
    )
    base.update(overrides)
    return MetricSample(**base)


def test_summarize_hand_built_rows():
    rows = [
        _sample("a", 1.0, 0, nmse=0.5, runtime_s=1.0, iterations=10),
        _sample("a", 1.0, 1, nmse=0.7, runtime_s=2.0, iterations=20),
        _sample("a", 1.0, 2, nmse=None, pmd=None, pfa=None, runtime_s=0.0,
                iterations=0, skipped=True, zeta=None),
        _sample("b", 1.0, 0, nmse=0.9),
    ]
    summary = summarize(rows)
    assert [(s.algorithm, s.sweep_value) for s in summary] == [("a", 1.0), ("b", 1.0)]
    a, b = summary
    assert a.trials == 3
    assert a.skipped == 1
    # skipped row contributes nothing to the means
    assert a.nmse_mean == pytest.approx(0.6)
    assert a.nmse_se == pytest.approx(0.1)
    assert a.runtime_s_mean == pytest.approx(1.5)
    assert a.iterations_mean == pytest.approx(15.0)
    assert a.zeta == 0.25
    assert b.trials == 1
    assert b.nmse_mean == pytest.approx(0.9)
    assert b.nmse_se == 0.0
    assert b.skipped == 0


def test_summarize_all_skipped_group_has_none_means():
    rows = [
        _sample("a", 1.0, 0, nmse=None, pmd=None, pfa=None, runtime_s=0.0,
                iterations=0, skipped=True, zeta=None)
    ]
    (only,) = summarize(rows)
    assert only.nmse_mean is None
    assert only.nmse_se is None
    assert only.runtime_s_mean is None
    assert only.zeta is None


def test_run_experiment_row_layout(tiny_table):
    cfg = tiny_table.config
    expected = len(cfg.algorithms) * len(cfg.sweep_values) * cfg.trials
    assert len(tiny_table.rows) == expected
    # algorithm-major within each sweep point, trials in order
    first = tiny_table.rows[: cfg.trials]
    assert all(r.algorithm == cfg.algorithms[0] for r in first)
    assert [r.trial for r in first] == list(range(cfg.trials))
    assert {r.sweep_name for r in tiny_table.rows} == {"snr_db"}
    assert sorted({r.sweep_value for r in tiny_table.rows}) == [0.0, 10.0]


def test_run_experiment_rows_carry_metrics(tiny_table):
    for row in tiny_table.rows:
        if row.skipped:
            continue
        assert row.nmse is not None and row.nmse >= 0.0
        assert 0.0 <= row.pmd <= 1.0
        assert 0.0 <= row.pfa <= 1.0
        assert row.runtime_s == 0.0  # injected constant timer
        assert row.iterations >= 1
        assert row.zeta is not None
        assert row.active_count + row.inactive_count == tiny_table.config.num_devices


def test_summary_matches_recomputed_group_means(tiny_table):
    summary = {(s.algorithm, s.sweep_value): s for s in tiny_table.summary()}
    members = [
        r
        for r in tiny_table.rows
        if r.algorithm == "aem_sbl" and r.sweep_value == 10.0
    ]
    got = summary[("aem_sbl", 10.0)]
    vals = [r.nmse for r in members if r.nmse is not None]
    assert got.nmse_mean == pytest.approx(np.mean(vals))
    assert got.trials == len(members)


def test_csv_identical_across_thread_counts(tmp_path, tiny_table):
    paths = []
    for threads in (1, 3):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = run_experiment(_tiny(), threads=threads, timer=lambda: 0.0)
        path = tmp_path / f"threads{threads}.csv"
        write_results_csv(table, path)
        paths.append(path)
    ref = tmp_path / "ref.csv"
    write_results_csv(tiny_table, ref)
    blobs = [p.read_bytes() for p in paths + [ref]]
    assert blobs[0] == blobs[1] == blobs[2]


def test_emit_outputs_writes_tables_and_figures(tmp_path, tiny_table):
    paths = emit_outputs(tiny_table, tmp_path / "out")
    for key in ("results", "summary", "plot_nmse", "plot_pmd", "plot_pfa",
                "plot_runtime"):
        assert key in paths, key
        assert (tmp_path / "out").samefile((tmp_path / "out"))
    for key, value in paths.items():
        data = open(value, "rb").read()
        assert data, key
        if key.startswith("plot_"):
            assert data.startswith(b"%PDF"), key


def test_results_csv_roundtrip(tmp_path, tiny_table):
    path = tmp_path / "results.csv"
    write_results_csv(tiny_table, path)
    config_lines, rows = read_results_csv(path)
    assert config_lines == config_to_lines(tiny_table.config)
    assert len(rows) == len(tiny_table.rows)
    assert set(rows[0]) == set(RESULT_COLUMNS)
    assert rows[0]["algorithm"] == tiny_table.rows[0].algorithm
    assert float(rows[0]["sweep_value"]) == tiny_table.rows[0].sweep_value


def test_fixed_penalty_skips_the_grid_search():
    cfg = _tiny(
        algorithms=("aem_admm", "admm"),
        admm_lambda=2e-7,
        trials=2,
        sweep_values=(10.0,),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = run_experiment(cfg, threads=1, timer=lambda: 0.0)
    assert len(table.rows) == 2 * 2
    assert all(not r.skipped for r in table.rows)


def test_rip_diagnostic_singletons_have_unit_singular_values():
    bank = build_pilot_bank(16, (8, 8), seed=2)
    stats = rip_diagnostic(bank, subset_size=1, samples=50, seed=0)
    assert len(stats) == 2
    for s in stats:
        # unit-norm pilots: a single column has singular value exactly one
        assert np.allclose(s.smin, 1.0, atol=1e-12)
        assert np.allclose(s.smax, 1.0, atol=1e-12)


def test_rip_diagnostic_spread_and_determinism():
    bank = build_pilot_bank(16, (8, 8), seed=2)
    a = rip_diagnostic(bank, subset_size=3, samples=25, seed=5)
    b = rip_diagnostic(bank, subset_size=3, samples=25, seed=5)
    for x, y in zip(a, b):
        assert np.array_equal(x.smin, y.smin)
        assert np.array_equal(x.smax, y.smax)
        assert np.all(x.smin <= x.smax)
        assert np.all(x.smin > 0.0)


def test_rip_diagnostic_rejects_oversized_subsets():
    bank = build_pilot_bank(16, (8, 8), seed=2)
    with pytest.raises(ValueError, match="subset size"):
        rip_diagnostic(bank, subset_size=9, samples=5)


def test_coherence_sweep_shape_and_range():
    cfg = ExperimentConfig(
        num_devices=32,
        pilot_length=16,
        sweep="num_clusters",
        sweep_values=(2.0, 4.0),
        coherence_seeds=2,
        master_seed=3,
    )
    rows = coherence_sweep(cfg)
    assert len(rows) == 4
    assert [v for v, _, _ in rows] == [2.0, 2.0, 4.0, 4.0]
    assert [k for _, k, _ in rows] == [0, 1, 0, 1]
    for _, _, mu in rows:
        assert 0.0 < mu <= 1.0


def test_coherence_sweep_rejects_unrelated_axes():
    cfg = ExperimentConfig(sweep="snr_db", sweep_values=(0.0,))
    with pytest.raises(ValueError, match="coherence sweeps support"):
        coherence_sweep(cfg)


def test_invalid_thread_count_rejected():
    with pytest.raises(ValueError, match="threads"):
        run_experiment(_tiny(), threads=0)
