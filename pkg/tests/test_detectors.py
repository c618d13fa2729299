import numpy as np
import pytest

from jadce.calibration import calibration_from_moments, identity_calibration
from jadce.detectors import (
    aem_admm,
    aem_sbl,
    cb_somp,
    centralized_baseline,
    dump_trace_csv,
    group_soft_threshold,
)
from jadce.pilots import build_pilot_bank
from jadce.seeding import derive_rng
from oracles import (
    gaussian_log_evidence,
    group_lasso_objective,
    group_lasso_reference,
)


def _complex(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def test_group_soft_threshold_known_row():
    row = np.array([[3.0 + 0j, 4.0 + 0j]])
    out = group_soft_threshold(row, 1.0)  # norm 5 shrinks to 4
    np.testing.assert_allclose(out, np.array([[2.4, 3.2]]), atol=1e-12)
    zeroed = group_soft_threshold(row, 5.0)
    np.testing.assert_array_equal(zeroed, np.zeros((1, 2)))
    assert zeroed[0, 0] == 0.0  # exact zero, not tiny
    np.testing.assert_array_equal(group_soft_threshold(row, 0.0), row)
    with pytest.raises(ValueError):
        group_soft_threshold(row, -0.1)


def test_somp_recovers_planted_sparse_rows(rng):
    bank = build_pilot_bank(32, (16,), seed=2)
    S = bank.pilots
    X = np.zeros((16, 3), dtype=complex)
    support = [2, 9]
    X[support] = _complex(rng, (2, 3))
    result = cb_somp(S @ X, S)
    assert set(np.flatnonzero(result.row_scores)) == set(support)
    np.testing.assert_allclose(result.estimate, X, atol=1e-8)
    assert result.converged


def test_somp_respects_max_selections(rng):
    bank = build_pilot_bank(16, (12,), seed=3)
    Y = _complex(rng, (16, 2))
    result = cb_somp(Y, bank.pilots, max_selections=5)
    assert result.iterations <= 5
    assert np.count_nonzero(result.row_scores) <= 5


def test_somp_input_validation(rng):
    with pytest.raises(ValueError):
        cb_somp(_complex(rng, (8, 2)), _complex(rng, (4, 3)))
    bad = np.ones((4, 2), dtype=complex)
    bad[:, 1] = 0.0
    with pytest.raises(ValueError):
        cb_somp(np.ones((4, 1), dtype=complex), bad)


def test_admm_matches_reference_minimizer_identity(rng):
    bank = build_pilot_bank(16, (8,), seed=5)
    S = bank.pilots
    V = _complex(rng, (16, 3))
    lam = 0.4
    result = aem_admm(V, S, identity_calibration(16, 1.0), lam=lam,
                      tolerance=1e-10, max_iter=5000)
    reference = group_lasso_reference(S, V, lam)
    assert result.converged
    np.testing.assert_allclose(result.estimate, reference, atol=1e-6)
    # neither solver undercuts the other's objective value
    ours = group_lasso_objective(S, V, lam, result.estimate)
    theirs = group_lasso_objective(S, V, lam, reference)
    assert ours <= theirs + 1e-8


def test_admm_matches_reference_minimizer_whitened(rng):
    # a learned, non-trivial covariance: the solvers must agree on the
    # whitened objective, not just the white one
    bank = build_pilot_bank(16, (10,), seed=6)
    S = bank.pilots
    E = _complex(rng, (16, 400))
    calib = calibration_from_moments(np.zeros((16, 1)), (E @ E.conj().T) / 400,
                                     trials=400)
    V = _complex(rng, (16, 2))
    lam = 0.3
    result = aem_admm(V, S, calib, lam=lam, tolerance=1e-10, max_iter=8000)
    A = calib.whitener @ S
    B = calib.whitener @ (V + calib.mean)
    reference = group_lasso_reference(A, B, lam)
    np.testing.assert_allclose(result.estimate, reference, atol=1e-5)


def test_admm_inactive_rows_are_exact_zeros(rng):
    bank = build_pilot_bank(32, (8,), seed=7)
    S = bank.pilots
    X = np.zeros((8, 2), dtype=complex)
    X[3] = 2.0 * _complex(rng, (2,))
    V = S @ X + 0.01 * _complex(rng, (32, 2))
    result = aem_admm(V, S, identity_calibration(32, 1.0), lam=0.2,
                      tolerance=1e-8, max_iter=2000)
    zero_rows = np.flatnonzero(result.row_scores == 0.0)
    assert zero_rows.size > 0
    np.testing.assert_array_equal(result.estimate[zero_rows], 0)


def test_admm_aborts_on_non_finite_input(rng):
    bank = build_pilot_bank(16, (4,), seed=8)
    V = _complex(rng, (16, 2))
    V[0, 0] = np.nan
    with pytest.raises(RuntimeError, match="non-finite"):
        aem_admm(V, bank.pilots, identity_calibration(16, 1.0), lam=0.1)


def test_admm_trace_records_iterations(rng):
    bank = build_pilot_bank(16, (6,), seed=9)
    V = _complex(rng, (16, 2))
    result = aem_admm(V, bank.pilots, identity_calibration(16, 1.0), lam=0.3,
                      keep_trace=True)
    assert result.trace is not None
    assert len(result.trace) == result.iterations
    assert {"iteration", "relative_change", "primal_residual", "dual_norm"} <= set(
        result.trace[0]
    )


def test_sbl_trace_evidence_matches_direct_formula(rng):
    bank = build_pilot_bank(16, (12,), seed=10)
    S = bank.pilots
    calib = identity_calibration(16, 0.5)
    V = _complex(rng, (16, 3))
    result = aem_sbl(V, S, calib, max_iter=5, keep_trace=True)
    # iteration 1 evaluates the evidence at the all-ones initial gamma
    direct = gaussian_log_evidence(S, calib.regularized, np.ones(12), V)
    np.testing.assert_allclose(result.trace[0]["log_evidence"], direct, rtol=1e-10)


def test_sbl_evidence_nondecreasing_and_posterior_psd(rng):
    bank = build_pilot_bank(16, (12,), seed=11)
    S = bank.pilots
    calib = identity_calibration(16, 0.25)
    for trial in range(5):
        X = np.zeros((12, 4), dtype=complex)
        X[[1, 7]] = _complex(rng, (2, 4))
        V = S @ X + 0.5 * _complex(rng, (16, 4))
        result = aem_sbl(V, S, calib, max_iter=40, keep_trace=True)
        evidence = [row["log_evidence"] for row in result.trace]
        diffs = np.diff(evidence)
        assert diffs.min() >= -1e-8
        eigs = [row["min_posterior_eig"] for row in result.trace]
        assert min(eigs) > 0.0


def test_sbl_shrinks_inactive_rows(rng):
    bank = build_pilot_bank(32, (16,), seed=12)
    S = bank.pilots
    X = np.zeros((16, 8), dtype=complex)
    X[5] = 3.0 * _complex(rng, (8,))
    V = S @ X + 0.05 * _complex(rng, (32, 8))
    result = aem_sbl(V, S, identity_calibration(32, 0.05 ** 2))
    assert result.row_scores.argmax() == 5
    others = np.delete(result.row_scores, 5)
    assert others.max() < 0.05 * result.row_scores[5]
    assert result.gamma is not None
    assert result.gamma[5] < np.delete(result.gamma, 5).min()


def test_sbl_gamma_init_validation(rng):
    bank = build_pilot_bank(16, (6,), seed=13)
    V = _complex(rng, (16, 2))
    with pytest.raises(ValueError):
        aem_sbl(V, bank.pilots, identity_calibration(16, 1.0),
                gamma_init=np.zeros(6))
    with pytest.raises(ValueError):
        aem_sbl(V, bank.pilots, identity_calibration(16, 1.0), gamma_max=0.0)


def test_sbl_gamma_respects_the_cap(rng):
    # the natural precision fixed point for near-zero data sits around
    # 1 / diag(posterior cov); a cap below it must clip exactly
    bank = build_pilot_bank(16, (8,), seed=14)
    V = 1e-9 * _complex(rng, (16, 2))
    free = aem_sbl(V, bank.pilots, identity_calibration(16, 1.0), max_iter=100)
    cap = 0.5 * float(free.gamma.min())
    capped = aem_sbl(V, bank.pilots, identity_calibration(16, 1.0),
                     gamma_max=cap, max_iter=100)
    assert capped.gamma.max() <= cap
    assert np.all(capped.gamma == cap)


def test_centralized_baselines_delegate(rng):
    bank = build_pilot_bank(16, (5, 5), seed=15)
    Y = _complex(rng, (16, 2))
    somp = centralized_baseline("somp", Y, bank.pilots, noise_power=0.1)
    direct = cb_somp(Y, bank.pilots)
    np.testing.assert_array_equal(somp.estimate, direct.estimate)

    admm = centralized_baseline("admm", Y, bank.pilots, noise_power=0.1, lam=0.2)
    direct = aem_admm(Y, bank.pilots, identity_calibration(16, 1.0), lam=0.2)
    np.testing.assert_allclose(admm.estimate, direct.estimate, atol=1e-12)

    sbl = centralized_baseline("sbl", Y, bank.pilots, noise_power=0.1)
    direct = aem_sbl(Y, bank.pilots, identity_calibration(16, 0.1))
    np.testing.assert_allclose(sbl.estimate, direct.estimate, atol=1e-12)


def test_centralized_baseline_validation(rng):
    Y = _complex(rng, (8, 2))
    S = _complex(rng, (8, 4))
    with pytest.raises(ValueError):
        centralized_baseline("mud", Y, S, noise_power=0.1)
    with pytest.raises(ValueError):
        centralized_baseline("admm", Y, S, noise_power=0.1)  # lam missing
    with pytest.raises(ValueError):
        centralized_baseline("sbl", Y, S, noise_power=0.0)


def test_dump_trace_csv(tmp_path, rng):
    bank = build_pilot_bank(16, (6,), seed=16)
    V = _complex(rng, (16, 2))
    result = aem_sbl(V, bank.pilots, identity_calibration(16, 1.0),
                     max_iter=5, keep_trace=True)
    path = tmp_path / "trace.csv"
    dump_trace_csv(result, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].startswith("iteration,")
    assert len(lines) == len(result.trace) + 1
    bare = aem_sbl(V, bank.pilots, identity_calibration(16, 1.0), max_iter=5)
    with pytest.raises(ValueError):
        dump_trace_csv(bare, path)
