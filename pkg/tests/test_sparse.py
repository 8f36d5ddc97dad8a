import numpy as np
import pytest

from ofdm_dfrc.sparse import (SolverError, bpdn_objective, fista_bpdn, group_omp, omp, soft_threshold,
                              spectral_norm_sq)


def _unit_gaussian(rng, rows, cols):
    A = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    return A / np.linalg.norm(A, axis=0)


def test_omp_identity():
    y = np.zeros(8, complex)
    y[3] = 1
    sol = omp(np.eye(8), y)
    assert sol.support.tolist() == [3]
    assert sol.coefficients[0] == pytest.approx(1.0)
    assert sol.residual_norm == 0.0


def test_omp_zero_measurement():
    sol = omp(np.eye(8), np.zeros(8))
    assert sol.support.size == 0 and sol.residual_norm == 0.0 and sol.iterations == 0


def test_omp_rejects_bad_inputs():
    with pytest.raises(SolverError):
        omp(2 * np.eye(4), np.ones(4))
    with pytest.raises(SolverError):
        omp(np.eye(4), np.ones(4), K=5)


def test_omp_planted_recovery_rate():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        A = _unit_gaussian(rng, 20, 50)
        support = rng.choice(50, 3, replace=False)
        x = np.zeros(50, complex)
        x[support] = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        sol = omp(A, A @ x, K=3)
        hits += set(sol.support.tolist()) == set(support.tolist())
    assert hits >= 99


def test_omp_residual_strictly_decreases(rng):
    A = _unit_gaussian(rng, 30, 60)
    y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    h = omp(A, y, K=10).residual_history
    assert all(b < a for a, b in zip(h, h[1:]))


def test_omp_support_invariant_to_phase(rng):
    A = _unit_gaussian(rng, 20, 50)
    y = A[:, [4, 17, 33]] @ np.array([1.0, -0.7j, 0.4])
    a = omp(A, y, K=3).support
    b = omp(A, np.exp(1.3j) * y, K=3).support
    assert a.tolist() == b.tolist()


def test_group_omp_reductions(rng):
    A = _unit_gaussian(rng, 20, 50)
    y = A[:, [2, 9, 40]] @ np.array([1.0, 0.5, -0.8j])
    ref = omp(A, y, K=3)
    single = group_omp(A[None], y[None], K=3)
    assert single.support.tolist() == ref.support.tolist()
    np.testing.assert_allclose(single.coefficients[:, 0], ref.coefficients, atol=1e-10)
    stacked = group_omp(np.stack([A] * 4), np.stack([y] * 4), K=3)
    assert stacked.support.tolist() == ref.support.tolist()


def test_group_omp_planted_mmv():
    # 32 atoms, 16 rows, 64 measurements with their own dictionaries, 5 shared rows
    for seed in range(20):
        rng = np.random.default_rng(seed)
        D = rng.standard_normal((64, 16, 32)) + 1j * rng.standard_normal((64, 16, 32))
        support = np.sort(rng.choice(32, 5, replace=False))
        X = rng.standard_normal((64, 5)) + 1j * rng.standard_normal((64, 5))
        Y = np.einsum("mrk,mk->mr", D[:, :, support], X)
        sol = group_omp(D, Y, K=5)
        assert sorted(sol.support.tolist()) == support.tolist()
        assert sol.residual_norm < 1e-8 * np.linalg.norm(Y)


def test_group_omp_shape_error(rng):
    with pytest.raises(SolverError):
        group_omp(np.zeros((3, 4, 5)), np.zeros((2, 4)))


def test_soft_threshold_keeps_phase():
    x = np.array([3 * np.exp(0.4j), 0.5, -2.0])
    out = soft_threshold(x, 1.0)
    np.testing.assert_allclose(out, [2 * np.exp(0.4j), 0.0, -1.0])


def test_fista_zero_solution(rng):
    A = _unit_gaussian(rng, 20, 40)
    y = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    lam = np.max(np.abs(A.conj().T @ y))
    sol = fista_bpdn(A, y, lam)
    assert np.all(sol.x == 0) and sol.support.size == 0


def test_fista_orthonormal_closed_form(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32)))
    y = rng.standard_normal(32) + 1j * rng.standard_normal(32)
    lam = 0.6
    sol = fista_bpdn(Q, y, lam)
    np.testing.assert_allclose(sol.x, soft_threshold(Q.conj().T @ y, lam), atol=1e-6)


def test_fista_matches_ista_and_never_increases():
    for seed in range(3):
        rng = np.random.default_rng(seed)
        A = _unit_gaussian(rng, 50, 100)
        x0 = np.zeros(100, complex)
        x0[rng.choice(100, 6, replace=False)] = 1 + rng.standard_normal(6)
        y = A @ x0 + 0.01 * rng.standard_normal(50)
        lam = 0.05
        fast = fista_bpdn(A, y, lam, rtol=1e-13, max_iter=20000)
        slow = fista_bpdn(A, y, lam, rtol=1e-15, max_iter=200000, accelerate=False)
        assert fast.converged
        h = np.array(fast.residual_history)
        assert np.all(np.diff(h) <= 1e-12 * h[0])
        assert abs(bpdn_objective(A, y, fast.x, lam) - bpdn_objective(A, y, slow.x, lam)) <= 1e-6


def test_fista_lambda_must_be_positive(rng):
    with pytest.raises(SolverError):
        fista_bpdn(np.eye(3), np.ones(3), 0.0)


def test_spectral_norm(rng):
    A = _unit_gaussian(rng, 20, 30)
    assert spectral_norm_sq(A) == pytest.approx(np.linalg.norm(A, 2) ** 2, rel=1e-8)
