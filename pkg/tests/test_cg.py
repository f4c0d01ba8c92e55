import numpy as np
import pytest

from symnlf.cg import CONVERGED, MAX_ITERS, STAGNATED, NumericalError, cg_solve


def spd(n, seed):
    M = np.random.default_rng(seed).normal(size=(n, n))
    return M.T @ M + np.eye(n)


def test_identity_one_iteration():
    b = np.random.default_rng(0).normal(size=7)
    out = cg_solve(lambda p: p, b, tol=1e-12, max_iters=10)
    assert out.iterations == 1
    assert out.flag == CONVERGED
    assert np.allclose(out.step, b, atol=1e-15)


def test_diagonal_system():
    D = np.array([1.0, 2.0, 4.0])
    out = cg_solve(lambda p: D * p, np.array([1.0, 2.0, 4.0]), tol=1e-14, max_iters=10)
    assert out.iterations <= 3
    assert np.abs(out.step - 1.0).max() <= 1e-12


@pytest.mark.parametrize("tol,budget", [(0.1, 50), (1e-8, 100)])
def test_random_spd_side_50(tol, budget):
    A = spd(50, 1)
    b = np.random.default_rng(2).normal(size=50)
    out = cg_solve(lambda p: A @ p, b, tol=tol, max_iters=budget)
    assert out.flag == CONVERGED
    assert np.linalg.norm(A @ out.step - b) <= tol * np.linalg.norm(b) * (1 + 1e-6)


@pytest.mark.parametrize("n", [1, 2, 5, 16, 33, 64])
def test_finite_termination_and_energy(n):
    A = spd(n, n)
    b = np.random.default_rng(100 + n).normal(size=n)
    energies = []
    out = cg_solve(lambda p: A @ p, b, tol=1e-10, max_iters=2 * n,
                   callback=lambda k, s: energies.append(0.5 * s @ A @ s - b @ s))
    assert out.flag == CONVERGED
    assert np.linalg.norm(A @ out.step - b) <= 1e-10 * np.linalg.norm(b)
    assert all(e2 <= e1 + 1e-12 * abs(e1) for e1, e2 in zip(energies, energies[1:]))
    assert energies[0] <= 0.0
    true_res = np.linalg.norm(b - A @ out.step)
    assert abs(true_res - out.residual_norm) <= 1e-8 * np.linalg.norm(b)


def test_residual_refresh_keeps_recurrence_honest():
    # ill-conditioned enough to need more than 25 iterations
    rng = np.random.default_rng(3)
    Q, _ = np.linalg.qr(rng.normal(size=(80, 80)))
    A = Q @ np.diag(np.logspace(0, 4, 80)) @ Q.T
    b = rng.normal(size=80)
    out = cg_solve(lambda p: A @ p, b, tol=1e-9, max_iters=400)
    assert out.iterations > 25
    assert abs(np.linalg.norm(b - A @ out.step) - out.residual_norm) <= 1e-8 * np.linalg.norm(b)


@pytest.mark.parametrize("n", [48, 50, 56, 62])
def test_log_spread_spectrum_needs_more_than_2n(n):
    # evenly log-spaced eigenvalues, condition 1e3: rounding erodes conjugacy,
    # so termination takes between 2n and 3n iterations instead of n
    rng = np.random.default_rng(n)
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    A = Q @ np.diag(np.logspace(0, 3, n)) @ Q.T
    b = rng.normal(size=n)
    out = cg_solve(lambda p: A @ p, b, tol=1e-10, max_iters=3 * n)
    assert out.flag == CONVERGED
    assert np.linalg.norm(b - A @ out.step) <= 1e-10 * np.linalg.norm(b) * (1 + 1e-6)


def test_max_iters_flag():
    A = spd(30, 4)
    b = np.ones(30)
    out = cg_solve(lambda p: A @ p, b, tol=1e-12, max_iters=3)
    assert out.flag == MAX_ITERS
    assert out.iterations == 3
    assert out.initial_residual_norm == pytest.approx(np.sqrt(30))


def test_zero_rhs():
    out = cg_solve(lambda p: p, np.zeros(4))
    assert out.iterations == 0 and out.flag == CONVERGED
    assert np.array_equal(out.step, np.zeros(4))


def test_stagnation_on_singular_direction():
    out = cg_solve(lambda p: np.zeros_like(p), np.ones(3), tol=0.1, max_iters=10)
    assert out.flag == STAGNATED
    assert out.iterations == 0
    assert np.array_equal(out.step, np.zeros(3))


def test_non_finite_operator_raises():
    with pytest.raises(NumericalError, match="non-finite"):
        cg_solve(lambda p: p * np.nan, np.ones(3))
    with pytest.raises(NumericalError):
        cg_solve(lambda p: p, np.array([1.0, np.inf]))


@pytest.mark.parametrize("tol,max_iters", [(0.0, 5), (1.0, 5), (0.1, 0)])
def test_argument_validation(tol, max_iters):
    with pytest.raises(ValueError):
        cg_solve(lambda p: p, np.ones(2), tol=tol, max_iters=max_iters)
