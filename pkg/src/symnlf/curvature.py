"""Matrix-free Gauss-Newton products for the regularized objective.

The prediction map sends ``x`` to one value per known edge; its Jacobian
``J`` is never formed. ``J p`` is evaluated per edge (forward pass), then
``J^T q`` is scattered back onto node rows. Regularization adds a diagonal
term and damping adds ``mu * p``.
"""

from __future__ import annotations

import numpy as np

from .model import _check_fits, gradient, neighbour_sum, sigmoid_pair
from .network import SymmetricSparseNetwork

EXPLICIT_MATRIX_LIMIT = 200


class CurvatureOperator:
    """Products with the damped, regularized Gauss-Newton matrix at a fixed ``x``.

    Sigmoid values and derivatives are cached, so repeated products (one per
    CG iteration) cost two sparse passes each.
    """

    def __init__(self, x, train: SymmetricSparseNetwork, d: int, lam: float = 0.0,
                 mu: float = 0.0, exact_regularization: bool = False):
        if lam < 0:
            raise ValueError("lam must be >= 0")
        if mu < 0:
            raise ValueError("mu must be >= 0")
        X = _check_fits(x, d, train)
        self.train = train
        self.d = d
        self.lam = lam
        self.mu = mu
        self.F, self.Fp = sigmoid_pair(X)
        deg = train.degrees[:, None].astype(float)
        if exact_regularization:
            # second derivative of 0.5*lam*deg*phi^2: lam*deg*(phi'^2 + phi*phi'')
            Fpp = self.Fp * (1.0 - 2.0 * self.F)
            self.reg_diag = lam * deg * (self.Fp ** 2 + self.F * Fpp)
        else:
            self.reg_diag = lam * deg * self.Fp * self.F
        self.size = X.size

    def _as_direction(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.size,):
            raise ValueError(f"direction has shape {p.shape}, expected ({self.size},)")
        return p.reshape(-1, self.d)

    def jvp(self, p) -> np.ndarray:
        """Directional derivative of every edge prediction along ``p``."""
        P = self._as_direction(p)
        T = self.Fp * P
        u, i = self.train.u, self.train.i
        F = self.F
        return (T[u, 0] + T[i, 0]) + (T[u, 1:] * F[i, 1:] + F[u, 1:] * T[i, 1:]).sum(axis=1)

    def vjp(self, q) -> np.ndarray:
        """``J^T q`` for one value per known edge."""
        return (self.Fp * neighbour_sum(self.train, q, self.F)).ravel()

    def gn(self, p) -> np.ndarray:
        return self.vjp(self.jvp(p))

    def regularized(self, p) -> np.ndarray:
        out = self.gn(p)
        if self.lam:
            out += (self.reg_diag * self._as_direction(p)).ravel()
        return out

    def damped(self, p) -> np.ndarray:
        return self.regularized(p) + self.mu * np.asarray(p, dtype=float)

    __call__ = damped


def jacobian_vector_product(x, p, train: SymmetricSparseNetwork, d: int) -> np.ndarray:
    return CurvatureOperator(x, train, d).jvp(p)


def gn_vector_product(x, p, train: SymmetricSparseNetwork, d: int) -> np.ndarray:
    return CurvatureOperator(x, train, d).gn(p)


def regularized_gn_vector_product(x, p, train: SymmetricSparseNetwork, d: int,
                                  lam: float, exact_regularization: bool = False) -> np.ndarray:
    return CurvatureOperator(x, train, d, lam,
                             exact_regularization=exact_regularization).regularized(p)


def damped_product(x, p, train: SymmetricSparseNetwork, d: int, lam: float, mu: float,
                   exact_regularization: bool = False) -> np.ndarray:
    if not mu > 0:
        raise ValueError("mu must be > 0")
    return CurvatureOperator(x, train, d, lam, mu, exact_regularization).damped(p)


def explicit_gn_matrix(x, train: SymmetricSparseNetwork, d: int, lam: float, mu: float,
                       exact_regularization: bool = False) -> np.ndarray:
    """Dense damped operator assembled column by column. Tiny instances only."""
    n = np.asarray(x).size
    if n > EXPLICIT_MATRIX_LIMIT:
        raise ValueError(f"explicit matrix of side {n} exceeds limit {EXPLICIT_MATRIX_LIMIT}")
    op = CurvatureOperator(x, train, d, lam, mu, exact_regularization)
    M = np.empty((n, n))
    e = np.zeros(n)
    for k in range(n):
        e[k] = 1.0
        M[:, k] = op.damped(e)
        e[k] = 0.0
    asym = np.abs(M - M.T).max() if n else 0.0
    if asym > 1e-12 * max(1.0, np.abs(M).max()):
        raise ArithmeticError(f"assembled operator is not symmetric (max asymmetry {asym:.3e})")
    return M


def default_fd_step(x, p) -> float:
    return 1e-5 * (1.0 + np.abs(x).max(initial=0.0)) / (np.abs(p).max(initial=0.0) + 1e-12)


def central_difference_hvp(grad_fn, x, p, h: float) -> np.ndarray:
    """``(grad(x + h p) - grad(x - h p)) / 2h`` for any gradient callable."""
    if not h > 0:
        raise ValueError("h must be > 0")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    return (np.asarray(grad_fn(x + h * p)) - np.asarray(grad_fn(x - h * p))) / (2 * h)


def hvp_finite_difference(x, p, train: SymmetricSparseNetwork, d: int, lam: float,
                          h: float | None = None) -> np.ndarray:
    """Exact-Hessian product by central differences of the analytic gradient."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if not np.any(p):
        return np.zeros_like(x)
    if h is None:
        h = default_fd_step(x, p)
    return central_difference_hvp(lambda z: gradient(z, train, lam, d), x, p, h)
