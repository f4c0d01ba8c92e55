"""Matrix-free conjugate gradient for symmetric positive definite operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
STAGNATED = "stagnated"

RESIDUAL_REFRESH = 25


class NumericalError(ArithmeticError):
    """A non-finite value appeared during an iterative computation."""


@dataclass
class CgOutcome:
    step: np.ndarray
    residual_norm: float
    initial_residual_norm: float
    iterations: int
    flag: str


def cg_solve(apply: Callable[[np.ndarray], np.ndarray], b, tol: float = 0.1,
             max_iters: int = 50, callback: Callable[[int, np.ndarray], None] | None = None
             ) -> CgOutcome:
    """Approximately solve ``apply(s) = b`` starting from ``s = 0``.

    Stops when ``||r|| <= tol * ||b||``, after ``max_iters`` iterations, or
    when the curvature ``p^T A p`` falls to rounding level. The recurred
    residual is replaced by ``b - apply(s)`` every 25 iterations.
    ``callback(k, s)`` is invoked after every iteration.
    """
    if not 0 < tol < 1:
        raise ValueError("tol must lie in (0, 1)")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise NumericalError("right-hand side contains non-finite values")

    s = np.zeros_like(b)
    r = b.copy()
    b_norm = float(np.linalg.norm(b))
    rr = float(r @ r)
    target = tol * b_norm
    if b_norm == 0.0:
        return CgOutcome(s, 0.0, 0.0, 0, CONVERGED)

    p = r.copy()
    eps = np.finfo(float).eps
    k = 0
    flag = MAX_ITERS
    while k < max_iters:
        Ap = np.asarray(apply(p), dtype=float)
        if not np.all(np.isfinite(Ap)):
            raise NumericalError(f"operator returned non-finite values at CG iteration {k}")
        pAp = float(p @ Ap)
        if pAp <= eps * float(p @ p):
            flag = STAGNATED
            break
        alpha = rr / pAp
        s += alpha * p
        k += 1
        if k % RESIDUAL_REFRESH == 0:
            r = b - np.asarray(apply(s), dtype=float)
        else:
            r -= alpha * Ap
        rr_new = float(r @ r)
        if callback is not None:
            callback(k, s)
        if np.sqrt(rr_new) <= target:
            rr = rr_new
            flag = CONVERGED
            break
        p = r + (rr_new / rr) * p
        rr = rr_new

    res = float(np.sqrt(rr))
    logger.debug("cg: %s after %d iterations, |r|/|b| = %.3e", flag, k, res / b_norm)
    return CgOutcome(s, res, b_norm, k, flag)
