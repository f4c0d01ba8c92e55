"""Outer optimization loops: damped Gauss-Newton with CG inner solves, and
plain gradient descent as a first-order reference."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cg import NumericalError, cg_solve
from .curvature import CurvatureOperator
from .model import Model, ModelConfig, gradient, init_params, objective, predict_edges
from .network import EdgeSplit, SymmetricSparseNetwork

logger = logging.getLogger(__name__)

VALIDATION_RISE = "validation_rise"
PLATEAU = "plateau"
MAX_ITERS = "max_iters"
GRADIENT_SMALL = "gradient_small"

MU_MIN = 1e-10
MU_MAX = 1e10
FIRST_ORDER_MAX_HALVINGS = 20


@dataclass
class StepControl:
    backtrack_factor: float = 0.5
    max_backtracks: int = 20
    mu_adapt: bool = True
    mu_raise: float = 1.5
    mu_drop: float = 1.5
    rho_low: float = 0.25
    rho_high: float = 0.75
    grad_tol: float = 1e-8

    def __post_init__(self):
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.max_backtracks < 0:
            raise ValueError("max_backtracks must be >= 0")
        if self.mu_raise <= 1 or self.mu_drop <= 1:
            raise ValueError("mu_raise and mu_drop must exceed 1")
        if not 0 <= self.rho_low <= self.rho_high:
            raise ValueError("need 0 <= rho_low <= rho_high")
        if self.grad_tol < 0:
            raise ValueError("grad_tol must be >= 0")


class StoppingMonitor:
    """Early-stopping rules applied once per outer iteration.

    Training stops when the validation error rises above its previous value,
    when the objective changes by less than ``plateau_delta`` for
    ``plateau_window`` consecutive iterations, or after ``max_iters``
    iterations, checked in that order.
    """

    def __init__(self, max_iters: int = 500, plateau_delta: float = 1e-5,
                 plateau_window: int = 10):
        self.max_iters = max_iters
        self.plateau_delta = plateau_delta
        self.plateau_window = plateau_window
        self.iteration = 0
        self.quiet_run = 0
        self.last_objective = None
        self.last_validation = None

    def start(self, objective_value: float, validation_rmse: float | None = None):
        self.iteration = 0
        self.quiet_run = 0
        self.last_objective = objective_value
        self.last_validation = validation_rmse

    def update(self, objective_value: float, validation_rmse: float | None = None) -> str | None:
        self.iteration += 1
        rose = (validation_rmse is not None and self.last_validation is not None
                and validation_rmse > self.last_validation)
        if self.last_objective is not None and abs(objective_value - self.last_objective) < self.plateau_delta:
            self.quiet_run += 1
        else:
            self.quiet_run = 0
        self.last_objective = objective_value
        if validation_rmse is not None:
            self.last_validation = validation_rmse
        if rose:
            return VALIDATION_RISE
        if self.quiet_run >= self.plateau_window:
            return PLATEAU
        if self.iteration >= self.max_iters:
            return MAX_ITERS
        return None


@dataclass
class IterationRecord:
    index: int
    objective: float
    validation_rmse: float | None
    mu: float | None
    cg_iterations: int
    cg_flag: str
    step_length: float
    accepted: bool


@dataclass
class TrainReport:
    optimizer: str
    initial_objective: float
    initial_validation_rmse: float | None
    records: list = field(default_factory=list)
    stop_reason: str = MAX_ITERS
    wall_time_ms: int = 0
    final_mu: float | None = None
    final_learning_rate: float | None = None
    best_iteration: int = 0

    @property
    def iterations_run(self) -> int:
        return len(self.records)

    @property
    def objective_trace(self) -> list[float]:
        return [r.objective for r in self.records]

    @property
    def validation_rmse_trace(self) -> list[float]:
        return [r.validation_rmse for r in self.records if r.validation_rmse is not None]

    def to_text(self, fmt: str = "jsonl", include_timing: bool = False) -> str:
        """One record per iteration, followed by a summary (``jsonl`` or ``csv``)."""
        rows = [{"index": 0, "objective": self.initial_objective,
                 "validation_rmse": self.initial_validation_rmse, "mu": None,
                 "cg_iterations": 0, "cg_flag": "", "step_length": 0.0, "accepted": True}]
        rows += [r.__dict__ for r in self.records]
        summary = {"optimizer": self.optimizer, "iterations_run": self.iterations_run,
                   "stop_reason": self.stop_reason, "best_iteration": self.best_iteration,
                   "final_mu": self.final_mu, "final_learning_rate": self.final_learning_rate}
        if include_timing:
            summary["wall_time_ms"] = self.wall_time_ms
        if fmt == "jsonl":
            lines = [json.dumps(r) for r in rows]
            lines.append(json.dumps({"summary": summary}))
            return "\n".join(lines) + "\n"
        if fmt == "csv":
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            for r in rows:
                writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                                 for k, v in r.items()})
            for k, v in summary.items():
                buf.write(f"# {k}={v}\n")
            return buf.getvalue()
        raise ValueError(f"unknown report format {fmt!r}")


def _validation_rmse(x, net: SymmetricSparseNetwork, d: int) -> float | None:
    if net.edge_count == 0:
        return None
    pred = net.weight_map.inverse(predict_edges(x, net.u, net.i, d))
    err = net.original_weights() - pred
    return math.sqrt(float(err @ err) / len(err))


def _prepare(split: EdgeSplit, config: ModelConfig, x0):
    train = split.train
    if train.edge_count == 0:
        raise ValueError("training edge set is empty")
    if split.validation.node_count != train.node_count:
        raise ValueError("validation network has a different node set")
    if x0 is None:
        x = init_params(train.node_count, config.d, config.init_range, config.seed)
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (train.node_count * config.d,):
            raise ValueError("initial parameters have the wrong length")
    return train, x


def _checked_objective(x, train, config, k):
    z = objective(x, train, config.lam, config.d)
    if not math.isfinite(z):
        raise NumericalError(f"non-finite objective at outer iteration {k}")
    return z


def _finish(x_best, config, train, report, t0):
    report.wall_time_ms = int(round((time.perf_counter() - t0) * 1000))
    model = Model(x_best, config, train.node_count, train.weight_map, train.labels)
    return model, report


def train_second_order(split: EdgeSplit, config: ModelConfig | None = None,
                       control: StepControl | None = None, x0=None):
    """Damped Gauss-Newton training; returns ``(Model, TrainReport)``.

    Each outer iteration solves ``(J^T J + R + mu I) s = -grad`` by CG, takes
    the largest step ``eta * s`` (eta halving from 1) that lowers the
    objective, and adapts ``mu`` from the ratio of actual to predicted
    reduction. If no trial step lowers the objective, ``mu`` is raised and
    the iteration is spent. The parameters with the lowest validation error
    are returned.
    """
    config = config or ModelConfig()
    control = control or StepControl()
    t0 = time.perf_counter()
    train, x = _prepare(split, config, x0)
    d, lam = config.d, config.lam
    z = _checked_objective(x, train, config, 0)
    val = _validation_rmse(x, split.validation, d)
    report = TrainReport("second-order", z, val)
    monitor = StoppingMonitor(config.outer_max_iters, config.plateau_delta, config.plateau_window)
    monitor.start(z, val)
    best_x, best_val = x.copy(), val
    mu = config.mu

    for k in range(1, config.outer_max_iters + 1):
        g = gradient(x, train, lam, d)
        if np.abs(g).max(initial=0.0) <= control.grad_tol:
            report.stop_reason = GRADIENT_SMALL
            break
        op = CurvatureOperator(x, train, d, lam, mu, config.exact_regularization_curvature)
        out = cg_solve(op, -g, config.cg_tolerance, config.cg_max_iters)

        eta = 1.0
        accepted = False
        for _ in range(control.max_backtracks + 1):
            x_try = x + eta * out.step
            z_try = _checked_objective(x_try, train, config, k)
            if z_try < z:
                accepted = True
                break
            eta *= control.backtrack_factor

        mu_used = mu
        if accepted:
            if control.mu_adapt:
                step = eta * out.step
                predicted = -(float(g @ step) + 0.5 * float(step @ op(step)))
                rho = (z - z_try) / predicted if predicted > 0 else 0.0
                if rho < control.rho_low:
                    mu = min(mu * control.mu_raise, MU_MAX)
                elif rho > control.rho_high:
                    mu = max(mu / control.mu_drop, MU_MIN)
            x, z = x_try, z_try
            val = _validation_rmse(x, split.validation, d)
        else:
            mu = min(mu * control.mu_raise, MU_MAX)

        report.records.append(IterationRecord(k, z, val, mu_used, out.iterations, out.flag,
                                              eta if accepted else 0.0, accepted))
        logger.debug("iter %d: Z=%.10g val=%s mu=%.3g cg=%d/%s eta=%g",
                     k, z, val, mu_used, out.iterations, out.flag, eta if accepted else 0.0)
        if val is not None and val < best_val:
            best_x, best_val = x.copy(), val
            report.best_iteration = k
        reason = monitor.update(z, val)
        if reason is not None:
            report.stop_reason = reason
            break

    report.final_mu = mu
    if best_val is None:
        best_x = x
        report.best_iteration = report.iterations_run
    return _finish(best_x, config, train, report, t0)


def train_first_order(split: EdgeSplit, config: ModelConfig | None = None,
                      learning_rate: float = 0.01, grad_tol: float = 1e-8, x0=None):
    """Gradient descent with rate halving whenever a step would raise the objective.

    Up to 20 halvings are tried per iteration; if every one overshoots the
    run ends with stop reason ``plateau``. Stopping and reporting follow
    ``train_second_order``.
    """
    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    config = config or ModelConfig()
    t0 = time.perf_counter()
    train, x = _prepare(split, config, x0)
    d, lam = config.d, config.lam
    z = _checked_objective(x, train, config, 0)
    val = _validation_rmse(x, split.validation, d)
    report = TrainReport("first-order", z, val)
    monitor = StoppingMonitor(config.outer_max_iters, config.plateau_delta, config.plateau_window)
    monitor.start(z, val)
    best_x, best_val = x.copy(), val
    lr = learning_rate

    for k in range(1, config.outer_max_iters + 1):
        g = gradient(x, train, lam, d)
        if np.abs(g).max(initial=0.0) <= grad_tol:
            report.stop_reason = GRADIENT_SMALL
            break
        halvings = 0
        while True:
            x_try = x - lr * g
            z_try = _checked_objective(x_try, train, config, k)
            if z_try <= z or halvings == FIRST_ORDER_MAX_HALVINGS:
                break
            lr *= 0.5
            halvings += 1
        if z_try > z:
            report.stop_reason = PLATEAU
            break
        x, z = x_try, z_try
        val = _validation_rmse(x, split.validation, d)
        report.records.append(IterationRecord(k, z, val, None, 0, "", lr, True))
        if val is not None and val < best_val:
            best_x, best_val = x.copy(), val
            report.best_iteration = k
        reason = monitor.update(z, val)
        if reason is not None:
            report.stop_reason = reason
            break

    report.final_learning_rate = lr
    if best_val is None:
        best_x = x
        report.best_iteration = report.iterations_run
    return _finish(best_x, config, train, report, t0)
