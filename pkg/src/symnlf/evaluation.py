"""Missing-weight prediction evaluation and synthetic planted networks."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import Model, ModelConfig, init_params, predict_edges
from .network import SymmetricSparseNetwork, split_edges
from .trainer import StepControl, train_first_order, train_second_order


def rmse(model: Model, test: SymmetricSparseNetwork) -> float:
    """Root mean squared error over the test edges, in the original weight scale."""
    if test.edge_count == 0:
        raise ValueError("test edge set is empty")
    err = test.original_weights() - model.predict(test.u, test.i)
    return math.sqrt(float(err @ err) / len(err))


@dataclass
class DataCaseSpec:
    name: str = "case"
    train_fraction: float = 0.2
    repeats: int = 10
    validation_fraction_of_train: float = 0.1

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")
        if not 0 <= self.validation_fraction_of_train < 1:
            raise ValueError("validation_fraction_of_train must lie in [0, 1)")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class RepeatResult:
    rmse: float
    time_ms: int
    stop_reason: str
    iterations: int


@dataclass
class CaseResult:
    optimizer: str
    per_repeat: list

    @property
    def rmse_mean(self) -> float:
        return statistics.fmean(r.rmse for r in self.per_repeat)

    @property
    def rmse_std(self) -> float:
        if len(self.per_repeat) < 2:
            return 0.0
        return statistics.stdev(r.rmse for r in self.per_repeat)

    @property
    def time_ms_mean(self) -> float:
        return statistics.fmean(r.time_ms for r in self.per_repeat)


@dataclass
class CaseReport:
    spec: DataCaseSpec
    results: dict = field(default_factory=dict)

    @property
    def second_order(self) -> CaseResult:
        return self.results["second-order"]

    def to_csv(self, include_timing: bool = False) -> str:
        cols = ["optimizer", "repeat", "rmse", "rmse_std", "stop_reason", "iterations"]
        if include_timing:
            cols.insert(4, "time_ms")
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(cols)
        for name, res in self.results.items():
            for r, rep in enumerate(res.per_repeat):
                row = [name, r, repr(rep.rmse), "", rep.stop_reason, rep.iterations]
                if include_timing:
                    row.insert(4, rep.time_ms)
                writer.writerow(row)
            row = [name, "mean", repr(res.rmse_mean), repr(res.rmse_std), "", ""]
            if include_timing:
                row.insert(4, repr(res.time_ms_mean))
            writer.writerow(row)
        return buf.getvalue()

    def summary(self, include_timing: bool = False) -> str:
        doc = {"case": self.spec.name, "train_fraction": self.spec.train_fraction,
               "validation_fraction_of_train": self.spec.validation_fraction_of_train,
               "repeats": self.spec.repeats, "optimizers": {}}
        for name, res in self.results.items():
            entry = {"rmse_mean": res.rmse_mean, "rmse_std": res.rmse_std,
                     "stop_reasons": [r.stop_reason for r in res.per_repeat]}
            if include_timing:
                entry["time_ms_mean"] = res.time_ms_mean
            doc["optimizers"][name] = entry
        return json.dumps(doc, indent=2) + "\n"


def repeat_init_seed(base_seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence([base_seed, repeat, 1]).generate_state(1)[0])


def _run_repeat(net, spec, config, control, base_seed, r, compare, learning_rate):
    split = split_edges(net, spec.train_fraction, spec.validation_fraction_of_train,
                        seed=base_seed + r)
    x0 = init_params(net.node_count, config.d, config.init_range,
                     repeat_init_seed(base_seed, r))
    out = {}
    runs = [("second-order", lambda: train_second_order(split, config, control, x0=x0))]
    if compare:
        runs.append(("first-order",
                     lambda: train_first_order(split, config, learning_rate, x0=x0)))
    for name, run in runs:
        model, report = run()
        out[name] = RepeatResult(rmse(model, split.test), report.wall_time_ms,
                                 report.stop_reason, report.iterations_run)
    return out


def run_data_case(net: SymmetricSparseNetwork, spec: DataCaseSpec,
                  config: ModelConfig | None = None, base_seed: int = 0,
                  control: StepControl | None = None, compare: bool = False,
                  learning_rate: float = 0.01, parallel: int = 1) -> CaseReport:
    """Repeated split/train/test runs; repeat ``r`` splits with ``base_seed + r``.

    Both optimizers of a repeat start from the same initial parameters.
    """
    config = config or ModelConfig()
    control = control or StepControl()
    args = [(net, spec, config, control, base_seed, r, compare, learning_rate)
            for r in range(spec.repeats)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            outs = list(pool.map(_run_repeat, *zip(*args)))
    else:
        outs = [_run_repeat(*a) for a in args]
    report = CaseReport(spec)
    for name in outs[0]:
        report.results[name] = CaseResult(name, [o[name] for o in outs])
    return report


def _pair_from_index(k: np.ndarray, n: int):
    """Decode the k-th unordered pair (u < i) of n nodes in row-major order."""
    # row u starts at offset u*n - u*(u+1)/2
    u = (2 * n - 1 - np.sqrt((2 * n - 1) ** 2 - 8 * k.astype(float))) // 2
    u = u.astype(np.int64)
    start = u * n - u * (u + 1) // 2
    # guard against rounding at row boundaries
    over = k >= start + (n - 1 - u)
    u[over] += 1
    under = k < start
    u[under] -= 1
    start = u * n - u * (u + 1) // 2
    i = k - start + u + 1
    return u, i


@dataclass
class SyntheticNetwork:
    network: SymmetricSparseNetwork
    planted: np.ndarray
    d_true: int
    metadata: dict


def generate_synthetic(node_count: int, d_true: int = 4, known_density: float = 0.2,
                       noise_std: float = 0.0, seed: int = 0) -> SyntheticNetwork:
    """Network whose weights come from planted parameters (uniform on (-1, 1)).

    ``round(known_density * n(n-1)/2)`` distinct pairs are sampled; each gets
    the model prediction at the planted point plus Gaussian noise.
    """
    if not 0 < known_density <= 1:
        raise ValueError("known_density must lie in (0, 1]")
    if d_true < 2:
        raise ValueError("d_true must be >= 2")
    if node_count < 2:
        raise ValueError("need at least two nodes")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    total = node_count * (node_count - 1) // 2
    m = int(math.floor(known_density * total + 0.5))
    if m == 0:
        raise ValueError("density yields zero edges")
    rng = np.random.default_rng(seed)
    planted = rng.uniform(-1.0, 1.0, size=node_count * d_true)
    picks = np.sort(rng.choice(total, size=m, replace=False))
    u, i = _pair_from_index(picks, node_count)
    w = predict_edges(planted, u, i, d_true)
    if noise_std > 0:
        w = w + rng.normal(0.0, noise_std, size=m)
    net = SymmetricSparseNetwork(node_count, u, i, w)
    meta = {"nodes": node_count, "d_true": d_true, "density": known_density,
            "noise_std": noise_std, "seed": seed, "edges": m}
    return SyntheticNetwork(net, planted, d_true, meta)


def planted_model(synth: SyntheticNetwork) -> Model:
    cfg = ModelConfig(d=synth.d_true)
    return Model(synth.planted.copy(), cfg, synth.network.node_count)
