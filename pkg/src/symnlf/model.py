"""Biased symmetric non-negative latent factor model on sigmoid-mapped parameters.

Parameters live in a flat vector ``x`` of length ``node_count * d`` laid out
row-major, so ``x.reshape(node_count, d)[u, n]`` is the parameter of node
``u`` in column ``n``. Column 0 feeds the node bias, columns 1..d-1 feed the
latent factors; every output is ``sigmoid`` of its parameter and therefore
strictly positive.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .network import SymmetricSparseNetwork, WeightMap


@dataclass
class ModelConfig:
    d: int = 8
    lam: float = 0.05
    mu: float = 1.0
    cg_tolerance: float = 0.1
    cg_max_iters: int = 50
    outer_max_iters: int = 500
    plateau_delta: float = 1e-5
    plateau_window: int = 10
    init_range: float = 1.0
    seed: int = 0
    exact_regularization_curvature: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError("d must be an integer >= 2 (bias column plus factors)")
        if not self.lam >= 0:
            raise ValueError("lam must be >= 0")
        if not self.mu > 0:
            raise ValueError("mu must be > 0")
        if not 0 < self.cg_tolerance < 1:
            raise ValueError("cg_tolerance must lie in (0, 1)")
        if self.cg_max_iters < 1 or self.outer_max_iters < 1:
            raise ValueError("iteration limits must be >= 1")
        if self.plateau_window < 1:
            raise ValueError("plateau_window must be >= 1")
        if not self.init_range > 0:
            raise ValueError("init_range must be > 0")


def sigmoid_pair(t):
    """``(sigmoid(t), sigmoid'(t))`` computed from ``exp(-|t|)``.

    Never overflows, and the derivative keeps full relative precision in
    the tails (``s * (1 - s)`` would not).
    """
    t = np.asarray(t, dtype=float)
    e = np.exp(-np.abs(t))
    inv = 1.0 / (1.0 + e)
    s = np.where(t >= 0, inv, e * inv)
    return s, e * inv * inv


def sigmoid(t):
    """Logistic function, evaluated without overflow for any finite input."""
    s = sigmoid_pair(t)[0]
    return s if s.ndim else float(s)


def sigmoid_prime(t):
    sp = sigmoid_pair(t)[1]
    return sp if sp.ndim else float(sp)


def _as_matrix(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size % d:
        raise ValueError(f"parameter vector of length {x.size} is not a multiple of d={d}")
    return x.reshape(-1, d)


def _check_fits(x, d, net: SymmetricSparseNetwork) -> np.ndarray:
    X = _as_matrix(x, d)
    if X.shape[0] != net.node_count:
        raise ValueError(f"parameters cover {X.shape[0]} nodes, network has {net.node_count}")
    return X


def predict_edges(x, u, i, d: int) -> np.ndarray:
    """Predicted weights for node pairs ``(u[k], i[k])``, in internal scale."""
    F = sigmoid(_as_matrix(x, d))
    u = np.asarray(u, dtype=np.int64)
    i = np.asarray(i, dtype=np.int64)
    if u.size and (min(u.min(), i.min()) < 0 or max(u.max(), i.max()) >= F.shape[0]):
        raise IndexError("node index out of range")
    Fu, Fi = F[u], F[i]
    # (a + b) and elementwise products commute exactly, so the result is
    # bit-identical under swapping u and i
    return (Fu[:, 0] + Fi[:, 0]) + (Fu[:, 1:] * Fi[:, 1:]).sum(axis=1)


def predict(x, u: int, i: int, d: int) -> float:
    return float(predict_edges(x, [u], [i], d)[0])


def _edge_matrix(net: SymmetricSparseNetwork, values_per_edge) -> sp.csr_matrix:
    """Symmetric sparse matrix holding one value per undirected edge."""
    data = np.asarray(values_per_edge, dtype=float)[net.adj_edge]
    return sp.csr_matrix((data, net.partners, net.indptr),
                         shape=(net.node_count, net.node_count))


def neighbour_sum(net: SymmetricSparseNetwork, values_per_edge, F: np.ndarray) -> np.ndarray:
    """Row ``u`` holds sum over ``i`` in E(u) of ``value(u,i) * [1, F[i,1:]]``."""
    Ft = F.copy()
    Ft[:, 0] = 1.0
    return _edge_matrix(net, values_per_edge) @ Ft


def residuals(x, train: SymmetricSparseNetwork, d: int) -> np.ndarray:
    return train.w - predict_edges(x, train.u, train.i, d)


def objective(x, train: SymmetricSparseNetwork, lam: float, d: int) -> float:
    """Half the squared error over known edges plus the per-edge NLF penalty.

    Each undirected edge contributes once; its penalty is
    ``lam * (sum_n F[u,n]**2 + sum_n F[i,n]**2)``, all inside the factor 1/2.
    """
    X = _check_fits(x, d, train)
    e = residuals(x, train, d)
    value = 0.5 * float(e @ e)
    if lam:
        sq = (sigmoid(X) ** 2).sum(axis=1)
        value += 0.5 * lam * float(train.degrees @ sq)
    return value


def gradient(x, train: SymmetricSparseNetwork, lam: float, d: int) -> np.ndarray:
    X = _check_fits(x, d, train)
    F, Fp = sigmoid_pair(X)
    e = residuals(x, train, d)
    G = -Fp * neighbour_sum(train, e, F)
    if lam:
        G += lam * train.degrees[:, None] * F * Fp
    return G.ravel()


def init_params(node_count: int, d: int, init_range: float = 1.0, seed: int = 0) -> np.ndarray:
    if not init_range > 0:
        raise ValueError("init_range must be > 0")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-init_range, init_range, size=node_count * d)
    # uniform() samples [low, high); keep the open interval
    x[x == -init_range] = 0.0
    return x


@dataclass
class Model:
    params: np.ndarray
    config: ModelConfig
    node_count: int
    weight_map: WeightMap = field(default_factory=WeightMap)
    labels: tuple | None = None

    @property
    def d(self) -> int:
        return self.config.d

    def factors(self) -> np.ndarray:
        """NLF matrix, column 0 holding the biases; entries lie in (0, 1)."""
        return sigmoid(_as_matrix(self.params, self.d))

    def predict_internal(self, u, i) -> np.ndarray:
        return predict_edges(self.params, u, i, self.d)

    def predict(self, u, i) -> np.ndarray:
        """Predictions in the original weight scale."""
        return self.weight_map.inverse(self.predict_internal(u, i))

    def node_index(self, token: str) -> int:
        if self.labels is None:
            if not token.isdigit() or int(token) >= self.node_count:
                raise KeyError(token)
            return int(token)
        if not hasattr(self, "_label_index"):
            self._label_index = {lab: k for k, lab in enumerate(self.labels)}
        return self._label_index[token]

    def to_json(self) -> str:
        doc = {
            "format": "symnlf-model/1",
            "node_count": self.node_count,
            "d": self.d,
            "lambda": self.config.lam,
            "config": asdict(self.config),
            "weight_map": self.weight_map.to_dict(),
            "labels": list(self.labels) if self.labels is not None else None,
            "params": [float(v) for v in self.params],
        }
        return json.dumps(doc, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Model":
        doc = json.loads(text)
        if doc.get("format") != "symnlf-model/1":
            raise ValueError("not a symnlf model file")
        config = ModelConfig(**doc["config"])
        params = np.array(doc["params"], dtype=float)
        if params.size != doc["node_count"] * config.d or not np.all(np.isfinite(params)):
            raise ValueError("corrupt parameter block")
        labels = tuple(doc["labels"]) if doc.get("labels") is not None else None
        return cls(params, config, int(doc["node_count"]),
                   WeightMap.from_dict(doc["weight_map"]), labels)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())
