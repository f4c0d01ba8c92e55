"""Sparse symmetric weighted networks: ingestion, weight scaling, splitting."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np


class NetworkFormatError(ValueError):
    """Raised for malformed or inconsistent edge-list input."""


@dataclass(frozen=True)
class WeightMap:
    """Affine map ``internal = scale * original + offset``."""

    scale: float = 1.0
    offset: float = 0.0

    def forward(self, w):
        return self.scale * np.asarray(w, dtype=float) + self.offset

    def inverse(self, y):
        return (np.asarray(y, dtype=float) - self.offset) / self.scale

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.offset == 0.0

    def to_dict(self) -> dict:
        return {"scale": self.scale, "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "WeightMap":
        return cls(float(d["scale"]), float(d["offset"]))


@dataclass(frozen=True, eq=False)
class SymmetricSparseNetwork:
    """Undirected weighted network with known edges stored once (``u < i``).

    ``u``, ``i`` and ``w`` are parallel arrays sorted by ``(u, i)``. The
    symmetric adjacency is kept in CSR form (``indptr``, ``partners``,
    ``adj_weights``), partners ascending within each row; ``adj_edge`` maps
    each directed entry back to its undirected edge index.
    """

    node_count: int
    u: np.ndarray
    i: np.ndarray
    w: np.ndarray
    weight_map: WeightMap = field(default_factory=WeightMap)
    labels: tuple | None = None
    indptr: np.ndarray = field(init=False, repr=False)
    partners: np.ndarray = field(init=False, repr=False)
    adj_weights: np.ndarray = field(init=False, repr=False)
    adj_edge: np.ndarray = field(init=False, repr=False)
    adj_rows: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.int64)
        i = np.asarray(self.i, dtype=np.int64)
        w = np.asarray(self.w, dtype=float)
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        if not (u.shape == i.shape == w.shape) or u.ndim != 1:
            raise ValueError("edge arrays must be 1-d and of equal length")
        if len(u):
            if np.any(u >= i):
                raise ValueError("edges must be canonical (u < i)")
            if u.min() < 0 or i.max() >= self.node_count:
                raise ValueError("edge references a node outside [0, node_count)")
            if not np.all(np.isfinite(w)):
                raise ValueError("edge weights must be finite")
        order = np.lexsort((i, u))
        u, i, w = u[order], i[order], w[order]
        if len(u) > 1:
            same = (u[1:] == u[:-1]) & (i[1:] == i[:-1])
            if np.any(same):
                raise ValueError("duplicate undirected edge")

        m = len(u)
        rows = np.concatenate([u, i])
        cols = np.concatenate([i, u])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        adj_order = np.lexsort((cols, rows))
        rows, cols, eid = rows[adj_order], cols[adj_order], eid[adj_order]
        indptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=self.node_count), out=indptr[1:])

        for name, value in (("u", u), ("i", i), ("w", w), ("indptr", indptr),
                            ("partners", cols), ("adj_weights", w[eid]),
                            ("adj_edge", eid), ("adj_rows", rows)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def edge_count(self) -> int:
        return len(self.u)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def adjacency(self, node: int) -> list[tuple[int, float]]:
        """Neighbours of ``node`` as ``(partner, weight)``, partner ascending."""
        if not 0 <= node < self.node_count:
            raise IndexError(f"node {node} out of range [0, {self.node_count})")
        lo, hi = self.indptr[node], self.indptr[node + 1]
        return [(int(p), float(wt)) for p, wt in
                zip(self.partners[lo:hi], self.adj_weights[lo:hi])]

    def original_weights(self) -> np.ndarray:
        return self.weight_map.inverse(self.w)

    def subset(self, edge_index) -> "SymmetricSparseNetwork":
        """Network on the same node set keeping only the given edges."""
        idx = np.sort(np.asarray(edge_index, dtype=np.int64))
        return SymmetricSparseNetwork(self.node_count, self.u[idx], self.i[idx],
                                      self.w[idx], self.weight_map, self.labels)

    def node_label(self, node: int) -> str:
        return str(node) if self.labels is None else self.labels[node]

    def to_edge_list(self, original_scale: bool = True) -> str:
        w = self.original_weights() if original_scale else self.w
        buf = io.StringIO()
        for a, b, wt in zip(self.u, self.i, w):
            buf.write(f"{self.node_label(a)} {self.node_label(b)} {float(wt)!r}\n")
        return buf.getvalue()


def _iter_lines(source) -> Iterable[str]:
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    if isinstance(source, str):
        return source.splitlines()
    return (ln.decode("utf-8") if isinstance(ln, bytes) else ln for ln in source)


def load_edge_list(source, self_loops: str = "reject", node_count: int | None = None,
                   node_index: Callable[[str], int] | None = None) -> SymmetricSparseNetwork:
    """Parse ``u i w`` triples into a network.

    ``source`` may be text, bytes, or an iterable of lines (an open file).
    Node tokens that are all non-negative integers are used as indices
    directly; otherwise tokens are mapped to dense indices in order of first
    appearance and kept as labels. ``node_index`` (with ``node_count``)
    overrides that mapping, e.g. to resolve tokens against a trained model.
    ``self_loops`` is ``"reject"`` or ``"drop"``.
    """
    if self_loops not in ("reject", "drop"):
        raise ValueError("self_loops must be 'reject' or 'drop'")
    triples = []
    for lineno, raw in enumerate(_iter_lines(source), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise NetworkFormatError(f"line {lineno}: expected 'u i w', got {line!r}")
        try:
            weight = float(parts[2])
        except ValueError:
            raise NetworkFormatError(f"line {lineno}: bad weight {parts[2]!r}") from None
        if not math.isfinite(weight):
            raise NetworkFormatError(f"line {lineno}: non-finite weight {parts[2]!r}")
        triples.append((lineno, parts[0], parts[1], weight))

    tokens = [t for _, a, b, _ in triples for t in (a, b)]
    labels = None
    if node_index is not None:
        if node_count is None:
            raise ValueError("node_index requires node_count")
        index = {}
        for lineno, a, b, _ in triples:
            for t in (a, b):
                try:
                    index[t] = node_index(t)
                except (KeyError, IndexError):
                    raise NetworkFormatError(f"line {lineno}: unknown node {t!r}") from None
        n = node_count
        node_count = None
    elif all(t.isdigit() for t in tokens):
        index = {t: int(t) for t in tokens}
        n = max(index.values(), default=-1) + 1
    else:
        index = {}
        for t in tokens:
            index.setdefault(t, len(index))
        labels = tuple(index)
        n = len(index)
    if node_count is not None:
        if node_count < n:
            raise NetworkFormatError(f"node_count {node_count} smaller than {n} referenced nodes")
        if labels is not None:
            raise NetworkFormatError("node_count only applies to integer node ids")
        n = node_count
    if n == 0:
        raise NetworkFormatError("edge list contains no edges")

    seen: dict[tuple[int, int], tuple[float, int]] = {}
    for lineno, a, b, weight in triples:
        ua, ub = index[a], index[b]
        if ua == ub:
            if self_loops == "reject":
                raise NetworkFormatError(f"line {lineno}: self-loop on node {a}")
            continue
        key = (ua, ub) if ua < ub else (ub, ua)
        prev = seen.get(key)
        if prev is None:
            seen[key] = (weight, lineno)
        elif prev[0] != weight:
            raise NetworkFormatError(
                f"line {lineno}: conflicting duplicate of edge {a}-{b} "
                f"(weight {weight!r} vs {prev[0]!r} on line {prev[1]})")

    keys = sorted(seen)
    u = np.array([k[0] for k in keys], dtype=np.int64)
    i = np.array([k[1] for k in keys], dtype=np.int64)
    w = np.array([seen[k][0] for k in keys], dtype=float)
    return SymmetricSparseNetwork(n, u, i, w, labels=labels)


def scale_weights(net: SymmetricSparseNetwork, lo: float = 0.0,
                  hi: float = 1.0) -> SymmetricSparseNetwork:
    """Map observed weights linearly onto ``[lo, hi]``.

    The composed affine map (relative to the network's original weights) is
    stored in ``weight_map``. Constant weights map to the midpoint.
    """
    if not lo < hi:
        raise ValueError("scale_weights requires lo < hi")
    if net.edge_count == 0:
        raise ValueError("cannot scale an empty network")
    orig = net.original_weights()
    wmin, wmax = float(orig.min()), float(orig.max())
    mid = (lo + hi) / 2
    if wmin == wmax:
        # a pure rescale keeps tiny weights recoverable; translate only if it cannot
        scale = mid / wmin if wmin != 0 else 0.0
        wm = WeightMap(scale, 0.0) if scale != 0 and math.isfinite(scale) else WeightMap(1.0, mid - wmin)
    else:
        scale = (hi - lo) / (wmax - wmin)
        wm = WeightMap(scale, lo - scale * wmin)
    w = wm.forward(orig)
    # pin the endpoints exactly
    if wmin == wmax:
        w[:] = mid
    else:
        w[orig == wmin] = lo
        w[orig == wmax] = hi
    return SymmetricSparseNetwork(net.node_count, net.u, net.i, w, wm, net.labels)


@dataclass(frozen=True)
class EdgeSplit:
    train: SymmetricSparseNetwork
    validation: SymmetricSparseNetwork
    test: SymmetricSparseNetwork


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def split_edges(net: SymmetricSparseNetwork, train_ratio: float,
                validation_ratio_of_train: float = 0.0, seed: int = 0) -> EdgeSplit:
    """Shuffle undirected edges and cut them into train/validation/test.

    ``round(train_ratio * |edges|)`` edges (half rounded up) form the known
    set; of those, ``round(validation_ratio_of_train * |known|)`` are held
    out for validation (at least one when the ratio is positive).
    """
    if not 0.0 < train_ratio < 1.0:
        raise ValueError("train_ratio must lie in (0, 1)")
    if not 0.0 <= validation_ratio_of_train < 1.0:
        raise ValueError("validation_ratio_of_train must lie in [0, 1)")
    m = net.edge_count
    if m < 3:
        raise ValueError(f"need at least 3 edges to split, got {m}")
    n_known = _round_half_up(train_ratio * m)
    n_val = _round_half_up(validation_ratio_of_train * n_known)
    if validation_ratio_of_train > 0 and n_val == 0:
        n_val = 1
    if n_known >= m or n_known - n_val < 1:
        raise ValueError(
            f"too few edges ({m}) for train_ratio={train_ratio}, "
            f"validation_ratio_of_train={validation_ratio_of_train}")
    perm = np.random.default_rng(seed).permutation(m)
    known, test = perm[:n_known], perm[n_known:]
    val, train = known[:n_val], known[n_val:]
    return EdgeSplit(net.subset(train), net.subset(val), net.subset(test))


def write_split(split: EdgeSplit, prefix: str) -> list[str]:
    paths = []
    for name in ("train", "validation", "test"):
        path = f"{prefix}.{name}.txt"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(getattr(split, name).to_edge_list())
        paths.append(path)
    return paths
