"""Graph container, adjacency algebra and non-differentiable analyses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import DimensionError, Tensor


class GraphError(Exception):
    pass


@dataclass
class Graph:
    n_nodes: int
    features: np.ndarray      # N x D
    adjacency: np.ndarray     # N x N binary symmetric, zero diagonal
    labels: np.ndarray        # N ints in [0, C)
    n_classes: int

    def validate(self):
        n = self.n_nodes
        if self.features.shape[0] != n:
            raise GraphError(f"features rows {self.features.shape[0]} != {n} nodes")
        if self.adjacency.shape != (n, n):
            raise GraphError(f"adjacency shape {self.adjacency.shape} != ({n}, {n})")
        if self.labels.shape != (n,):
            raise GraphError(f"labels shape {self.labels.shape} != ({n},)")
        a = self.adjacency
        if not np.array_equal(a, a.T):
            raise GraphError("adjacency not symmetric")
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency has self-loops")
        if not np.isin(a, (0.0, 1.0)).all():
            raise GraphError("adjacency entries must be 0/1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise GraphError(f"labels outside [0, {self.n_classes})")
        return self

    @property
    def n_features(self):
        return self.features.shape[1]

    def edge_list(self):
        """Undirected edges as sorted (i, j) pairs with i < j."""
        i, j = np.nonzero(np.triu(self.adjacency, k=1))
        return list(zip(i.tolist(), j.tolist()))


@dataclass
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def validate(self, n):
        for name in ("train", "val", "test"):
            m = getattr(self, name)
            if m.shape != (n,) or m.dtype != bool:
                raise GraphError(f"{name} mask must be a bool vector of length {n}")
        if (self.train & self.val).any() or (self.train & self.test).any() \
                or (self.val & self.test).any():
            raise GraphError("split masks overlap")
        return self


@dataclass
class DegreeStats:
    min: int
    max: int
    avg: float


def _as_array(a):
    return a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)


def gcn_normalize(adjacency):
    """Symmetric normalization D^{-1/2} (A + I) D^{-1/2} with self-loops.

    Differentiable when given a tape-bound Tensor; degrees are recomputed
    from the (possibly injected) adjacency each call.
    """
    if isinstance(adjacency, Tensor):
        if adjacency.rows != adjacency.cols:
            raise DimensionError(f"gcn_normalize: non-square {adjacency.shape}")
        eye = Tensor(np.eye(adjacency.rows))
        a_hat = engine.add(adjacency, eye)
        inv_sqrt_deg = engine.rsqrt(engine.row_sums(a_hat))
        return engine.scale_cols(engine.scale_rows(a_hat, inv_sqrt_deg), inv_sqrt_deg)
    a = _as_array(adjacency)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"gcn_normalize: non-square {a.shape}")
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d[:, None] * d[None, :]


def row_normalize(adjacency):
    """Divide each row by its sum; all-zero rows stay zero."""
    if isinstance(adjacency, Tensor):
        inv = engine.reciprocal_guard(engine.row_sums(adjacency))
        return engine.scale_rows(adjacency, inv)
    a = _as_array(adjacency)
    s = a.sum(axis=1)
    inv = np.where(s > 0, 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return a * inv[:, None]


def connected_components(adjacency, threshold=0.0):
    """Component id per node over edges with weight > threshold.

    Ids are deterministic: each component is labeled by its smallest node index.
    """
    a = _as_array(adjacency)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"connected_components: non-square {a.shape}")
    n = a.shape[0]
    comp = np.full(n, -1, dtype=np.int64)
    adj_bool = (a > threshold) | (a.T > threshold)
    for start in range(n):
        if comp[start] != -1:
            continue
        stack = [start]
        comp[start] = start
        while stack:
            u = stack.pop()
            for v in np.nonzero(adj_bool[u])[0]:
                if comp[v] == -1:
                    comp[v] = start
                    stack.append(v)
    return comp


def is_neighbor(adjacency, i, j):
    a = _as_array(adjacency)
    n = a.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node pair ({i}, {j}) out of range for {n} nodes")
    return a[i, j] > 0


def shortest_path_exists(adjacency, i, j, components=None):
    a = _as_array(adjacency)
    n = a.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node pair ({i}, {j}) out of range for {n} nodes")
    if components is None:
        components = connected_components(a)
    return components[i] == components[j]


def degree_stats(adjacency):
    a = _as_array(adjacency)
    deg = a.sum(axis=1)
    if len(deg) == 0 or deg.max() == 0:
        return DegreeStats(0, 0, 0.0)
    return DegreeStats(int(deg.min()), int(deg.max()), float(deg.mean()))


def symmetrize(adjacency):
    a = _as_array(adjacency)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"symmetrize: non-square {a.shape}")
    return np.maximum(a, a.T)


def strip_self_loops(adjacency):
    a = np.array(_as_array(adjacency), copy=True)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"strip_self_loops: non-square {a.shape}")
    np.fill_diagonal(a, 0.0)
    return a
