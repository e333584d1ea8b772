"""Trainable link injection: the matrix J, its transform and statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import DimensionError, Tensor

HIST_BINS = 50


class InjectionError(Exception):
    pass


class InjectionParam:
    """Unconstrained trainable N x N matrix; non-negativity comes from ReLU
    at use sites so entries can go negative and injections die to exact zero."""

    def __init__(self, n_nodes, init_mode="constant", init_value=0.01,
                 init_range=(0.0, 0.01), seed=0, symmetric=True):
        self.n_nodes = n_nodes
        self.init_mode = init_mode
        self.seed = seed
        self.symmetric = symmetric
        if init_mode == "constant":
            data = np.full((n_nodes, n_nodes), float(init_value))
        elif init_mode == "uniform":
            rng = np.random.default_rng(seed)
            lo, hi = init_range
            data = rng.uniform(lo, hi, size=(n_nodes, n_nodes))
        else:
            raise InjectionError(f"unknown init mode {init_mode!r}")
        self.j = Tensor(data, requires_grad=True)

    def effective(self):
        """ReLU(J) as a plain array, diagonal zeroed, symmetrized if enabled."""
        r = np.maximum(self.j.data, 0.0)
        if self.symmetric:
            r = 0.5 * (r + r.T)
        np.fill_diagonal(r, 0.0)
        return r


def inject(adjacency, param):
    """A' = clip01(A + ReLU(J)), recorded on the tape so grads reach J.

    The diagonal of the injection is masked out; for undirected graphs the
    effective injection is symmetrized (ReLU(J) + ReLU(J)^T) / 2.
    """
    if isinstance(adjacency, np.ndarray):
        adjacency = Tensor(adjacency)
    if adjacency.shape != param.j.shape:
        raise DimensionError(
            f"inject: adjacency {adjacency.shape} vs J {param.j.shape}"
        )
    eff = engine.relu(param.j)
    if param.symmetric:
        eff = engine.scale(engine.add(eff, engine.transpose(eff)), 0.5)
    off_diag = Tensor(1.0 - np.eye(param.n_nodes))
    eff = engine.hadamard(eff, off_diag)
    return engine.clip01(engine.add(adjacency, eff))


def injection_penalty(param, coeff):
    """coeff * ||J||_2; exactly zero (no tape node) when coeff == 0."""
    if coeff == 0.0:
        return Tensor(0.0)
    return engine.scale(engine.l2_norm(param.j), coeff)


def top_k_injections(param, k, exclude=None):
    """Top-k off-diagonal entries of ReLU(J), descending, ties broken by
    (i, j) lexicographic order. Returns (list of (i, j, score), truncated)."""
    n = param.n_nodes
    if k < 0 or k > n * n:
        raise InjectionError(f"k={k} outside [0, {n * n}]")
    scores = param.effective()
    ii, jj = np.nonzero(~np.eye(n, dtype=bool))
    if exclude:
        keep = np.array([(i, j) not in exclude for i, j in zip(ii, jj)])
        ii, jj = ii[keep], jj[keep]
    vals = scores[ii, jj]
    order = np.lexsort((jj, ii, -vals))
    truncated = k > len(order)
    order = order[:k]
    ranked = [(int(ii[t]), int(jj[t]), float(vals[t])) for t in order]
    return ranked, truncated


@dataclass
class InjectionSnapshot:
    epoch: int
    total: float
    nonzero_count: int
    histogram: list  # (bin_lo, bin_hi, count)


def snapshot(param, epoch):
    """Statistics over ReLU(J): sum, positive count, 50-bin histogram of
    positive values over (0, max]."""
    eff = param.effective()
    pos = eff[eff > 0.0]
    hist = []
    if pos.size:
        top = float(pos.max())
        counts, edges = np.histogram(pos, bins=HIST_BINS, range=(0.0, top))
        hist = [
            (float(edges[b]), float(edges[b + 1]), int(counts[b]))
            for b in range(HIST_BINS)
        ]
    return InjectionSnapshot(
        epoch=epoch,
        total=float(eff.sum()),
        nonzero_count=int(pos.size),
        histogram=hist,
    )


def snapshot_series_csv(snapshots):
    lines = ["epoch,total,nonzero_count"]
    for s in snapshots:
        lines.append("%d,%.17g,%d" % (s.epoch, s.total, s.nonzero_count))
    return "\n".join(lines) + "\n"


def histogram_csv(snap):
    lines = ["bin_lo,bin_hi,count"]
    for lo, hi, c in snap.histogram:
        lines.append("%.17g,%.17g,%d" % (lo, hi, c))
    return "\n".join(lines) + "\n"


def matrix_csv(param):
    """Positive entries of ReLU(J) as i,j,score rows, descending; zero
    entries are omitted entirely."""
    n = param.n_nodes
    ranked, _ = top_k_injections(param, n * n - n)
    lines = ["i,j,score"]
    for i, j, s in ranked:
        if s <= 0.0:
            break
        lines.append("%d,%d,%.17g" % (i, j, s))
    return "\n".join(lines) + "\n"
