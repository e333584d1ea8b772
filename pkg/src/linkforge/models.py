"""Differentiable graph predictors: GCN, mean-aggregating SAGE, simple GNN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine, graphs
from .engine import DimensionError, Tensor

MODEL_KINDS = ("gcn", "sage_mean", "simple")
DEFAULT_HIDDEN = 16


class ModelError(Exception):
    pass


@dataclass
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    activation: str = "none"  # relu | none

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown layer kind {self.kind!r}")
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ModelError(f"non-positive layer dims ({self.in_dim}, {self.out_dim})")
        if self.activation not in ("relu", "none"):
            raise ModelError(f"unknown activation {self.activation!r}")


def glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Model:
    """A stack of layers of one kind with Glorot-initialized weights."""

    def __init__(self, kind, dims, seed=0):
        if kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {kind!r}")
        if len(dims) < 2:
            raise ModelError("need at least input and output dims")
        self.kind = kind
        self.dims = list(dims)
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers = []
        self.weights = []
        for li in range(len(dims) - 1):
            act = "relu" if li < len(dims) - 2 else "none"
            self.layers.append(LayerSpec(kind, dims[li], dims[li + 1], act))
            if kind == "sage_mean":
                w_self = Tensor(glorot(rng, dims[li], dims[li + 1]), requires_grad=True)
                w_neigh = Tensor(glorot(rng, dims[li], dims[li + 1]), requires_grad=True)
                self.weights.append((w_self, w_neigh))
            else:
                self.weights.append(
                    (Tensor(glorot(rng, dims[li], dims[li + 1]), requires_grad=True),)
                )

    def parameters(self):
        return [w for group in self.weights for w in group]

    @classmethod
    def default_classifier(cls, kind, n_features, n_classes, hidden=DEFAULT_HIDDEN, seed=0):
        return cls(kind, [n_features, hidden, n_classes], seed=seed)

    @classmethod
    def default_encoder(cls, kind, n_features, embed_dim=DEFAULT_HIDDEN, hidden=DEFAULT_HIDDEN, seed=0):
        return cls(kind, [n_features, hidden, embed_dim], seed=seed)


def _activate(h, activation):
    return engine.relu(h) if activation == "relu" else h


def gcn_layer_forward(a_norm, h, w, activation="none"):
    """act(a_norm @ h @ w) with a_norm the symmetric-normalized adjacency."""
    return _activate(engine.matmul(engine.matmul(a_norm, h), w), activation)


def sage_layer_forward(a_rownorm, h, w_self, w_neigh, activation="none"):
    """act(h @ w_self + (a_rownorm @ h) @ w_neigh): weighted-mean aggregation
    over the full soft neighborhood."""
    own = engine.matmul(h, w_self)
    agg = engine.matmul(engine.matmul(a_rownorm, h), w_neigh)
    return _activate(engine.add(own, agg), activation)


def simple_gnn_layer_forward(a_prime, h, w, activation="none"):
    """act((a_prime + I) @ h @ w): unnormalized message passing with an
    identity self-message."""
    eye = Tensor(np.eye(a_prime.rows))
    mixed = engine.matmul(engine.add(a_prime, eye), h)
    return _activate(engine.matmul(mixed, w), activation)


def _propagator(kind, a_injected):
    if kind == "gcn":
        return graphs.gcn_normalize(a_injected)
    if kind == "sage_mean":
        return graphs.row_normalize(a_injected)
    return a_injected  # simple: layer adds I itself


def forward(model, features, a_injected):
    """Stacked layer forward; returns the final N x out_dim tensor."""
    if isinstance(features, np.ndarray):
        features = Tensor(features)
    if isinstance(a_injected, np.ndarray):
        a_injected = Tensor(a_injected)
    if a_injected.rows != a_injected.cols:
        raise DimensionError(f"adjacency not square: {a_injected.shape}")
    prop = _propagator(model.kind, a_injected)
    h = features
    for spec, wgroup in zip(model.layers, model.weights):
        if model.kind == "gcn":
            h = gcn_layer_forward(prop, h, wgroup[0], spec.activation)
        elif model.kind == "sage_mean":
            h = sage_layer_forward(prop, h, wgroup[0], wgroup[1], spec.activation)
        else:
            h = simple_gnn_layer_forward(prop, h, wgroup[0], spec.activation)
    return h


def forward_node_clf(model, features, a_injected):
    """Logits N x C, un-softmaxed (the loss op applies softmax)."""
    return forward(model, features, a_injected)


def forward_link_pred(model, features, a_injected):
    """Score matrix S = sigmoid(Z @ Z^T) from final embeddings Z."""
    z = forward(model, features, a_injected)
    return engine.sigmoid(engine.matmul(z, engine.transpose(z)))
