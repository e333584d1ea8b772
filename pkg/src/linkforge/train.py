"""Training loops, loss assembly, early stopping, link splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import engine
from .engine import EngineError, Tape, Tensor
from .injection import snapshot as injection_snapshot
from .models import forward_link_pred, forward_node_clf
from .optim import Adamax


class ConfigError(Exception):
    pass


class TrainingDiverged(Exception):
    def __init__(self, epoch, message):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    task: str = "node_clf"            # node_clf | link_pred
    max_epochs: int = 10000
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lam: float = 1e-4                 # link-pred score penalty
    lam_w: float = 5e-4               # weight norm penalty coefficient
    lam_j: float = 5e-4               # injection norm penalty coefficient
    window: int = 100
    tolerance: float = 0.005
    earliest: int = 5000
    injection_enabled: bool = False
    no_edges_mode: bool = False
    seed: int = 0

    def validate(self):
        if self.task not in ("node_clf", "link_pred"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.window < 1:
            raise ConfigError("early-stop window must be >= 1")
        if self.earliest < 2 * self.window:
            raise ConfigError("earliest stop must be >= 2 * window")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be >= 0")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        return self


@dataclass
class TrainState:
    epoch: int = 0
    train_loss_history: list = field(default_factory=list)
    val_metric_history: list = field(default_factory=list)
    log_rows: list = field(default_factory=list)   # (epoch, loss, val, inj_total, inj_nnz)
    snapshots: list = field(default_factory=list)  # InjectionSnapshot per epoch
    best_metric: float = -np.inf
    best_epoch: int = -1
    best_weights: Optional[list] = None
    best_j: Optional[np.ndarray] = None
    stopped_early: bool = False


@dataclass
class LinkSplit:
    train_edges: list      # undirected (i, j) with i < j
    test_pos_edges: list
    test_neg_edges: list
    train_fraction: float


def early_stop_check(history, config):
    """Stop when the mean of the last window drops below the mean of the
    previous non-overlapping window by more than the tolerance, but never
    before the earliest-stop epoch."""
    n = len(history)
    if n < config.earliest or n < 2 * config.window:
        return False
    w = config.window
    last = float(np.mean(history[-w:]))
    prev = float(np.mean(history[-2 * w:-w]))
    return last < prev - config.tolerance


def make_link_split(graph, train_fraction, seed):
    """Uniform random edge split plus one sampled non-edge per test edge."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train fraction {train_fraction} outside (0, 1)")
    edges = graph.edge_list()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51]))
    order = rng.permutation(len(edges))
    n_train = int(round(train_fraction * len(edges)))
    train_edges = [edges[t] for t in sorted(order[:n_train])]
    test_pos = [edges[t] for t in sorted(order[n_train:])]

    n = graph.n_nodes
    edge_set = set(edges)
    negatives = []
    seen = set()
    attempts = 0
    limit = 200 * max(1, len(test_pos))
    while len(negatives) < len(test_pos):
        if attempts >= limit:
            raise ConfigError("graph too dense to sample enough negative pairs")
        attempts += 1
        i, j = int(rng.integers(n)), int(rng.integers(n))
        if i == j:
            continue
        pair = (min(i, j), max(i, j))
        if pair in edge_set or pair in seen:
            continue
        seen.add(pair)
        negatives.append(pair)
    return LinkSplit(train_edges, test_pos, negatives, train_fraction)


def adjacency_from_edges(n, edges):
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = 1.0
        a[j, i] = 1.0
    return a


def _record_epoch(state, epoch, loss, val_metric, injection):
    state.train_loss_history.append(loss)
    state.val_metric_history.append(val_metric)
    if injection is not None:
        snap = injection_snapshot(injection, epoch)
        state.snapshots.append(snap)
        inj_total, inj_nnz = snap.total, snap.nonzero_count
    else:
        inj_total, inj_nnz = 0.0, 0
    state.log_rows.append((epoch, loss, val_metric, inj_total, inj_nnz))


def _update_best(state, model, injection, metric, epoch):
    if metric > state.best_metric:
        state.best_metric = metric
        state.best_epoch = epoch
        state.best_weights = [np.array(p.data, copy=True) for p in model.parameters()]
        state.best_j = np.array(injection.j.data, copy=True) if injection else None


def restore_best(state, model, injection=None):
    if state.best_weights is None:
        return
    for p, w in zip(model.parameters(), state.best_weights):
        p.data = np.array(w, copy=True)
    if injection is not None and state.best_j is not None:
        injection.j.data = np.array(state.best_j, copy=True)


def _regularizers(model, injection, config):
    terms = []
    if config.lam_w > 0:
        for p in model.parameters():
            terms.append(engine.scale(engine.l2_norm(p), config.lam_w))
    if injection is not None and config.lam_j > 0:
        terms.append(engine.scale(engine.l2_norm(injection.j), config.lam_j))
    return terms


def _train_loop(config, model, injection, epoch_fn):
    """Shared driver: per-epoch forward/backward via epoch_fn, Adamax update
    of the model first then of J, early stopping on the validation history."""
    params = model.parameters()
    opt_model = Adamax(params, lr=config.lr, beta1=config.beta1,
                       beta2=config.beta2, eps=config.eps)
    opt_j = None
    if injection is not None:
        opt_j = Adamax([injection.j], lr=config.lr, beta1=config.beta1,
                       beta2=config.beta2, eps=config.eps)

    state = TrainState()
    for epoch in range(config.max_epochs):
        tape = Tape()
        for p in params:
            p.grad = None
            tape.watch(p)
        if injection is not None:
            injection.j.grad = None
            tape.watch(injection.j)
        try:
            loss, val_metric = epoch_fn(tape)
            engine.backward(loss, tape)
            opt_model.step()
            if opt_j is not None and injection.j.grad is not None:
                opt_j.step()
        except EngineError as exc:
            raise TrainingDiverged(epoch, str(exc)) from exc

        state.epoch = epoch + 1
        _record_epoch(state, epoch, loss.item(), val_metric, injection)
        _update_best(state, model, injection, val_metric, epoch)
        if early_stop_check(state.val_metric_history, config):
            state.stopped_early = True
            break
    restore_best(state, model, injection)
    return state


def train_node_clf(graph, masks, model, injection=None, config=None):
    """Algorithm: per epoch A' = clip(A + ReLU(J)), S = M(X, A'),
    L = CE(S, Y | train) + lam_w * sum ||p|| + lam_j * ||J||."""
    from .injection import inject

    config = (config or TrainConfig()).validate()
    if not masks.train.any():
        raise ConfigError("empty train mask")
    adjacency = np.zeros_like(graph.adjacency) if config.no_edges_mode else graph.adjacency
    features = graph.features
    labels = graph.labels

    def epoch_fn(tape):
        x = Tensor(features)
        a = Tensor(adjacency)
        a_prime = inject(a, injection) if injection is not None else a
        logits = forward_node_clf(model, x, a_prime)
        loss = engine.masked_softmax_cross_entropy(logits, labels, masks.train)
        for term in _regularizers(model, injection, config):
            loss = engine.add(loss, term)
        pred = logits.data.argmax(axis=1)
        val_metric = float((pred[masks.val] == labels[masks.val]).mean()) \
            if masks.val.any() else float("nan")
        return loss, val_metric

    return _train_loop(config, model, injection, epoch_fn)


def train_link_pred(graph, split, model, injection=None, config=None):
    """Reconstruction training: S = F(A_hat, X) with
    L = ||ReLU(A_train - S)||_F^2 + lam * ||S||_F^2 (+ norm penalties).
    Test edges never enter the training adjacency; validation metric is
    pos/neg pair accuracy at threshold 0.5 on the held-out split."""
    from .injection import inject
    from .metrics import link_pred_report

    config = (config or TrainConfig(task="link_pred")).validate()
    a_train = adjacency_from_edges(graph.n_nodes, split.train_edges)
    features = graph.features

    def epoch_fn(tape):
        x = Tensor(features)
        a = Tensor(a_train)
        a_hat = inject(a, injection) if injection is not None else a
        scores = forward_link_pred(model, x, a_hat)
        loss = engine.frobenius_sq(engine.relu(engine.sub(a, scores)))
        if config.lam > 0:
            loss = engine.add(loss, engine.scale(engine.frobenius_sq(scores), config.lam))
        for term in _regularizers(model, injection, config):
            loss = engine.add(loss, term)
        rep = link_pred_report(scores.data, split.test_pos_edges,
                               split.test_neg_edges, threshold=0.5)
        return loss, rep.accuracy

    return _train_loop(config, model, injection, epoch_fn)


def run_no_edges_experiment(graph, masks, model, injection, config=None):
    """No-edges ablation: the training adjacency is forced to zero so
    every useful connection must be discovered by J. Injected links are then
    judged against the true observed edges by the metrics module."""
    config = config or TrainConfig()
    config.no_edges_mode = True
    return train_node_clf(graph, masks, model, injection=injection, config=config)


def epochs_csv(state):
    lines = ["epoch,train_loss,val_metric,inj_total,inj_nonzero"]
    for epoch, loss, val, total, nnz in state.log_rows:
        lines.append("%d,%.17g,%.17g,%.17g,%d" % (epoch, loss, val, total, nnz))
    return "\n".join(lines) + "\n"
