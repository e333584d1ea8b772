"""Run orchestration: configs, run directories, multi-seed aggregation.

Run layout: <out>/<name>/<seed>/ with manifest, epochs.csv, ckpt,
report.txt plus injection artifacts; aggregate.csv one level up.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

import numpy as np

from . import checkpoint, injection as inj, metrics
from .data import (DataError, SbmSpec, atomic_write, dataset_hash,
                   generate_sbm, load_dataset, save_dataset)
from .graphs import connected_components, degree_stats
from .injection import InjectionParam
from .models import Model
from .train import (ConfigError, TrainConfig, adjacency_from_edges,
                    epochs_csv, make_link_split, run_no_edges_experiment,
                    train_link_pred, train_node_clf)

MODEL_NAMES = {"gcn": "gcn", "sage": "sage_mean", "gnn": "simple"}


@dataclass
class RunConfig:
    dataset: str = ""
    out: str = "runs"
    name: str = "run"
    model: str = "gcn"            # gcn | sage | gnn
    hidden: int = 16
    seed: int = 0
    seeds: int = 1
    inject: bool = False
    no_edges: bool = False
    top_k: int = 0                # 0 -> twice the undirected edge count
    train_fraction: float = 0.8
    epochs: int = 10000
    lr: float = 0.002
    lam: float = 1e-4
    lam_w: float = 5e-4
    lam_j: float = 5e-4
    window: int = 100
    tolerance: float = 0.005
    earliest: int = 5000
    inj_init_mode: str = "constant"
    inj_init_value: float = 0.01
    inj_symmetric: bool = True

    def validate(self):
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r} (gcn|sage|gnn)")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        return self

    def train_config(self, task, seed):
        return TrainConfig(
            task=task, max_epochs=self.epochs, lr=self.lr, lam=self.lam,
            lam_w=self.lam_w, lam_j=self.lam_j, window=self.window,
            tolerance=self.tolerance, earliest=self.earliest,
            injection_enabled=self.inject, no_edges_mode=self.no_edges,
            seed=seed,
        ).validate()


_BOOL_KEYS = {"inject", "no_edges", "inj_symmetric"}


def parse_config(text, base=None):
    """Flat key=value config; unknown keys are rejected."""
    cfg = base or RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or key not in known:
            raise ConfigError(f"config line {ln}: unknown key {key!r}")
        set_config_key(cfg, key, val)
    return cfg.validate()


def set_config_key(cfg, key, val):
    current = getattr(cfg, key)
    if key in _BOOL_KEYS:
        if val.lower() not in ("true", "false", "1", "0"):
            raise ConfigError(f"bad boolean for {key}: {val!r}")
        setattr(cfg, key, val.lower() in ("true", "1"))
    elif isinstance(current, bool):
        setattr(cfg, key, val.lower() in ("true", "1"))
    elif isinstance(current, int):
        setattr(cfg, key, int(val))
    elif isinstance(current, float):
        setattr(cfg, key, float(val))
    else:
        setattr(cfg, key, val)


def config_echo(cfg):
    return "".join(f"{f.name}={getattr(cfg, f.name)}\n" for f in fields(RunConfig))


def _directed_edge_set(edges):
    out = set()
    for i, j in edges:
        out.add((i, j))
        out.add((j, i))
    return out


def _make_parts(cfg, bundle, seed):
    kind = MODEL_NAMES[cfg.model]
    g = bundle.graph
    model = Model(kind, [g.n_features, cfg.hidden, g.n_classes], seed=seed)
    injection = None
    if cfg.inject:
        injection = InjectionParam(
            g.n_nodes, init_mode=cfg.inj_init_mode,
            init_value=cfg.inj_init_value, seed=seed,
            symmetric=cfg.inj_symmetric,
        )
    return model, injection


def _make_encoder(cfg, bundle, seed):
    kind = MODEL_NAMES[cfg.model]
    g = bundle.graph
    model = Model(kind, [g.n_features, cfg.hidden, cfg.hidden], seed=seed)
    injection = None
    if cfg.inject:
        injection = InjectionParam(
            g.n_nodes, init_mode=cfg.inj_init_mode,
            init_value=cfg.inj_init_value, seed=seed,
            symmetric=cfg.inj_symmetric,
        )
    return model, injection


def _write_common(seed_dir, cfg, seed, bundle, state, model, injection):
    os.makedirs(seed_dir, exist_ok=True)
    manifest = config_echo(cfg) + f"run_seed={seed}\n"
    if cfg.dataset:
        manifest += f"dataset_hash={dataset_hash(cfg.dataset)}\n"
    manifest += f"stopped_early={state.stopped_early}\n"
    manifest += f"best_epoch={state.best_epoch}\n"
    atomic_write(os.path.join(seed_dir, "manifest"), manifest)
    atomic_write(os.path.join(seed_dir, "epochs.csv"), epochs_csv(state))
    checkpoint.save(os.path.join(seed_dir, "ckpt"), model, injection,
                    extra_config={"run_seed": seed})
    if injection is not None:
        from .data import export_injection

        export_injection(state.snapshots, injection, seed_dir)


def _injection_quality_for(cfg, bundle, injection, train_edges=None):
    g = bundle.graph
    observed = _directed_edge_set(g.edge_list())
    k = cfg.top_k if cfg.top_k > 0 else len(observed)
    ranked, truncated = inj.top_k_injections(injection, k)
    comps = connected_components(g.adjacency)
    train_set = _directed_edge_set(train_edges) if train_edges else set()
    report = metrics.injection_quality(ranked, observed, train_set, comps)
    return report, ranked, truncated


def run_train_node(cfg):
    cfg.validate()
    bundle = load_dataset(cfg.dataset)
    run_dir = os.path.join(cfg.out, cfg.name)
    rows = []
    for s in range(cfg.seeds):
        seed = cfg.seed + s
        model, injection = _make_parts(cfg, bundle, seed)
        tconf = cfg.train_config("node_clf", seed)
        if cfg.no_edges:
            state = run_no_edges_experiment(bundle.graph, bundle.masks, model,
                                            injection, tconf)
        else:
            state = train_node_clf(bundle.graph, bundle.masks, model,
                                   injection=injection, config=tconf)

        logits = _final_logits(model, bundle, injection, cfg)
        acc, per_class = metrics.accuracy_macro(logits, bundle.graph.labels,
                                                bundle.masks.test)
        probs = _softmax(logits)
        auc = metrics.auc_roc_macro(probs, bundle.graph.labels, bundle.masks.test)
        clf = metrics.ClassificationReport(acc, auc, per_class)

        seed_dir = os.path.join(run_dir, str(seed))
        _write_common(seed_dir, cfg, seed, bundle, state, model, injection)
        report_text = metrics.report_to_kv(clf)
        row = {"seed": seed, "accuracy_macro": acc, "auc_roc_macro": auc,
               "best_val": state.best_metric}
        if injection is not None:
            quality, ranked, _ = _injection_quality_for(cfg, bundle, injection)
            report_text += metrics.report_to_kv(quality, prefix="injection_")
            _write_topk(os.path.join(seed_dir, "topk_injections.csv"), ranked)
            row.update(hits_total=quality.hits_total,
                       hit_rate_total=quality.hit_rate_total)
        atomic_write(os.path.join(seed_dir, "report.txt"), report_text)
        rows.append(row)
    write_aggregate(os.path.join(run_dir, "aggregate.csv"), rows)
    return run_dir, rows


def run_train_link(cfg):
    cfg.validate()
    bundle = load_dataset(cfg.dataset)
    run_dir = os.path.join(cfg.out, cfg.name)
    rows = []
    for s in range(cfg.seeds):
        seed = cfg.seed + s
        split = make_link_split(bundle.graph, cfg.train_fraction, seed)
        model, injection = _make_encoder(cfg, bundle, seed)
        tconf = cfg.train_config("link_pred", seed)
        state = train_link_pred(bundle.graph, split, model,
                                injection=injection, config=tconf)

        scores = _final_scores(model, bundle, injection, split)
        rep = metrics.link_pred_report(scores, split.test_pos_edges,
                                       split.test_neg_edges, threshold=0.5)

        seed_dir = os.path.join(run_dir, str(seed))
        _write_common(seed_dir, cfg, seed, bundle, state, model, injection)
        _write_split(os.path.join(seed_dir, "split.csv"), split)
        report_text = metrics.report_to_kv(rep)
        row = {"seed": seed, "accuracy": rep.accuracy, "precision": rep.precision,
               "recall": rep.recall, "best_val": state.best_metric}
        if injection is not None:
            quality, ranked, _ = _injection_quality_for(
                cfg, bundle, injection, train_edges=split.train_edges)
            report_text += metrics.report_to_kv(quality, prefix="injection_")
            _write_topk(os.path.join(seed_dir, "topk_injections.csv"), ranked)
            row.update(hits_total=quality.hits_total,
                       hit_rate_total=quality.hit_rate_total)
        atomic_write(os.path.join(seed_dir, "report.txt"), report_text)
        rows.append(row)
    write_aggregate(os.path.join(run_dir, "aggregate.csv"), rows)
    return run_dir, rows


def run_eval_injection(ckpt_path, dataset_path, k):
    _, model, injection = checkpoint.load(ckpt_path)
    if injection is None:
        raise checkpoint.CheckpointError(f"{ckpt_path}: no injection matrix saved")
    bundle = load_dataset(dataset_path)
    if injection.n_nodes != bundle.graph.n_nodes:
        raise checkpoint.CheckpointError(
            f"checkpoint J is {injection.n_nodes} nodes, "
            f"dataset has {bundle.graph.n_nodes}"
        )
    cfg = RunConfig(dataset=dataset_path, top_k=k)
    report, ranked, truncated = _injection_quality_for(cfg, bundle, injection)
    return report, ranked, truncated


def run_dataset_stats(dataset_path):
    bundle = load_dataset(dataset_path)
    g = bundle.graph
    stats = degree_stats(g.adjacency)
    n_edges = len(g.edge_list())
    lines = [
        "DATASET  #CLASSES  #NODES  #NODE FEATURES  #EDGES  #DEGREE(min, max, avg)",
        "%s  %d  %d  %d  %d  (%d, %d, %.6g)" % (
            bundle.name, g.n_classes, g.n_nodes, g.n_features, n_edges,
            stats.min, stats.max, stats.avg,
        ),
    ]
    return "\n".join(lines) + "\n"


def run_gen_sbm(out_dir, block_sizes, p_intra, p_inter, feature_dim=0,
                feature_noise=0.0, seed=0):
    spec = SbmSpec(block_sizes=block_sizes, p_intra=p_intra, p_inter=p_inter,
                   feature_dim=feature_dim, feature_noise=feature_noise, seed=seed)
    bundle = generate_sbm(spec)
    save_dataset(bundle, out_dir)
    return bundle


# ------------------------------------------------------------------ helpers

def _softmax(logits):
    arr = logits.data if hasattr(logits, "data") else np.asarray(logits)
    z = arr - arr.max(axis=1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=1, keepdims=True)


def _final_logits(model, bundle, injection, cfg):
    from .engine import Tensor
    from .injection import inject
    from .models import forward_node_clf

    a = np.zeros_like(bundle.graph.adjacency) if cfg.no_edges \
        else bundle.graph.adjacency
    a_t = Tensor(a)
    a_prime = inject(a_t, injection) if injection is not None else a_t
    return forward_node_clf(model, Tensor(bundle.graph.features), a_prime)


def _final_scores(model, bundle, injection, split):
    from .engine import Tensor
    from .injection import inject
    from .models import forward_link_pred

    a_train = adjacency_from_edges(bundle.graph.n_nodes, split.train_edges)
    a_t = Tensor(a_train)
    a_hat = inject(a_t, injection) if injection is not None else a_t
    return forward_link_pred(model, Tensor(bundle.graph.features), a_hat)


def _write_topk(path, ranked):
    lines = ["rank,i,j,score"]
    for rank, (i, j, score) in enumerate(ranked, start=1):
        lines.append("%d,%d,%d,%.17g" % (rank, i, j, score))
    atomic_write(path, "\n".join(lines) + "\n")


def _write_split(path, split):
    lines = ["part,i,j"]
    for part, edges in (("train", split.train_edges),
                        ("test_pos", split.test_pos_edges),
                        ("test_neg", split.test_neg_edges)):
        for i, j in edges:
            lines.append(f"{part},{i},{j}")
    atomic_write(path, "\n".join(lines) + "\n")


def aggregate_stats(values):
    """Mean and sample (n-1) standard deviation; std is 0 for n == 1."""
    v = np.asarray(values, dtype=np.float64)
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return mean, std


def write_aggregate(path, rows):
    keys = [k for k in rows[0] if k != "seed"]
    lines = ["metric,mean,std,best," + ",".join(f"seed{r['seed']}" for r in rows)]
    for key in keys:
        vals = [r[key] for r in rows]
        mean, std = aggregate_stats(vals)
        lines.append(
            "%s,%.17g,%.17g,%.17g," % (key, mean, std, max(vals))
            + ",".join("%.17g" % v for v in vals)
        )
    atomic_write(path, "\n".join(lines) + "\n")
