"""Dataset ingestion, synthetic generation and artifact serialization.

Dataset directory format (UTF-8, LF):
  meta.txt      n_nodes=<N> / n_features=<D> / n_classes=<C>, one per line
  features.csv  N lines of D comma-separated reals
  edges.csv     one `src,dst` per line, 0-based, undirected
  labels.csv    N lines, one integer class each
  splits.json   arrays train/val/test of node indices; optional train_fraction
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, GraphError, SplitMasks, strip_self_loops, symmetrize


class DataError(Exception):
    pass


class FormatError(DataError):
    pass


@dataclass
class DatasetBundle:
    graph: Graph
    masks: SplitMasks
    name: str
    provenance: dict = field(default_factory=dict)
    train_fraction: float = 0.8


@dataclass
class SbmSpec:
    block_sizes: list
    p_intra: float
    p_inter: float
    feature_dim: int = 0          # 0 -> one-hot block id only
    feature_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_inter < self.p_intra <= 1.0):
            raise DataError(
                f"need 0 <= p_inter < p_intra <= 1, got ({self.p_inter}, {self.p_intra})"
            )


def _file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def _read_meta(path):
    meta = {}
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{ln}: expected key=value, got {line!r}")
            meta[key.strip()] = val.strip()
    for key in ("n_nodes", "n_features", "n_classes"):
        if key not in meta:
            raise FormatError(f"{path}: missing {key}")
    return int(meta["n_nodes"]), int(meta["n_features"]), int(meta["n_classes"])


def load_dataset(dir_path):
    dir_path = os.fspath(dir_path)
    files = {
        name: os.path.join(dir_path, name)
        for name in ("meta.txt", "features.csv", "edges.csv", "labels.csv", "splits.json")
    }
    for name, path in files.items():
        if not os.path.exists(path):
            raise DataError(f"missing dataset file: {path}")

    n, d, c = _read_meta(files["meta.txt"])

    features = np.loadtxt(files["features.csv"], delimiter=",", ndmin=2)
    if features.shape != (n, d):
        raise FormatError(
            f"{files['features.csv']}: shape {features.shape} != ({n}, {d})"
        )

    adjacency = np.zeros((n, n))
    with open(files["edges.csv"], encoding="utf-8") as f:
        for ln, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                src, dst = (int(x) for x in line.split(","))
            except ValueError:
                raise FormatError(f"{files['edges.csv']}:{ln}: bad edge line {line!r}")
            if not (0 <= src < n and 0 <= dst < n):
                raise DataError(
                    f"{files['edges.csv']}:{ln}: edge ({src}, {dst}) "
                    f"outside a {n}-node graph"
                )
            adjacency[src, dst] = 1.0
    adjacency = strip_self_loops(symmetrize(adjacency))

    labels = np.loadtxt(files["labels.csv"], dtype=np.int64, ndmin=1)
    if labels.shape != (n,):
        raise FormatError(f"{files['labels.csv']}: {labels.shape[0]} labels for {n} nodes")

    with open(files["splits.json"], encoding="utf-8") as f:
        splits = json.load(f)
    masks = {}
    for part in ("train", "val", "test"):
        m = np.zeros(n, dtype=bool)
        for idx in splits.get(part, []):
            if not 0 <= idx < n:
                raise DataError(f"{files['splits.json']}: {part} index {idx} out of range")
            m[idx] = True
        masks[part] = m

    graph = Graph(
        n_nodes=n, features=features, adjacency=adjacency,
        labels=labels, n_classes=c,
    ).validate()
    bundle = DatasetBundle(
        graph=graph,
        masks=SplitMasks(**masks).validate(n),
        name=os.path.basename(os.path.normpath(dir_path)),
        provenance={name: _file_hash(path) for name, path in files.items()},
        train_fraction=float(splits.get("train_fraction", 0.8)),
    )
    return bundle


def save_dataset(bundle, dir_path):
    os.makedirs(dir_path, exist_ok=True)
    g = bundle.graph
    meta = f"n_nodes={g.n_nodes}\nn_features={g.n_features}\nn_classes={g.n_classes}\n"
    atomic_write(os.path.join(dir_path, "meta.txt"), meta)
    atomic_write(
        os.path.join(dir_path, "features.csv"),
        "\n".join(",".join("%.17g" % v for v in row) for row in g.features) + "\n",
    )
    atomic_write(
        os.path.join(dir_path, "edges.csv"),
        "".join(f"{i},{j}\n" for i, j in g.edge_list()),
    )
    atomic_write(
        os.path.join(dir_path, "labels.csv"),
        "".join(f"{y}\n" for y in g.labels),
    )
    splits = {
        part: np.nonzero(getattr(bundle.masks, part))[0].tolist()
        for part in ("train", "val", "test")
    }
    splits["train_fraction"] = bundle.train_fraction
    atomic_write(os.path.join(dir_path, "splits.json"), json.dumps(splits))


def dataset_hash(dir_path):
    """Content hash over the dataset files, for run manifests."""
    h = hashlib.sha256()
    for name in ("meta.txt", "features.csv", "edges.csv", "labels.csv", "splits.json"):
        path = os.path.join(dir_path, name)
        if os.path.exists(path):
            with open(path, "rb") as f:
                h.update(f.read())
    return h.hexdigest()


def generate_sbm(spec, train_per_class=None, val_fraction=0.2):
    """Block-structured random graph; features are one-hot block id plus
    Gaussian noise, labels are block ids. Deterministic under spec.seed."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    sizes = list(spec.block_sizes)
    n = sum(sizes)
    n_blocks = len(sizes)
    labels = np.concatenate([np.full(s, b, dtype=np.int64) for b, s in enumerate(sizes)])

    upper = rng.random((n, n))
    same = labels[:, None] == labels[None, :]
    p = np.where(same, spec.p_intra, spec.p_inter)
    adjacency = np.triu(upper < p, k=1).astype(np.float64)
    adjacency = adjacency + adjacency.T

    d = max(spec.feature_dim, n_blocks)
    features = np.zeros((n, d))
    features[np.arange(n), labels] = 1.0
    if spec.feature_noise > 0.0:
        features = features + rng.normal(0.0, spec.feature_noise, size=(n, d))

    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    per_class = train_per_class if train_per_class is not None else max(1, min(sizes) // 4)
    for b in range(n_blocks):
        nodes = rng.permutation(np.nonzero(labels == b)[0])
        n_train = min(per_class, len(nodes))
        n_val = int(len(nodes) * val_fraction)
        train[nodes[:n_train]] = True
        val[nodes[n_train:n_train + n_val]] = True
        test[nodes[n_train + n_val:]] = True

    graph = Graph(
        n_nodes=n, features=features, adjacency=adjacency,
        labels=labels, n_classes=n_blocks,
    ).validate()
    return DatasetBundle(
        graph=graph,
        masks=SplitMasks(train, val, test).validate(n),
        name=f"sbm-{'x'.join(str(s) for s in sizes)}-seed{spec.seed}",
        provenance={"generator": "sbm", "seed": str(spec.seed)},
    )


def drop_edges(graph, fraction=None, edges=None, seed=0):
    """Remove undirected edges; returns (reduced Graph, dropped edge list).

    Node set and features are unchanged. Exactly one of fraction / edges."""
    all_edges = graph.edge_list()
    if edges is not None:
        edge_set = set(all_edges)
        dropped = []
        for i, j in edges:
            e = (min(i, j), max(i, j))
            if e not in edge_set:
                raise DataError(f"cannot drop non-edge ({i}, {j})")
            dropped.append(e)
    else:
        if not 0.0 <= fraction < 1.0:
            raise DataError(f"drop fraction {fraction} outside [0, 1)")
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        n_drop = int(round(fraction * len(all_edges)))
        idx = rng.permutation(len(all_edges))[:n_drop]
        dropped = [all_edges[t] for t in sorted(idx)]
    adjacency = np.array(graph.adjacency, copy=True)
    for i, j in dropped:
        adjacency[i, j] = 0.0
        adjacency[j, i] = 0.0
    reduced = Graph(
        n_nodes=graph.n_nodes, features=graph.features, adjacency=adjacency,
        labels=graph.labels, n_classes=graph.n_classes,
    ).validate()
    return reduced, dropped


def atomic_write(path, content):
    """Write via temp file + rename so concurrent writers never interleave."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if isinstance(content, str):
        content = content.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export_report(report, path):
    from .metrics import report_to_kv

    atomic_write(path, report_to_kv(report))


def parse_kv_report(path):
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                k, _, v = line.partition("=")
                out[k] = v
    return out


def export_injection(snapshots, param, out_dir):
    from . import injection as inj

    os.makedirs(out_dir, exist_ok=True)
    atomic_write(os.path.join(out_dir, "injection_series.csv"),
                 inj.snapshot_series_csv(snapshots))
    if snapshots:
        atomic_write(os.path.join(out_dir, "injection_hist.csv"),
                     inj.histogram_csv(snapshots[-1]))
    atomic_write(os.path.join(out_dir, "injection_matrix.csv"),
                 inj.matrix_csv(param))
