import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from linkforge.checkpoint import load as load_ckpt
from linkforge.data import load_dataset
from linkforge.service.app import app

client = TestClient(app, raise_server_exceptions=False)


@pytest.fixture(scope="module")
def sbm_dir(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("data") / "sbm")
    resp = client.post("/datasets/sbm", json={
        "out": out, "block_sizes": [10, 10], "p_intra": 0.6, "p_inter": 0.05,
        "feature_dim": 4, "feature_noise": 0.3, "seed": 0,
    })
    assert resp.status_code == 200
    return out


def test_health():
    resp = client.get("/health")
    assert resp.status_code == 200
    assert resp.json() == {"status": "ok"}


def test_gen_sbm_response_and_files(sbm_dir):
    bundle = load_dataset(sbm_dir)
    assert bundle.graph.n_nodes == 20
    for name in ("meta.txt", "features.csv", "edges.csv", "labels.csv",
                 "splits.json"):
        assert os.path.exists(os.path.join(sbm_dir, name))


def test_gen_sbm_invalid_probabilities(tmp_path):
    resp = client.post("/datasets/sbm", json={
        "out": str(tmp_path / "bad"), "block_sizes": [5, 5],
        "p_intra": 0.1, "p_inter": 0.5,
    })
    assert resp.status_code == 422
    assert resp.json()["error_kind"] == "data"


def test_dataset_stats(sbm_dir):
    resp = client.post("/datasets/stats", json={"dataset": sbm_dir})
    assert resp.status_code == 200
    table = resp.json()["table"]
    header, row = table.strip().split("\n")
    assert header.startswith("DATASET  #CLASSES  #NODES")
    assert "  2  20  4  " in row


def test_dataset_stats_missing_dir(tmp_path):
    resp = client.post("/datasets/stats", json={"dataset": str(tmp_path / "nope")})
    assert resp.status_code == 422
    assert resp.json()["error_kind"] == "data"


def test_train_node_flow(sbm_dir, tmp_path):
    out = str(tmp_path / "runs")
    resp = client.post("/train/node", json={
        "dataset": sbm_dir, "out": out, "name": "nodejob", "model": "gcn",
        "hidden": 8, "seeds": 2, "inject": True, "epochs": 15,
        "window": 3, "earliest": 6, "lr": 0.01,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["run_dir"] == os.path.join(out, "nodejob")
    assert len(body["rows"]) == 2
    assert {r["seed"] for r in body["rows"]} == {0, 1}
    for seed in (0, 1):
        seed_dir = os.path.join(out, "nodejob", str(seed))
        for artifact in ("manifest", "epochs.csv", "ckpt", "report.txt",
                         "topk_injections.csv", "injection_series.csv",
                         "injection_matrix.csv"):
            assert os.path.exists(os.path.join(seed_dir, artifact)), artifact
    assert os.path.exists(os.path.join(out, "nodejob", "aggregate.csv"))
    # checkpoint round-trips with the injection matrix
    _, model, inj = load_ckpt(os.path.join(out, "nodejob", "0", "ckpt"))
    assert inj is not None and inj.j.shape == (20, 20)


def test_train_node_bad_model(sbm_dir, tmp_path):
    resp = client.post("/train/node", json={
        "dataset": sbm_dir, "out": str(tmp_path / "r"), "model": "mlp",
    })
    assert resp.status_code == 400
    assert resp.json()["error_kind"] == "config"


def test_train_link_flow_and_eval_injection(sbm_dir, tmp_path):
    out = str(tmp_path / "runs")
    resp = client.post("/train/link", json={
        "dataset": sbm_dir, "out": out, "name": "linkjob", "model": "gcn",
        "hidden": 8, "inject": True, "epochs": 15, "window": 3,
        "earliest": 6, "lr": 0.01, "train_fraction": 0.8,
    })
    assert resp.status_code == 200
    row = resp.json()["rows"][0]
    assert {"accuracy", "precision", "recall", "hits_total"} <= set(row)
    seed_dir = os.path.join(out, "linkjob", "0")
    assert os.path.exists(os.path.join(seed_dir, "split.csv"))

    ckpt = os.path.join(seed_dir, "ckpt")
    resp = client.post("/injection/eval", json={
        "checkpoint": ckpt, "dataset": sbm_dir, "k": 10,
    })
    assert resp.status_code == 200
    q = resp.json()
    assert q["k"] == 10
    assert 0.0 <= q["hit_rate_total"] <= 1.0
    if q["hits_total"] == 0:
        assert q["mean_rank"] is None and q["mr_ratio"] is None


def test_eval_injection_checkpoint_without_injection(sbm_dir, tmp_path):
    from linkforge.checkpoint import save
    from linkforge.models import Model

    path = str(tmp_path / "plain.ckpt")
    save(path, Model("gcn", [4, 8, 2], seed=0))
    resp = client.post("/injection/eval", json={
        "checkpoint": path, "dataset": sbm_dir,
    })
    assert resp.status_code == 422
    assert resp.json()["error_kind"] == "data"


def test_eval_injection_missing_checkpoint(sbm_dir):
    resp = client.post("/injection/eval", json={
        "checkpoint": "/nonexistent.ckpt", "dataset": sbm_dir,
    })
    assert resp.status_code == 422
    assert resp.json()["error_kind"] == "data"
