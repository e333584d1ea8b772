"""FastAPI service exposing the toolkit; the CLI is a thin client of this app."""

from __future__ import annotations

from dataclasses import asdict
from typing import List, Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .. import checkpoint
from ..data import DataError
from ..graphs import GraphError
from ..metrics import MetricError
from ..runs import (RunConfig, run_dataset_stats, run_eval_injection,
                    run_gen_sbm, run_train_link, run_train_node)
from ..train import ConfigError, TrainingDiverged

app = FastAPI(title="linkforge", version="0.1.0")


# error_kind maps to CLI exit codes: config=1, data=2, diverged=3
_ERRORS = (
    (ConfigError, "config", 400),
    (checkpoint.CheckpointError, "data", 422),
    (DataError, "data", 422),
    (GraphError, "data", 422),
    (MetricError, "data", 422),
    (TrainingDiverged, "diverged", 500),
    (FileNotFoundError, "data", 422),
)

for exc_type, kind, status in _ERRORS:
    def _make_handler(kind=kind, status=status):
        async def handler(request, exc):
            return JSONResponse(
                status_code=status,
                content={"error_kind": kind, "message": str(exc)},
            )
        return handler

    app.add_exception_handler(exc_type, _make_handler())


class TrainRequest(BaseModel):
    dataset: str
    out: str = "runs"
    name: str = "run"
    model: str = "gcn"
    hidden: int = 16
    seed: int = 0
    seeds: int = 1
    inject: bool = False
    no_edges: bool = False
    top_k: int = 0
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

    def to_run_config(self) -> RunConfig:
        return RunConfig(**self.model_dump())


class TrainResponse(BaseModel):
    run_dir: str
    rows: List[dict]


class EvalInjectionRequest(BaseModel):
    checkpoint: str
    dataset: str
    k: int = 0


class InjectionQualityResponse(BaseModel):
    k: int
    hits_total: int
    hits_not_in_train: int
    hit_rate_total: float
    hit_rate_not_in_train: float
    mean_rank: Optional[float] = None
    mr_ratio: Optional[float] = None
    neighbor_fraction: float
    disconnected_fraction: float
    truncated: bool = False


class StatsRequest(BaseModel):
    dataset: str


class StatsResponse(BaseModel):
    table: str


class SbmRequest(BaseModel):
    out: str
    block_sizes: List[int] = Field(min_length=1)
    p_intra: float
    p_inter: float
    feature_dim: int = 0
    feature_noise: float = 0.0
    seed: int = 0


class SbmResponse(BaseModel):
    out: str
    n_nodes: int
    n_edges: int
    n_classes: int


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/train/node", response_model=TrainResponse)
def train_node(req: TrainRequest):
    run_dir, rows = run_train_node(req.to_run_config())
    return TrainResponse(run_dir=run_dir, rows=rows)


@app.post("/train/link", response_model=TrainResponse)
def train_link(req: TrainRequest):
    run_dir, rows = run_train_link(req.to_run_config())
    return TrainResponse(run_dir=run_dir, rows=rows)


@app.post("/injection/eval", response_model=InjectionQualityResponse)
def eval_injection(req: EvalInjectionRequest):
    report, _ranked, truncated = run_eval_injection(req.checkpoint, req.dataset, req.k)
    return InjectionQualityResponse(**asdict(report), truncated=truncated)


@app.post("/datasets/stats", response_model=StatsResponse)
def dataset_stats(req: StatsRequest):
    return StatsResponse(table=run_dataset_stats(req.dataset))


@app.post("/datasets/sbm", response_model=SbmResponse)
def gen_sbm(req: SbmRequest):
    bundle = run_gen_sbm(
        req.out, req.block_sizes, req.p_intra, req.p_inter,
        feature_dim=req.feature_dim, feature_noise=req.feature_noise,
        seed=req.seed,
    )
    return SbmResponse(
        out=req.out,
        n_nodes=bundle.graph.n_nodes,
        n_edges=len(bundle.graph.edge_list()),
        n_classes=bundle.graph.n_classes,
    )
