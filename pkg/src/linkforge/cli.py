"""Thin-client CLI. All work happens behind the HTTP API; by default the
service app is driven in-process, `--server` targets a running instance.

Exit codes: 0 success, 1 config error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import sys
from dataclasses import asdict

import click
import httpx

from .runs import RunConfig, parse_config, set_config_key
from .train import ConfigError

_EXIT_CODES = {"config": 1, "data": 2, "diverged": 3}


def _client(server):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # drive the ASGI app in-process; TestClient is the sync httpx client
    # wrapper for ASGI apps
    from starlette.testclient import TestClient

    from .service.app import app

    return TestClient(app, raise_server_exceptions=False)


def _call(server, method, path, payload):
    with _client(server) as client:
        resp = client.request(method, path, json=payload)
    if resp.status_code >= 400:
        try:
            body = resp.json()
            kind = body.get("error_kind", "data")
            message = body.get("message", resp.text)
        except ValueError:
            kind, message = "data", resp.text
        click.echo(f"error ({kind}): {message}", err=True)
        sys.exit(_EXIT_CODES.get(kind, 2))
    return resp.json()


def _build_config(config_path, overrides):
    cfg = RunConfig()
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as f:
                cfg = parse_config(f.read(), base=cfg)
        except (OSError, ConfigError, ValueError) as exc:
            click.echo(f"error (config): {exc}", err=True)
            sys.exit(1)
    try:
        for key, val in overrides.items():
            if val is not None:
                set_config_key(cfg, key, str(val))
        cfg.validate()
    except (ConfigError, ValueError) as exc:
        click.echo(f"error (config): {exc}", err=True)
        sys.exit(1)
    return cfg


def train_options(f):
    opts = [
        click.option("--config", "config_path", type=click.Path(), default=None,
                     help="Flat key=value config file; flags win over it."),
        click.option("--dataset", default=None, help="Dataset directory."),
        click.option("--out", default=None, help="Output directory for runs."),
        click.option("--name", default=None, help="Run name."),
        click.option("--model", default=None, type=click.Choice(["gcn", "sage", "gnn"])),
        click.option("--seed", default=None, type=int),
        click.option("--seeds", default=None, type=int, help="Number of seeds."),
        click.option("--inject/--no-inject", "inject", default=None),
        click.option("--epochs", default=None, type=int),
        click.option("--top-k", "top_k", default=None, type=int),
        click.option("--lr", default=None, type=float),
        click.option("--lam", default=None, type=float),
        click.option("--lam-w", "lam_w", default=None, type=float),
        click.option("--lam-j", "lam_j", default=None, type=float),
        click.option("--window", default=None, type=int),
        click.option("--tolerance", default=None, type=float),
        click.option("--earliest", default=None, type=int),
        click.option("--hidden", default=None, type=int),
        click.option("--server", default=None, help="Remote service URL."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
def main():
    """Learnable link-injection toolkit for graph machine learning."""


def _run_train(endpoint, server, config_path, extra, overrides):
    overrides = {k: v for k, v in overrides.items() if k != "server"}
    overrides.update(extra)
    cfg = _build_config(config_path, overrides)
    if not cfg.dataset:
        click.echo("error (config): --dataset is required", err=True)
        sys.exit(1)
    body = _call(server, "POST", endpoint, asdict(cfg))
    click.echo(f"run directory: {body['run_dir']}")
    for row in body["rows"]:
        click.echo("  " + ", ".join(f"{k}={v}" for k, v in row.items()))


@main.command("train-node")
@train_options
@click.option("--no-edges", "no_edges", is_flag=True, default=None,
              help="Zero the training adjacency (injection discovers structure).")
def train_node(config_path, server, no_edges, **overrides):
    """Train a node classifier (optionally with link injection)."""
    _run_train("/train/node", server, config_path,
               {"no_edges": no_edges}, overrides)


@main.command("train-link")
@train_options
@click.option("--train-fraction", "train_fraction", default=None, type=float)
def train_link(config_path, server, train_fraction, **overrides):
    """Train a link predictor via adjacency reconstruction."""
    _run_train("/train/link", server, config_path,
               {"train_fraction": train_fraction}, overrides)


@main.command("eval-injection")
@click.argument("ckpt", type=click.Path())
@click.argument("dataset", type=click.Path())
@click.option("--top-k", "top_k", default=0, type=int)
@click.option("--server", default=None)
def eval_injection(ckpt, dataset, top_k, server):
    """Recompute injected-link quality metrics from a saved checkpoint."""
    body = _call(server, "POST", "/injection/eval",
                 {"checkpoint": ckpt, "dataset": dataset, "k": top_k})
    for key, val in body.items():
        click.echo(f"{key}={'absent' if val is None else val}")


@main.command("dataset-stats")
@click.argument("dataset", type=click.Path())
@click.option("--server", default=None)
def dataset_stats(dataset, server):
    """Print dataset statistics (nodes, features, edges, degrees)."""
    body = _call(server, "POST", "/datasets/stats", {"dataset": dataset})
    click.echo(body["table"], nl=False)


@main.command("gen-sbm")
@click.argument("out", type=click.Path())
@click.option("--blocks", default="20,20", help="Comma-separated block sizes.")
@click.option("--p-intra", default=0.5, type=float)
@click.option("--p-inter", default=0.02, type=float)
@click.option("--feature-dim", default=0, type=int)
@click.option("--feature-noise", default=0.0, type=float)
@click.option("--seed", default=0, type=int)
@click.option("--server", default=None)
def gen_sbm(out, blocks, p_intra, p_inter, feature_dim, feature_noise, seed, server):
    """Generate a stochastic block model dataset directory."""
    try:
        block_sizes = [int(b) for b in blocks.split(",") if b.strip()]
    except ValueError:
        click.echo(f"error (config): bad --blocks value {blocks!r}", err=True)
        sys.exit(1)
    body = _call(server, "POST", "/datasets/sbm", {
        "out": out, "block_sizes": block_sizes, "p_intra": p_intra,
        "p_inter": p_inter, "feature_dim": feature_dim,
        "feature_noise": feature_noise, "seed": seed,
    })
    click.echo(f"wrote {body['out']}: {body['n_nodes']} nodes, "
               f"{body['n_edges']} edges, {body['n_classes']} classes")


@main.command("serve")
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8321, type=int)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
