"""Command-line driver: generation, training, scoring, drift checks,
queue administration, metrics export, serving, and the closed-loop
simulation. Exit codes: 0 success, 1 domain error, 2 usage error."""
from __future__ import annotations

import json
import os
import sys
from typing import List, Optional, Tuple

import click

from . import corpus as corpus_mod
from . import drift as drift_mod
from . import simulate as simulate_mod
from .domain import Dataset, Label
from .errors import CrqRiskError, InvalidConfig
from .features import encode_batch
from .registry import ModelArtifact
from .service import RiskService, ServiceConfig, build_artifact
from .uncertainty import mutual_information

import numpy as np


def _fail(exc: CrqRiskError) -> None:
    click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
    sys.exit(1)


def _parse_drift(spec: str) -> corpus_mod.DriftInjection:
    # feature:kind:onset[:magnitude]
    parts = spec.split(":")
    if len(parts) not in (3, 4):
        raise click.UsageError(
            f"drift spec {spec!r} must be feature:kind:onset[:magnitude]"
        )
    magnitude = float(parts[3]) if len(parts) == 4 else 0.0
    return corpus_mod.DriftInjection(parts[0], int(parts[2]), parts[1], magnitude)


def _service(data_dir: str, config: Optional[str]) -> RiskService:
    if config:
        cfg = ServiceConfig.from_ini(config, data_dir=data_dir)
    else:
        cfg = ServiceConfig(data_dir=data_dir)
    return RiskService(cfg)


@click.group()
def main():
    """Change-request risk assessment toolkit."""


@main.command()
@click.option("--n", "n_records", type=int, required=True)
@click.option("--prevalence", type=float, default=0.0009, show_default=True)
@click.option("--teams", type=int, default=25, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mechanism", type=click.Choice(["linear", "interaction"]), default="interaction")
@click.option("--drift", "drift_specs", multiple=True,
              help="feature:kind:onset[:magnitude], repeatable")
@click.option("--out", required=True, type=click.Path())
@click.option("--labels-out", type=click.Path(), default=None,
              help="defaults to <out>.labels.csv")
def generate(n_records, prevalence, teams, seed, mechanism, drift_specs, out, labels_out):
    """Generate a synthetic change-request corpus."""
    try:
        cfg = corpus_mod.GeneratorConfig(
            n_records=n_records, risky_prevalence=prevalence, n_teams=teams,
            seed=seed, risk_mechanism=mechanism,
        )
        drifts = [_parse_drift(s) for s in drift_specs]
        records, labels = corpus_mod.generate(cfg, drifts)
        corpus_mod.save_corpus(out, records)
        labels_path = labels_out or f"{out}.labels.csv"
        corpus_mod.save_labels(labels_path, records, labels)
    except CrqRiskError as exc:
        _fail(exc)
    n_risky = sum(1 for lb in labels if lb is Label.RISKY)
    click.echo(json.dumps({"records": len(records), "risky": n_risky,
                           "corpus": str(out), "labels": labels_path}))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--n-trees", type=int, default=60, show_default=True)
@click.option("--max-depth", type=int, default=4, show_default=True)
@click.option("--learning-rate", type=float, default=0.15, show_default=True)
@click.option("--oversample-method", type=click.Choice(["smote", "adasyn"]), default="smote")
@click.option("--seed", type=int, default=0, show_default=True)
def train(corpus_path, labels_path, out, n_trees, max_depth, learning_rate,
          oversample_method, seed):
    """Train a model document (ensemble + schema + profiles + threshold)."""
    try:
        records = corpus_mod.load_corpus(corpus_path)
        label_map = corpus_mod.load_labels(labels_path)
        labels = [label_map[r.id] for r in records]
        cfg = ServiceConfig(
            n_trees=n_trees, max_depth=max_depth, learning_rate=learning_rate,
            oversample_method=oversample_method, seed=seed,
        )
        # anchor recency weighting at the corpus's newest record, not wall
        # clock, so archived corpora train the same way fresh ones do
        newest = max(r.submitted_at for r in records)
        artifact = build_artifact(records, labels, cfg, version="cli", now=newest)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(artifact.to_dict(), fh)
    except KeyError as exc:
        _fail(CrqRiskError(f"no label for change id {exc.args[0]!r}"))
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps({"model": str(out), "metrics": artifact.metrics,
                           "operating_threshold": artifact.operating_threshold}))


def _load_artifact(path: str) -> ModelArtifact:
    with open(path, "r", encoding="utf-8") as fh:
        return ModelArtifact.from_dict(json.load(fh))


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="scores JSONL (default stdout)")
@click.option("--n-members", type=int, default=10, show_default=True)
def score(model_path, in_path, out, n_members):
    """Score a batch of change requests with a trained model document."""
    try:
        artifact = _load_artifact(model_path)
        records = corpus_mod.load_corpus(in_path)
        X = encode_batch(records, artifact.profiles, artifact.schema)
        probs = artifact.ensemble.predict_proba(X)
        members = artifact.ensemble.member_probas(
            X, min(n_members, len(artifact.ensemble.trees))
        )
    except CrqRiskError as exc:
        _fail(exc)
    lines = []
    for i, rec in enumerate(records):
        lines.append(json.dumps({
            "change_id": rec.id,
            "probability": float(probs[i]),
            "model_version": artifact.version,
            "flagged": bool(probs[i] >= artifact.operating_threshold),
            "uncertainty": mutual_information(members[i]).to_dict(),
        }, sort_keys=True))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + ("\n" if lines else ""))
        click.echo(json.dumps({"scored": len(lines), "out": str(out)}))
    else:
        for line in lines:
            click.echo(line)


@main.command(name="drift-check")
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
@click.option("--cur", "cur_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", type=float, default=drift_mod.DEFAULT_ALARM_THRESHOLD,
              show_default=True)
def drift_check(ref_path, cur_path, model_path, threshold):
    """Weighted KS drift between two corpora under a model's importances."""
    try:
        artifact = _load_artifact(model_path)
        ref = corpus_mod.load_corpus(ref_path)
        cur = corpus_mod.load_corpus(cur_path)
        ref_X = encode_batch(ref, artifact.profiles, artifact.schema)
        cur_X = encode_batch(cur, artifact.profiles, artifact.schema)

        def as_ds(X):
            return Dataset(X=X, y=np.zeros(len(X), dtype=np.int8),
                           w=np.ones(len(X)), ts=np.zeros(len(X), dtype=np.int64),
                           schema=artifact.schema)

        report = drift_mod.weighted_drift(
            as_ds(ref_X), as_ds(cur_X), artifact.ensemble.feature_importances,
            threshold=threshold,
            pred_probs=(artifact.ensemble.predict_proba(ref_X),
                        artifact.ensemble.predict_proba(cur_X)),
        )
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps(report.to_dict()))
    sys.exit(0)


@main.group()
def reviews():
    """Review-queue administration."""


@reviews.command(name="list")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--status", default="pending", show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
def reviews_list(data_dir, status, config):
    try:
        service = _service(data_dir, config)
        items = service.queue.items(None if status == "all" else status)
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps({"reviews": [it.to_dict() for it in items]}))


@reviews.command(name="verdict")
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--change-id", required=True)
@click.option("--label", required=True, type=click.Choice(["normal", "risky"]))
@click.option("--reviewer", default="cli", show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
def reviews_verdict(data_dir, change_id, label, reviewer, config):
    try:
        service = _service(data_dir, config)
        verdict = service.record_verdict(change_id, Label(label), reviewer)
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps({"verdict": verdict.to_dict()}))


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--config", type=click.Path(exists=True), default=None)
def metrics(data_dir, config):
    """Print the service metrics snapshot as JSON."""
    try:
        service = _service(data_dir, config)
        snapshot = service.metrics_snapshot()
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps(snapshot))


@main.command()
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8080, show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--ui-dir", type=click.Path(), default=None,
              help="static review-UI build to serve under /ui")
def serve(data_dir, host, port, config, ui_dir):
    """Run the HTTP scoring service."""
    import uvicorn

    from .api import create_app

    try:
        service = _service(data_dir, config)
    except CrqRiskError as exc:
        _fail(exc)
    if ui_dir is None:
        default_ui = os.path.join(os.getcwd(), "frontend", "dist")
        ui_dir = default_ui if os.path.isdir(default_ui) else None
    uvicorn.run(create_app(service, ui_dir=ui_dir), host=host, port=port)


@main.command()
@click.option("--months", type=int, default=7, show_default=True)
@click.option("--drift-at-month", type=int, default=None)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--month-size", type=int, default=3000, show_default=True)
@click.option("--prevalence", type=float, default=0.02, show_default=True)
@click.option("--data-dir", required=True, type=click.Path())
@click.option("--out", type=click.Path(), default=None,
              help="also copy the monthly metrics CSV here")
def simulate(months, drift_at_month, seed, month_size, prevalence, data_dir, out):
    """Closed-loop simulation: score, feedback, drift detection, retraining."""
    try:
        sim = simulate_mod.SimulationConfig(
            months=months, drift_at_month=drift_at_month, seed=seed,
            month_size=month_size, prevalence=prevalence,
        )
        rows = simulate_mod.run_simulation(sim, data_dir)
        if out:
            simulate_mod.write_monthly_csv(out, rows)
    except CrqRiskError as exc:
        _fail(exc)
    click.echo(json.dumps({"months": rows}))


if __name__ == "__main__":
    main()
