"""Batch-scoring service core plus its HTTP wrapper.

The core object holds an immutable active-model snapshot; scoring reads
that snapshot once per batch, so a concurrent activation can never mix
versions within one response. All queue mutations and the event log go
through a single writer; model activation is an atomic pointer swap.

State on disk under the data directory (env override CRQRISK_DATA_DIR):
  models/            versioned model documents + ACTIVE pointer
  events.jsonl       review-queue and retrain events (append-only)
  scores.jsonl       every emitted risk score, durably written pre-response
  window.jsonl       current drift window (recent scored batches)
  history.jsonl + history-labels.csv   labeled training corpus
  drift-latest.json  most recent drift report
  monthly.csv        month-over-month business metrics (when produced)
"""
from __future__ import annotations

import configparser
import csv
import json
import os
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import drift as drift_mod
from .corpus import QA_QUESTIONS, load_corpus, load_labels, save_corpus, save_labels
from .domain import ChangeRequest, Dataset, Label, RiskScore, validate_change
from .errors import (
    CrqRiskError,
    NoActiveModel,
    SchemaMismatch,
    TrainingFailed,
    ValidationError,
)
from .evaluation import classification_metrics, man_machine_agreement, select_threshold
from .features import build_team_profiles, default_schema, encode_batch, impute, make_dataset
from .feedback import (
    DEFAULT_HALF_LIFE_S,
    DEFAULT_TTL_S,
    EventLog,
    ReviewQueue,
    Verdict,
    assemble_training_set,
)
from .gbdt import TrainConfig, train
from .imbalance import OversampleConfig, oversample
from .registry import ModelArtifact, ModelRegistry
from .uncertainty import mutual_information

DATA_DIR_ENV = "CRQRISK_DATA_DIR"


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: str = "./crqrisk-data"
    review_m: int = 20
    min_tpr: float = 0.70
    drift_threshold: float = drift_mod.DEFAULT_ALARM_THRESHOLD
    drift_alpha: float = 0.05
    n_members: int = 10
    half_life_days: float = 90.0
    feedback_multiplier: float = 3.0
    review_ttl_days: float = 14.0
    retrain_cadence_days: float = 30.0
    oversample_method: str = "smote"
    oversample_target_ratio: float = 0.1
    oversample_k: int = 5
    n_trees: int = 60
    max_depth: int = 4
    learning_rate: float = 0.15
    reg_lambda: float = 1.0
    window_cap: int = 20_000
    reference_cap: int = 4_000
    api_token: Optional[str] = None
    seed: int = 0

    @classmethod
    def from_ini(cls, path: str, data_dir: Optional[str] = None) -> "ServiceConfig":
        """Load the [service] section of an INI-style key=value file."""
        parser = configparser.ConfigParser()
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
        section = parser["service"] if parser.has_section("service") else parser["DEFAULT"]
        kwargs = {}
        for f in cls.__dataclass_fields__.values():
            if f.name not in section:
                continue
            raw = section[f.name]
            if f.name == "api_token":
                kwargs[f.name] = raw or None
            elif f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        if data_dir is not None:
            kwargs["data_dir"] = data_dir
        env_dir = os.environ.get(DATA_DIR_ENV)
        if env_dir and data_dir is None:
            kwargs["data_dir"] = env_dir
        return cls(**kwargs)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            learning_rate=self.learning_rate,
            reg_lambda=self.reg_lambda,
            seed=self.seed,
        )

    def oversample_config(self) -> OversampleConfig:
        return OversampleConfig(
            method=self.oversample_method,
            k_neighbors=self.oversample_k,
            target_ratio=self.oversample_target_ratio,
            seed=self.seed,
        )


def build_artifact(
    records: Sequence[ChangeRequest],
    labels: Sequence[Label],
    config: ServiceConfig,
    version: str,
    now: Optional[int] = None,
    verdicts: Sequence[Verdict] = (),
) -> ModelArtifact:
    """Full training pipeline for one model version.

    Profile derivation, recency/feedback weighting, a time-ordered 70/30
    split, oversampling of the training fold only, boosted-tree training,
    and threshold selection on the validation fold.
    """
    now = int(time.time()) if now is None else now
    profiles = build_team_profiles(zip(records, labels))
    schema = default_schema(QA_QUESTIONS)
    ds = make_dataset(records, labels, profiles, schema)
    ds = assemble_training_set(
        ds,
        [r.id for r in records],
        verdicts,
        now=now,
        half_life_s=int(config.half_life_days * 86400),
        feedback_multiplier=config.feedback_multiplier,
    )
    # time-ordered split: train on older, validate on newer
    order = np.argsort(ds.ts, kind="stable")
    cut = max(1, int(len(ds) * 0.7))
    tr_idx, va_idx = order[:cut], order[cut:]
    if len(va_idx) == 0:
        raise TrainingFailed("not enough history for a validation fold")
    tr = Dataset(X=ds.X[tr_idx], y=ds.y[tr_idx], w=ds.w[tr_idx], ts=ds.ts[tr_idx], schema=schema)
    va = Dataset(X=ds.X[va_idx], y=ds.y[va_idx], w=ds.w[va_idx], ts=ds.ts[va_idx], schema=schema)
    try:
        tr_filled = impute(tr, "mean")
        tr_sampled = oversample(tr_filled, config.oversample_config())
        ensemble = train(tr_sampled, config.train_config())
        va_scores = ensemble.predict_proba(va.X)
        threshold = select_threshold(va_scores, va.y, min_tpr=config.min_tpr)
        tpr, fpr, plr = classification_metrics(va_scores, va.y, threshold)
    except TrainingFailed:
        raise
    except CrqRiskError as exc:
        raise TrainingFailed(str(exc)) from exc
    rng = np.random.default_rng(config.seed)
    ref = tr.X
    if len(ref) > config.reference_cap:
        keep = np.sort(rng.choice(len(ref), config.reference_cap, replace=False))
        ref = ref[keep]
    return ModelArtifact(
        version=version,
        ensemble=ensemble,
        schema=schema,
        profiles=profiles,
        operating_threshold=threshold,
        metrics={"tpr": tpr, "fpr": fpr, "plr": plr, "n_validation": float(len(va))},
        created_at=now,
        reference_X=ref,
    )


class RiskService:
    """In-process service core; the HTTP layer is a thin adapter over it."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.registry = ModelRegistry(os.path.join(config.data_dir, "models"))
        self.events = EventLog(os.path.join(config.data_dir, "events.jsonl"))
        self.queue = ReviewQueue(self.events, ttl_s=int(config.review_ttl_days * 86400))
        self._scores_path = os.path.join(config.data_dir, "scores.jsonl")
        self._window_path = os.path.join(config.data_dir, "window.jsonl")
        self._drift_path = os.path.join(config.data_dir, "drift-latest.json")
        self._history_path = os.path.join(config.data_dir, "history.jsonl")
        self._history_labels_path = os.path.join(config.data_dir, "history-labels.csv")
        self._write_lock = threading.Lock()
        self._retrain_lock = threading.Lock()
        self._artifact: Optional[ModelArtifact] = None
        self._pending_retrain = self._replay_pending_retrain()
        version = self.registry.active_version()
        if version is not None:
            self._artifact = self.registry.load(version)

    # -- state reconstruction -------------------------------------------------

    def _replay_pending_retrain(self) -> bool:
        pending = False
        for event in self.events.read_all():
            if event["kind"] == "retrain_requested":
                pending = True
            elif event["kind"] in ("retrain_completed", "retrain_failed"):
                pending = False
        return pending

    # -- history --------------------------------------------------------------

    def ingest_labeled(self, records: Sequence[ChangeRequest], labels: Sequence[Label]) -> int:
        """Append ground-truth labeled records to the training corpus."""
        if len(records) != len(labels):
            raise ValidationError("records and labels must have equal length")
        with self._write_lock:
            with open(self._history_path, "a", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(rec.to_json())
                    fh.write("\n")
            exists = os.path.exists(self._history_labels_path)
            with open(self._history_labels_path, "a", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                if not exists:
                    writer.writerow(["id", "label"])
                for rec, label in zip(records, labels):
                    writer.writerow([rec.id, label.value])
        return len(records)

    def _load_history(self) -> Tuple[List[ChangeRequest], List[Label]]:
        if not os.path.exists(self._history_path):
            raise TrainingFailed("no labeled history available")
        records = load_corpus(self._history_path)
        label_map = load_labels(self._history_labels_path)
        labels = [label_map[r.id] for r in records]
        return records, labels

    # -- training -------------------------------------------------------------

    def train_version(self, now: Optional[int] = None) -> ModelArtifact:
        """Assemble, oversample, train, and evaluate one candidate model."""
        now = int(time.time()) if now is None else now
        records, labels = self._load_history()
        artifact = build_artifact(
            records,
            labels,
            self.config,
            version=self.registry.new_version(),
            now=now,
            verdicts=self.queue.verdicts(),
        )
        self.registry.stage(artifact)
        return artifact

    def trigger_retrain(self, reason: str = "manual", force: bool = False,
                        now: Optional[int] = None) -> Dict:
        """Train a candidate; activate it unless the PLR guardrail says no.

        Requests arriving while a retrain is in flight are deduplicated.
        """
        if reason not in ("scheduled", "drift_alarm", "manual"):
            raise ValidationError(f"unknown retrain reason {reason!r}")
        if not self._retrain_lock.acquire(blocking=False):
            return {"status": "already_in_flight"}
        try:
            self.events.append("retrain_requested", {"reason": reason})
            self._pending_retrain = True
            try:
                artifact = self.train_version(now=now)
            except TrainingFailed as exc:
                self.events.append("retrain_failed", {"reason": reason, "error": str(exc)})
                self._pending_retrain = False
                raise
            active = self._artifact
            should_activate = force or active is None or (
                artifact.metrics["plr"] >= active.metrics.get("plr", 0.0)
            )
            if should_activate:
                self.activate(artifact.version)
            self.events.append(
                "retrain_completed",
                {"reason": reason, "version": artifact.version, "activated": should_activate},
            )
            self._pending_retrain = False
            return {
                "status": "activated" if should_activate else "staged",
                "version": artifact.version,
                "metrics": artifact.metrics,
            }
        finally:
            self._retrain_lock.release()

    def activate(self, version: str) -> Dict:
        self.registry.activate(version)
        self._artifact = self.registry.load(version)
        # a new reference window supersedes the accumulated current window
        with self._write_lock:
            if os.path.exists(self._window_path):
                os.unlink(self._window_path)
        return {"active_version": version}

    # -- scoring --------------------------------------------------------------

    def score_batch(self, records: Sequence[ChangeRequest],
                    now: Optional[int] = None) -> List[RiskScore]:
        """Score one batch against a single model snapshot.

        The batch is durably logged and appended to the drift window, and
        the top-m most knowledge-uncertain items are enqueued for review,
        before scores are returned.
        """
        artifact = self._artifact  # snapshot: one version for the whole batch
        if artifact is None:
            raise NoActiveModel("no active model; train or activate one first")
        now = int(time.time()) if now is None else now
        if not records:
            return []
        for rec in records:
            validate_change(rec)
        X = encode_batch(records, artifact.profiles, artifact.schema)
        probs = artifact.ensemble.predict_proba(X)
        n_members = min(self.config.n_members, len(artifact.ensemble.trees))
        members = artifact.ensemble.member_probas(X, n_members)
        scores = [
            RiskScore(
                change_id=rec.id,
                probability=float(p),
                model_version=artifact.version,
                uncertainty=mutual_information(members[i]),
            )
            for i, (rec, p) in enumerate(zip(records, probs))
        ]
        with self._write_lock:
            with open(self._scores_path, "a", encoding="utf-8") as fh:
                for s in scores:
                    fh.write(json.dumps(s.to_dict(), sort_keys=True))
                    fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())
            with open(self._window_path, "a", encoding="utf-8") as fh:
                for rec in records:
                    fh.write(rec.to_json())
                    fh.write("\n")
        self.queue.enqueue_batch(scores, self.config.review_m, now)
        return scores

    # -- drift ----------------------------------------------------------------

    def _current_window(self) -> List[ChangeRequest]:
        if not os.path.exists(self._window_path):
            return []
        window = load_corpus(self._window_path)
        return window[-self.config.window_cap:]

    def drift_check(self, now: Optional[int] = None) -> Optional[drift_mod.DriftReport]:
        """KS-compare the current window against the model's reference window.

        Raises the retrain alarm (a deduplicated retrain_requested event)
        when d_final crosses the threshold. Returns None when the current
        window is still empty.
        """
        artifact = self._artifact
        if artifact is None:
            raise NoActiveModel("no active model")
        current = self._current_window()
        if not current:
            return None
        now = int(time.time()) if now is None else now
        cur_X = encode_batch(current, artifact.profiles, artifact.schema)
        ref_X = artifact.reference_X
        ref_ds = Dataset(
            X=ref_X,
            y=np.zeros(len(ref_X), dtype=np.int8),
            w=np.ones(len(ref_X)),
            ts=np.zeros(len(ref_X), dtype=np.int64),
            schema=artifact.schema,
        )
        cur_ds = Dataset(
            X=cur_X,
            y=np.zeros(len(cur_X), dtype=np.int8),
            w=np.ones(len(cur_X)),
            ts=np.zeros(len(cur_X), dtype=np.int64),
            schema=artifact.schema,
        )
        report = drift_mod.weighted_drift(
            ref_ds,
            cur_ds,
            artifact.ensemble.feature_importances,
            threshold=self.config.drift_threshold,
            pred_probs=(
                artifact.ensemble.predict_proba(ref_X),
                artifact.ensemble.predict_proba(cur_X),
            ),
            computed_at=now,
        )
        with self._write_lock:
            with open(self._drift_path, "w", encoding="utf-8") as fh:
                json.dump(report.to_dict(), fh)
        if report.alarm and not self._pending_retrain:
            self.events.append("retrain_requested", {"reason": "drift_alarm"})
            self._pending_retrain = True
        return report

    def latest_drift(self) -> Optional[drift_mod.DriftReport]:
        if not os.path.exists(self._drift_path):
            return None
        with open(self._drift_path, "r", encoding="utf-8") as fh:
            return drift_mod.DriftReport.from_dict(json.load(fh))

    @property
    def pending_retrain(self) -> bool:
        return self._pending_retrain

    # -- verdicts & metrics ---------------------------------------------------

    def record_verdict(self, change_id: str, expert_label: Label, reviewer_id: str,
                       now: Optional[int] = None) -> Verdict:
        now = int(time.time()) if now is None else now
        item = next(
            (it for it in self.queue.items() if it.change_id == change_id), None
        )
        flagged = False
        if item is not None:
            threshold = self._threshold_for(item.risk_score.model_version)
            flagged = item.risk_score.probability >= threshold
        verdict = Verdict(
            change_id=change_id,
            expert_label=expert_label,
            reviewer_id=reviewer_id,
            decided_at=now,
            model_flagged=flagged,
        )
        self.queue.record_verdict(verdict)
        return verdict

    def _threshold_for(self, version: str) -> float:
        artifact = self._artifact
        if artifact is not None and artifact.version == version:
            return artifact.operating_threshold
        return self.registry.load(version).operating_threshold

    def metrics_snapshot(self) -> Dict:
        verdicts = self.queue.verdicts()
        agreement = man_machine_agreement(verdicts)
        snapshot = {
            "active_version": self._artifact.version if self._artifact else None,
            "model_metrics": dict(self._artifact.metrics) if self._artifact else {},
            "operating_threshold": (
                self._artifact.operating_threshold if self._artifact else None
            ),
            "man_machine_agreement": agreement,
            "n_verdicts": len(verdicts),
            "n_pending_reviews": len(self.queue.pending()),
            "pending_retrain": self._pending_retrain,
            "monthly": self.monthly_series(),
        }
        return snapshot

    def monthly_series(self) -> List[Dict]:
        path = os.path.join(self.config.data_dir, "monthly.csv")
        if not os.path.exists(path):
            return []
        with open(path, newline="", encoding="utf-8") as fh:
            rows = []
            for row in csv.DictReader(fh):
                parsed: Dict = {}
                for k, v in row.items():
                    if v == "":
                        parsed[k] = None
                    else:
                        try:
                            parsed[k] = float(v) if "." in v or "e" in v else int(v)
                        except ValueError:
                            parsed[k] = v
                rows.append(parsed)
            return rows
