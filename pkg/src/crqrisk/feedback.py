"""Review-queue lifecycle and retraining-set assembly.

All queue state lives in an append-only line-delimited JSON event log with
monotonically increasing sequence numbers; replaying the log reconstructs
the queue exactly. Retraining weights combine exponential recency decay
(half-life) with a multiplier for rows carrying an expert verdict, whose
label overrides the historical one.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import Dataset, Label, RiskScore
from .errors import DuplicateVerdict, NoPendingItem, ValidationError
from .uncertainty import rank_top_m

DEFAULT_HALF_LIFE_S = 90 * 86400
DEFAULT_TTL_S = 14 * 86400

PENDING = "pending"
REVIEWED = "reviewed"
EXPIRED = "expired"


@dataclass(frozen=True)
class ReviewItem:
    change_id: str
    risk_score: RiskScore
    enqueued_at: int
    status: str = PENDING

    def to_dict(self) -> dict:
        return {
            "change_id": self.change_id,
            "risk_score": self.risk_score.to_dict(),
            "enqueued_at": self.enqueued_at,
            "status": self.status,
        }


@dataclass(frozen=True)
class Verdict:
    change_id: str
    expert_label: Label
    reviewer_id: str
    decided_at: int
    model_flagged: bool  # model probability >= operating threshold at scoring time

    @property
    def agrees_with_model(self) -> bool:
        return (self.expert_label is Label.RISKY) == self.model_flagged

    def to_dict(self) -> dict:
        return {
            "change_id": self.change_id,
            "expert_label": self.expert_label.value,
            "reviewer_id": self.reviewer_id,
            "decided_at": self.decided_at,
            "model_flagged": self.model_flagged,
            "agrees_with_model": self.agrees_with_model,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Verdict":
        return cls(
            change_id=d["change_id"],
            expert_label=Label(d["expert_label"]),
            reviewer_id=d["reviewer_id"],
            decided_at=int(d["decided_at"]),
            model_flagged=bool(d["model_flagged"]),
        )


class EventLog:
    """Append-only JSONL event log with one serialized writer."""

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._seq = 0
        if os.path.exists(path):
            for event in self.read_all():
                self._seq = max(self._seq, event["seq"])

    def append(self, kind: str, payload: Mapping) -> dict:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "kind": kind, "payload": dict(payload)}
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True))
                fh.write("\n")
                fh.flush()
                os.fsync(fh.fileno())
            return event

    def read_all(self) -> List[dict]:
        if not os.path.exists(self.path):
            return []
        events = []
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events


class ReviewQueue:
    """Queue state derived from (and persisted through) the event log."""

    def __init__(self, log: EventLog, ttl_s: int = DEFAULT_TTL_S):
        self.log = log
        self.ttl_s = ttl_s
        self._items: Dict[str, ReviewItem] = {}
        self._verdicts: Dict[str, Verdict] = {}
        self._lock = threading.Lock()
        self._replay()

    def _replay(self) -> None:
        for event in self.log.read_all():
            kind, payload = event["kind"], event["payload"]
            if kind == "enqueue":
                self._apply_enqueue(
                    RiskScore.from_dict(payload["risk_score"]), payload["enqueued_at"]
                )
            elif kind == "verdict":
                self._apply_verdict(Verdict.from_dict(payload))
            elif kind == "expire":
                self._apply_expire(payload["change_id"])

    def _apply_enqueue(self, score: RiskScore, now: int) -> bool:
        existing = self._items.get(score.change_id)
        if existing is not None and existing.status == PENDING:
            return False
        if score.change_id in self._verdicts:
            return False
        self._items[score.change_id] = ReviewItem(
            change_id=score.change_id, risk_score=score, enqueued_at=now
        )
        return True

    def _apply_verdict(self, verdict: Verdict) -> None:
        item = self._items.get(verdict.change_id)
        if verdict.change_id in self._verdicts:
            raise DuplicateVerdict(f"change {verdict.change_id} already has a verdict")
        if item is None or item.status != PENDING:
            raise NoPendingItem(f"no pending review for change {verdict.change_id}")
        self._items[verdict.change_id] = ReviewItem(
            change_id=item.change_id,
            risk_score=item.risk_score,
            enqueued_at=item.enqueued_at,
            status=REVIEWED,
        )
        self._verdicts[verdict.change_id] = verdict

    def _apply_expire(self, change_id: str) -> None:
        item = self._items.get(change_id)
        if item is not None and item.status == PENDING:
            self._items[change_id] = ReviewItem(
                change_id=item.change_id,
                risk_score=item.risk_score,
                enqueued_at=item.enqueued_at,
                status=EXPIRED,
            )

    def enqueue_batch(self, scores: Sequence[RiskScore], m: int, now: int) -> List[ReviewItem]:
        """Make exactly the top-m knowledge-uncertainty selection pending.

        Re-enqueueing an already-pending (or already-reviewed) change is a
        no-op.
        """
        by_id = {s.change_id: s for s in scores}
        selected = rank_top_m(
            [(s.change_id, s.uncertainty) for s in scores], m
        )
        created: List[ReviewItem] = []
        with self._lock:
            for change_id in selected:
                if self._apply_enqueue(by_id[change_id], now):
                    self.log.append(
                        "enqueue",
                        {"risk_score": by_id[change_id].to_dict(), "enqueued_at": now},
                    )
                    created.append(self._items[change_id])
        return created

    def record_verdict(self, verdict: Verdict) -> ReviewItem:
        with self._lock:
            self._apply_verdict(verdict)
            self.log.append("verdict", verdict.to_dict())
            return self._items[verdict.change_id]

    def expire_stale(self, now: int) -> List[str]:
        expired = []
        with self._lock:
            for change_id, item in list(self._items.items()):
                if item.status == PENDING and now - item.enqueued_at > self.ttl_s:
                    self._apply_expire(change_id)
                    self.log.append("expire", {"change_id": change_id})
                    expired.append(change_id)
        return expired

    def items(self, status: Optional[str] = None) -> List[ReviewItem]:
        items = list(self._items.values())
        if status is not None:
            items = [it for it in items if it.status == status]
        items.sort(
            key=lambda it: (-it.risk_score.uncertainty.knowledge, it.change_id)
        )
        return items

    def pending(self) -> List[ReviewItem]:
        return self.items(PENDING)

    def verdicts(self) -> List[Verdict]:
        return sorted(self._verdicts.values(), key=lambda v: v.decided_at)


def assemble_training_set(
    history: Dataset,
    ids: Sequence[str],
    verdicts: Iterable[Verdict],
    now: int,
    half_life_s: int = DEFAULT_HALF_LIFE_S,
    feedback_multiplier: float = 3.0,
) -> Dataset:
    """Recency- and feedback-weighted training set.

    Row weight is 2^(-age / half_life); rows with an expert verdict get
    their label replaced by the expert's and their weight multiplied by
    ``feedback_multiplier``.
    """
    if half_life_s <= 0:
        raise ValidationError("half_life must be positive")
    if feedback_multiplier < 1:
        raise ValidationError("feedback_multiplier must be >= 1")
    if len(ids) != len(history):
        raise ValidationError("ids must align with history rows")
    age = np.maximum(0, now - history.ts).astype(np.float64)
    w = np.power(2.0, -age / half_life_s)
    y = np.array(history.y)
    index = {cid: i for i, cid in enumerate(ids)}
    for verdict in verdicts:
        i = index.get(verdict.change_id)
        if i is None:
            continue
        y[i] = 1 if verdict.expert_label is Label.RISKY else 0
        w[i] *= feedback_multiplier
    return history.replace(y=y, w=w)
