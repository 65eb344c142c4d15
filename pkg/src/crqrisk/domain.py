"""Core record types shared by every stage of the pipeline.

All types are immutable after construction and therefore safe to share
across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyQaMap, MissingId, UnknownRiskLevel, ValidationError
from .uncertainty import UncertaintyBreakdown


class RiskLevel(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class Label(str, Enum):
    NORMAL = "normal"
    RISKY = "risky"


RISK_ORDINAL = {RiskLevel.LOW: 0, RiskLevel.MEDIUM: 1, RiskLevel.HIGH: 2}


@dataclass(frozen=True)
class ChangeRequest:
    """One raw change record as submitted by a requester."""

    id: str
    submitted_at: int  # UTC epoch seconds
    summary: str
    description: str
    qa_answers: Mapping[str, str]
    team_id: str
    declared_risk: RiskLevel
    declared_importance: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "submitted_at": self.submitted_at,
            "summary": self.summary,
            "description": self.description,
            "qa_answers": dict(self.qa_answers),
            "team_id": self.team_id,
            "declared_risk": self.declared_risk.value,
            "declared_importance": self.declared_importance,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChangeRequest":
        try:
            risk = RiskLevel(d["declared_risk"])
        except ValueError:
            raise UnknownRiskLevel(f"unknown declared_risk {d.get('declared_risk')!r}")
        except KeyError:
            raise ValidationError("declared_risk missing")
        try:
            return cls(
                id=str(d["id"]),
                submitted_at=int(d["submitted_at"]),
                summary=str(d["summary"]),
                description=str(d["description"]),
                qa_answers=dict(d["qa_answers"]),
                team_id=str(d["team_id"]),
                declared_risk=risk,
                declared_importance=int(d["declared_importance"]),
            )
        except KeyError as exc:
            raise ValidationError(f"field {exc.args[0]!r} missing")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def validate_change(raw: ChangeRequest) -> ChangeRequest:
    """Return the record unchanged if all invariants hold, else raise.

    Raised errors name the violated field: MissingId, UnknownRiskLevel,
    EmptyQaMap, ValidationError (importance out of 1..5).
    """
    if not raw.id:
        raise MissingId("change id must be nonempty")
    if not isinstance(raw.declared_risk, RiskLevel):
        raise UnknownRiskLevel(f"unknown declared_risk {raw.declared_risk!r}")
    if not raw.qa_answers:
        raise EmptyQaMap(f"change {raw.id}: qa_answers must be nonempty")
    if not 1 <= int(raw.declared_importance) <= 5:
        raise ValidationError(
            f"change {raw.id}: declared_importance {raw.declared_importance} outside 1..5"
        )
    return raw


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length numeric encoding with an explicit missingness mask."""

    values: np.ndarray
    missing_mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        mask = np.asarray(self.missing_mask, dtype=bool)
        if values.shape != mask.shape or values.ndim != 1:
            raise ValidationError("values and missing_mask must be equal-length 1-D")
        if not np.all(np.isfinite(values[~mask])):
            raise ValidationError("non-missing feature values must be finite")
        values = values.copy()
        values[mask] = np.nan
        values.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)


@dataclass(frozen=True)
class Dataset:
    """Labeled, weighted, timestamped feature matrix.

    ``X`` stores NaN at masked positions; ``mask`` is derived from it.
    """

    X: np.ndarray  # (n, k) float64, NaN == missing
    y: np.ndarray  # (n,) int8, 1 == risky
    w: np.ndarray  # (n,) float64, strictly positive
    ts: np.ndarray  # (n,) int64 epoch seconds
    schema: "FeatureSchema" = None  # type: ignore[assignment]

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int8)
        w = np.asarray(self.w, dtype=np.float64)
        ts = np.asarray(self.ts, dtype=np.int64)
        n = len(X)
        if not (len(y) == len(w) == len(ts) == n):
            raise ValidationError("dataset columns must have equal length")
        if X.ndim != 2:
            raise ValidationError("X must be 2-D")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValidationError("sample weights must be positive and finite")
        if np.any(np.isinf(X)):
            raise ValidationError("non-missing feature values must be finite")
        for name, arr in (("X", X), ("y", y), ("w", w), ("ts", ts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def row(self, i: int) -> FeatureVector:
        values = self.X[i].copy()
        mask = np.isnan(values)
        values[mask] = 0.0
        return FeatureVector(values=values, missing_mask=mask)

    def replace(self, **kwargs) -> "Dataset":
        fields = {"X": self.X, "y": self.y, "w": self.w, "ts": self.ts, "schema": self.schema}
        fields.update(kwargs)
        return Dataset(**fields)


@dataclass(frozen=True)
class RiskScore:
    """Calibrated risk probability for one change, with its uncertainty."""

    change_id: str
    probability: float
    model_version: str
    uncertainty: UncertaintyBreakdown

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValidationError(f"probability {self.probability} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "change_id": self.change_id,
            "probability": self.probability,
            "model_version": self.model_version,
            "uncertainty": self.uncertainty.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RiskScore":
        return cls(
            change_id=d["change_id"],
            probability=float(d["probability"]),
            model_version=d["model_version"],
            uncertainty=UncertaintyBreakdown.from_dict(d["uncertainty"]),
        )
