"""Concept-drift detection via importance-weighted two-sample KS statistics.

Per feature, the exact KS statistic D_i compares the reference window
(training snapshot) against the current scoring window. Feature weights
come from the serving model's gain importances and are rescaled to sum to
the feature count, so uniform importances reduce the aggregate to the
plain mean of the D_i and the aggregate stays bounded by max_i D_i.

The joint-distribution definition of drift is monitored through feature
marginals only (labels arrive with delay); optionally the predicted-
probability distribution is appended as one extra monitored series with
weight 1, an extension beyond the per-feature scheme.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import Dataset
from .errors import EmptyDataset, EmptySample, InvalidAlpha, SchemaMismatch

DEFAULT_ALARM_THRESHOLD = 0.15


def ks_statistic(a: Sequence[float], b: Sequence[float]) -> float:
    """Exact two-sample KS statistic: max ECDF gap over all pooled points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    fa = np.searchsorted(a_sorted, pooled, side="right") / a.size
    fb = np.searchsorted(b_sorted, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(alpha: float) -> float:
    """Closed-form c(alpha) = sqrt(-ln(alpha/2) / 2); c(0.05) ~ 1.358."""
    if not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha {alpha} outside (0, 1)")
    return math.sqrt(-math.log(alpha / 2.0) / 2.0)


def ks_reject(D: float, n: int, m: int, alpha: float = 0.05) -> bool:
    """Reject the same-distribution null iff D > c(alpha) * sqrt((n+m)/(n*m))."""
    if n < 1 or m < 1:
        raise EmptySample("sample sizes must be >= 1")
    return D > ks_critical(alpha) * math.sqrt((n + m) / (n * m))


@dataclass(frozen=True)
class FeatureDrift:
    feature_name: str
    statistic: float
    weight: float


@dataclass(frozen=True)
class DriftReport:
    per_feature: Tuple[FeatureDrift, ...]
    d_final: float
    threshold: float
    alarm: bool
    sample_sizes: Tuple[int, int]
    computed_at: int

    def to_dict(self) -> dict:
        return {
            "per_feature": [
                {"feature_name": f.feature_name, "statistic": f.statistic, "weight": f.weight}
                for f in self.per_feature
            ],
            "d_final": self.d_final,
            "threshold": self.threshold,
            "alarm": self.alarm,
            "sample_sizes": list(self.sample_sizes),
            "computed_at": self.computed_at,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DriftReport":
        return cls(
            per_feature=tuple(
                FeatureDrift(f["feature_name"], float(f["statistic"]), float(f["weight"]))
                for f in d["per_feature"]
            ),
            d_final=float(d["d_final"]),
            threshold=float(d["threshold"]),
            alarm=bool(d["alarm"]),
            sample_sizes=(int(d["sample_sizes"][0]), int(d["sample_sizes"][1])),
            computed_at=int(d["computed_at"]),
        )


def weighted_drift(
    ref: Dataset,
    cur: Dataset,
    importances: Sequence[float],
    threshold: float = DEFAULT_ALARM_THRESHOLD,
    feature_names: Optional[Sequence[str]] = None,
    pred_probs: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
    computed_at: Optional[int] = None,
) -> DriftReport:
    """Importance-weighted mean of per-feature KS statistics.

    Missing values are excluded per feature; a feature with no observed
    values in either window contributes D_i = 0. When ``pred_probs`` is
    given, the two predicted-probability samples are appended as one extra
    monitored series with weight 1 (and the divisor grows accordingly).
    """
    if len(ref) == 0 or len(cur) == 0:
        raise EmptyDataset("both windows must be nonempty")
    if ref.X.shape[1] != cur.X.shape[1]:
        raise SchemaMismatch("windows have different feature counts")
    if ref.schema is not None and cur.schema is not None and ref.schema.version != cur.schema.version:
        raise SchemaMismatch(
            f"schema versions differ: {ref.schema.version} vs {cur.schema.version}"
        )
    k = ref.X.shape[1]
    if len(importances) != k:
        raise SchemaMismatch(f"expected {k} importances, got {len(importances)}")
    if feature_names is None:
        feature_names = (
            ref.schema.names if ref.schema is not None else [f"f{i}" for i in range(k)]
        )

    w = np.asarray(importances, dtype=np.float64)
    if np.any(w < 0):
        raise ValueError("importances must be nonnegative")
    total = w.sum()
    w = np.full(k, 1.0) if total == 0 else w * (k / total)

    stats: List[float] = []
    for i in range(k):
        rv = ref.X[:, i]
        cv = cur.X[:, i]
        rv = rv[~np.isnan(rv)]
        cv = cv[~np.isnan(cv)]
        stats.append(0.0 if rv.size == 0 or cv.size == 0 else ks_statistic(rv, cv))

    names = list(feature_names)
    weights = list(w)
    if pred_probs is not None:
        stats.append(ks_statistic(pred_probs[0], pred_probs[1]))
        names.append("__predicted_probability__")
        weights.append(1.0)

    d_final = float(np.dot(weights, stats) / len(stats))
    return DriftReport(
        per_feature=tuple(
            FeatureDrift(name, float(s), float(wi))
            for name, s, wi in zip(names, stats, weights)
        ),
        d_final=d_final,
        threshold=threshold,
        alarm=d_final > threshold,
        sample_sizes=(len(ref), len(cur)),
        computed_at=int(time.time()) if computed_at is None else computed_at,
    )


def check_alarm(report: DriftReport, threshold: Optional[float] = None) -> bool:
    """Alarm iff d_final strictly exceeds the threshold."""
    t = report.threshold if threshold is None else threshold
    return report.d_final > t
