"""Predictive-uncertainty decomposition for ensemble classifiers.

Total uncertainty is the entropy of the averaged member probability;
expected data uncertainty is the average member entropy; their difference
(ensemble disagreement) is the knowledge uncertainty used to rank review
candidates. All entropies are in bits, so every quantity is bounded by 1
for a binary outcome.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import EmptyEnsemble, OutOfRange

_CLAMP = 1e-12


def binary_entropy(p) -> float:
    """Entropy of a Bernoulli(p) outcome in bits, with 0*log0 == 0."""
    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise OutOfRange(f"probability outside [0, 1]: {p!r}")
    q = np.clip(arr, _CLAMP, 1.0 - _CLAMP)
    h = -(q * np.log2(q) + (1.0 - q) * np.log2(1.0 - q))
    h = np.where((arr == 0.0) | (arr == 1.0), 0.0, h)
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class UncertaintyBreakdown:
    total: float
    expected_data: float
    knowledge: float
    n_members: int

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "expected_data": self.expected_data,
            "knowledge": self.knowledge,
            "n_members": self.n_members,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "UncertaintyBreakdown":
        return cls(
            total=float(d["total"]),
            expected_data=float(d["expected_data"]),
            knowledge=float(d["knowledge"]),
            n_members=int(d["n_members"]),
        )


def mutual_information(member_probs: Sequence[float]) -> UncertaintyBreakdown:
    """Decompose ensemble-member probabilities into total / data / knowledge.

    knowledge = H(mean prob) - mean member entropy, clamped at 0 from below
    for numerical noise.
    """
    probs = np.asarray(member_probs, dtype=np.float64)
    if probs.size == 0:
        raise EmptyEnsemble("need at least one ensemble member")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise OutOfRange("member probabilities must lie in [0, 1]")
    total = float(binary_entropy(float(probs.mean())))
    expected_data = float(np.mean(binary_entropy(probs)))
    knowledge = max(0.0, total - expected_data)
    return UncertaintyBreakdown(
        total=total,
        expected_data=expected_data,
        knowledge=knowledge,
        n_members=int(probs.size),
    )


def rank_top_m(
    batch: Iterable[Tuple[str, UncertaintyBreakdown]],
    m: int,
    key: str = "knowledge",
) -> List[str]:
    """Ids of the m most uncertain items, uncertainty descending.

    Ties break by change_id ascending; ``key`` may be "knowledge" (default)
    or "total" for ablation.
    """
    if key not in ("knowledge", "total"):
        raise ValueError(f"unknown ranking key {key!r}")
    if m <= 0:
        return []
    items = sorted(batch, key=lambda it: (-getattr(it[1], key), it[0]))
    return [change_id for change_id, _ in items[:m]]
