"""Model metrics (TPR / FPR / positive likelihood ratio) and stream-level
business metrics (major issues per 10k requests, man-machine agreement)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import SingleClassValidation, ZeroCrq


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int
    operating_threshold: float

    @property
    def tpr(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)

    @property
    def plr(self) -> float:
        if self.fpr == 0.0:
            return float("inf") if self.tpr > 0 else 0.0
        return self.tpr / self.fpr


def confusion_counts(scores, labels, threshold: float) -> ConfusionCounts:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pred = scores >= threshold
    pos = labels == 1
    if not pos.any() or pos.all():
        raise SingleClassValidation("validation labels must contain both classes")
    return ConfusionCounts(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
        operating_threshold=threshold,
    )


def classification_metrics(scores, labels, threshold: float) -> Tuple[float, float, float]:
    """(TPR, FPR, PLR) at the given operating threshold."""
    c = confusion_counts(scores, labels, threshold)
    return c.tpr, c.fpr, c.plr


def select_threshold(scores, labels, min_tpr: float = 0.70) -> float:
    """Threshold maximizing PLR subject to TPR >= min_tpr on this fold.

    Candidates are the observed scores (flagging everything at or above
    each). Falls back to the threshold with the highest TPR when the
    constraint is unattainable.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) == 1
    if not labels.any() or labels.all():
        raise SingleClassValidation("validation labels must contain both classes")
    candidates = np.unique(scores)  # ascending
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    # flagged(t) = scores >= t; counts via cumulative sums over candidates
    pos_sorted = np.sort(scores[labels])
    neg_sorted = np.sort(scores[~labels])
    tp = n_pos - np.searchsorted(pos_sorted, candidates, side="left")
    fp = n_neg - np.searchsorted(neg_sorted, candidates, side="left")
    tpr = tp / n_pos
    fpr = fp / n_neg
    with np.errstate(divide="ignore", invalid="ignore"):
        plr = np.where(fpr > 0, tpr / fpr, np.where(tpr > 0, np.inf, 0.0))
    feasible = tpr >= min_tpr
    if feasible.any():
        masked = np.where(feasible, plr, -np.inf)
        best = np.nonzero(masked == masked.max())[0]
    else:
        best = np.nonzero(tpr == tpr.max())[0]
    return float(candidates[best[-1]])  # prefer the highest qualifying threshold


def major_issues_per_10k(n_major: int, n_crq: int) -> float:
    """Majors normalized to a 10,000-request volume."""
    if n_crq <= 0:
        raise ZeroCrq("n_crq must be positive")
    return 10_000.0 * n_major / n_crq


def man_machine_agreement(verdicts: Iterable) -> Optional[float]:
    """Among reviewed items the model flagged high-risk, the fraction the
    expert confirmed as risky. None (not 0) when nothing qualifies."""
    flagged = [v for v in verdicts if v.model_flagged]
    if not flagged:
        return None
    from .domain import Label

    agreed = sum(1 for v in flagged if v.expert_label is Label.RISKY)
    return agreed / len(flagged)
