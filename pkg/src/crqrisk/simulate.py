"""Closed-loop simulation: score -> expert feedback -> drift -> retrain.

Plays a generated month-by-month stream through the in-process service
core (no network), auto-answering review requests from ground truth, and
records business metrics per month. With a drift month set, the stream's
feature/label relationship changes at that month's first record (severity
mean shift plus a category swap on a load-bearing Q&A answer), so the
serving model degrades until the drift alarm triggers retraining.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from typing import Dict, List, Optional

import numpy as np

from .corpus import DriftInjection, GeneratorConfig, generate
from .domain import Label
from .errors import ValidationError
from .evaluation import classification_metrics, major_issues_per_10k, man_machine_agreement
from .feedback import Verdict
from .service import RiskService, ServiceConfig

HISTORY_MONTHS = 1
MONTH_SECONDS = 30 * 86400


@dataclass(frozen=True)
class SimulationConfig:
    months: int = 7
    drift_at_month: Optional[int] = None
    seed: int = 7
    month_size: int = 3000
    prevalence: float = 0.02
    mechanism: str = "interaction"
    cadence_months: int = 2
    review_m: int = 40

    def __post_init__(self):
        if self.months < 1:
            raise ValidationError("months must be >= 1")
        if self.drift_at_month is not None and not 1 <= self.drift_at_month <= self.months:
            raise ValidationError("drift_at_month must lie within the simulated months")


def run_simulation(sim: SimulationConfig, data_dir: str,
                   service_config: Optional[ServiceConfig] = None) -> List[Dict]:
    total_months = sim.months + HISTORY_MONTHS
    n = total_months * sim.month_size
    gen = GeneratorConfig(
        n_records=n,
        risky_prevalence=sim.prevalence,
        seed=sim.seed,
        risk_mechanism=sim.mechanism,
        ts_step=max(1, MONTH_SECONDS // sim.month_size),
    )
    drifts = []
    if sim.drift_at_month is not None:
        onset = (HISTORY_MONTHS + sim.drift_at_month - 1) * sim.month_size
        drifts = [
            DriftInjection("description_severity", onset, "mean_shift", 2.0),
            DriftInjection("qa:prev_implemented", onset, "category_swap"),
            DriftInjection("declared_risk", onset, "category_swap"),
        ]
    records, labels = generate(gen, drifts)

    cfg = service_config or ServiceConfig()
    # drift-monitor only the latest month of traffic, not everything scored
    # since the last activation
    cfg = replace(
        cfg,
        data_dir=data_dir,
        review_m=sim.review_m,
        seed=sim.seed,
        window_cap=sim.month_size,
    )
    service = RiskService(cfg)

    def month_slice(i: int):  # i = 0 .. total_months-1
        lo = i * sim.month_size
        hi = lo + sim.month_size
        return records[lo:hi], labels[lo:hi]

    history_r: List = []
    history_l: List = []
    for i in range(HISTORY_MONTHS):
        r, l = month_slice(i)
        history_r.extend(r)
        history_l.extend(l)
    service.ingest_labeled(history_r, history_l)
    t0 = history_r[-1].submitted_at + 1
    service.trigger_retrain("manual", force=True, now=t0)

    truth = {rec.id: lb for rec, lb in zip(records, labels)}
    rows: List[Dict] = []
    for month in range(1, sim.months + 1):
        batch, batch_labels = month_slice(HISTORY_MONTHS + month - 1)
        now = batch[-1].submitted_at + 1
        scores = service.score_batch(batch, now=now)
        version = scores[0].model_version
        threshold = service._threshold_for(version)
        y = np.array([1 if lb is Label.RISKY else 0 for lb in batch_labels])
        probs = np.array([s.probability for s in scores])
        flagged = probs >= threshold
        majors = int(np.sum((y == 1) & ~flagged))
        per_10k = major_issues_per_10k(majors, len(batch))
        tpr = fpr = None
        if 0 < y.sum() < len(y):
            tpr, fpr, _ = classification_metrics(probs, y, threshold)

        # the change-management team reviews every model-flagged change;
        # their acceptance is ground truth
        flag_verdicts = [
            Verdict(
                change_id=s.change_id,
                expert_label=truth[s.change_id],
                reviewer_id="sim-cab",
                decided_at=now,
                model_flagged=True,
            )
            for s, fl in zip(scores, flagged) if fl
        ]
        agreement = man_machine_agreement(flag_verdicts)

        # uncertainty-ranked queue items get expert verdicts that feed back
        # into the next training set
        for item in service.queue.pending():
            service.record_verdict(
                item.change_id, truth[item.change_id], "sim-expert", now=now
            )

        report = service.drift_check(now=now)
        alarm = bool(report.alarm) if report is not None else False

        service.ingest_labeled(batch, batch_labels)
        retrained = ""
        if alarm:
            result = service.trigger_retrain("drift_alarm", force=True, now=now)
            retrained = f"drift_alarm:{result['status']}"
        elif month % sim.cadence_months == 0:
            result = service.trigger_retrain("scheduled", force=False, now=now)
            retrained = f"scheduled:{result['status']}"

        rows.append(
            {
                "month": month,
                "n_crq": len(batch),
                "majors_per_10k": round(per_10k, 4),
                "man_machine_agreement": (
                    round(agreement, 4) if agreement is not None else None
                ),
                "d_final": round(report.d_final, 4) if report is not None else None,
                "drift_alarm": alarm,
                "retrained": retrained,
                "model_version": version,
                "tpr": round(tpr, 4) if tpr is not None else None,
                "fpr": round(fpr, 4) if fpr is not None else None,
            }
        )
    write_monthly_csv(os.path.join(data_dir, "monthly.csv"), rows)
    return rows


def write_monthly_csv(path: str, rows: List[Dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})
