"""Synthetic change-request streams and line-delimited corpus I/O.

The generator reproduces the production regime at desk scale: extreme
class imbalance (default 0.09% risky), team-level risk propensities, a
text severity signal, and optional planted drift. Marginal distributions
are a modeling choice; only the prevalence and the feature categories are
taken from the real system's description.

Drift injections transform feature values for records at or after the
onset index, *after* labels have been assigned from the undrifted values.
Records before the onset are bit-identical to a no-drift run with the
same seed, and the feature-to-label relationship genuinely changes at the
onset (the joint distribution shifts, not just the marginals).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .domain import ChangeRequest, Label, RiskLevel, validate_change
from .errors import InvalidConfig, ParseError, ValidationError
from .features import DEFAULT_LEXICON

QA_QUESTIONS: Dict[str, Tuple[str, ...]] = {
    "prev_implemented": ("no", "yes"),
    "rollback_plan": ("no", "yes"),
    "tested": ("full", "partial", "none"),
    "change_window": ("business_hours", "off_hours"),
}

_RISK_VALUES = (RiskLevel.LOW, RiskLevel.MEDIUM, RiskLevel.HIGH)
_FILLER = ("update", "deploy", "configuration", "service", "release", "change")


@dataclass(frozen=True)
class GeneratorConfig:
    n_records: int
    risky_prevalence: float = 0.0009
    n_teams: int = 25
    seed: int = 0
    risk_mechanism: str = "interaction"  # or "linear"
    start_ts: int = 1_609_459_200  # 2021-01-01T00:00:00Z
    ts_step: int = 60

    def __post_init__(self):
        if self.n_records <= 0:
            raise InvalidConfig("n_records must be positive")
        if not 0.0 < self.risky_prevalence < 1.0:
            raise InvalidConfig("risky_prevalence must lie in (0, 1)")
        if self.n_teams <= 0:
            raise InvalidConfig("n_teams must be positive")
        if self.risk_mechanism not in ("linear", "interaction"):
            raise InvalidConfig(f"unknown risk_mechanism {self.risk_mechanism!r}")


@dataclass(frozen=True)
class DriftInjection:
    feature_name: str
    onset_index: int
    kind: str  # mean_shift | scale_shift | category_swap
    magnitude: float = 0.0

    def __post_init__(self):
        if self.kind not in ("mean_shift", "scale_shift", "category_swap"):
            raise InvalidConfig(f"unknown drift kind {self.kind!r}")
        if not math.isfinite(self.magnitude):
            raise InvalidConfig("magnitude must be finite")


def _calibrate_intercept(raw: np.ndarray, prevalence: float) -> float:
    """Intercept b such that mean(sigmoid(raw + b)) == prevalence."""

    def mean_p(b):
        return float(np.mean(1.0 / (1.0 + np.exp(-(raw + b)))))

    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_p(mid) < prevalence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class _Draws:
    """All per-record raw draws, before drift and text rendering."""

    def __init__(self, config: GeneratorConfig):
        rng = np.random.default_rng(config.seed)
        n = config.n_records
        self.team_latents = rng.random(config.n_teams)
        self.team_idx = rng.integers(0, config.n_teams, n)
        self.risk_cat = rng.choice(3, n, p=[0.6, 0.3, 0.1])
        self.importance = rng.choice([1, 2, 3, 4, 5], n, p=[0.1, 0.2, 0.4, 0.2, 0.1])
        self.z_summary = rng.standard_normal(n)
        self.z_desc = rng.standard_normal(n)
        self.prev_no = rng.random(n) < 0.35
        self.rollback_no = rng.random(n) < 0.20
        self.tested = rng.choice(3, n, p=[0.5, 0.3, 0.2])  # full, partial, none
        self.window_off = rng.random(n) < 0.40
        self.rollback_answered = rng.random(n) >= 0.10
        self.tested_answered = rng.random(n) >= 0.15
        self.window_answered = rng.random(n) >= 0.10
        self.label_u = rng.random(n)


def _raw_score(cfg: GeneratorConfig, d: _Draws) -> np.ndarray:
    team_latent = d.team_latents[d.team_idx]
    if cfg.risk_mechanism == "linear":
        return (
            1.6 * d.z_desc
            + 0.5 * d.z_summary
            + 0.4 * (d.importance - 3)
            + 3.0 * (team_latent - 0.5)
            + 0.6 * d.risk_cat
            + 0.7 * (d.tested == 2)
            + 0.4 * d.prev_no
        )
    # interaction: two conjunctions sharing features with opposite signs, so
    # marginal effects wash out for a linear model but stay tree-learnable
    conj_low = (d.risk_cat == 0) & (team_latent > 0.7) & d.prev_no
    conj_high = (d.risk_cat == 2) & (d.tested == 2) & ~d.prev_no
    return (
        7.5 * conj_low
        + 6.5 * conj_high
        + 0.5 * d.z_desc
        + 0.3 * (d.importance - 3)
    )


def _severity_words(hits: int, offset: int, lexicon: Sequence[str]) -> List[str]:
    k = len(lexicon)
    return [lexicon[(offset + i) % k] for i in range(min(hits, k))]


_CATEGORICAL_DRIFT_TARGETS = {
    "qa:prev_implemented": "prev_no",
    "qa:rollback_plan": "rollback_no",
    "qa:change_window": "window_off",
    "declared_risk": "risk_cat",
}


def _apply_drift(d: _Draws, inj: DriftInjection, n: int) -> None:
    if inj.onset_index >= n or inj.onset_index < 0:
        raise InvalidConfig(f"onset_index {inj.onset_index} outside corpus of {n}")
    sl = slice(inj.onset_index, n)
    if inj.feature_name in ("description_severity", "summary_severity"):
        arr = d.z_desc if inj.feature_name == "description_severity" else d.z_summary
        if inj.kind == "mean_shift":
            arr[sl] = arr[sl] + inj.magnitude
        elif inj.kind == "scale_shift":
            arr[sl] = arr[sl] * inj.magnitude
        else:
            raise InvalidConfig("category_swap does not apply to numeric severity")
    elif inj.feature_name == "declared_importance":
        if inj.kind != "mean_shift":
            raise InvalidConfig(f"{inj.kind} not supported for declared_importance")
        shift = int(round(inj.magnitude * 1.1))  # ~1 importance step per pooled sd
        d.importance[sl] = np.clip(d.importance[sl] + shift, 1, 5)
    elif inj.feature_name in _CATEGORICAL_DRIFT_TARGETS:
        if inj.kind != "category_swap":
            raise InvalidConfig(f"{inj.feature_name} only supports category_swap")
        attr = _CATEGORICAL_DRIFT_TARGETS[inj.feature_name]
        arr = getattr(d, attr)
        if attr == "risk_cat":
            lo, hi = arr[sl] == 0, arr[sl] == 2
            arr[sl] = np.where(lo, 2, np.where(hi, 0, arr[sl]))
        else:
            arr[sl] = ~arr[sl]
    else:
        raise InvalidConfig(f"no drift rule for feature {inj.feature_name!r}")


def generate(
    config: GeneratorConfig,
    drifts: Sequence[DriftInjection] = (),
    lexicon: Sequence[str] = DEFAULT_LEXICON,
) -> Tuple[List[ChangeRequest], List[Label]]:
    """Deterministic synthetic stream with the configured prevalence.

    The label mechanism is calibrated so the expected risky fraction equals
    ``risky_prevalence`` exactly; realized counts are binomial around it.
    """
    d = _Draws(config)
    n = config.n_records
    raw = _raw_score(config, d)
    intercept = _calibrate_intercept(raw, config.risky_prevalence)
    p = 1.0 / (1.0 + np.exp(-(raw + intercept)))
    labels_arr = d.label_u < p

    for inj in drifts:
        _apply_drift(d, inj, n)

    hits_desc = np.clip(np.rint(6.0 + 2.0 * d.z_desc), 0, len(lexicon)).astype(int)
    hits_sum = np.clip(np.rint(3.0 + 1.5 * d.z_summary), 0, len(lexicon)).astype(int)

    tested_names = ("full", "partial", "none")
    records: List[ChangeRequest] = []
    labels: List[Label] = []
    for i in range(n):
        qa = {"prev_implemented": "no" if d.prev_no[i] else "yes"}
        if d.rollback_answered[i]:
            qa["rollback_plan"] = "no" if d.rollback_no[i] else "yes"
        if d.tested_answered[i]:
            qa["tested"] = tested_names[d.tested[i]]
        if d.window_answered[i]:
            qa["change_window"] = "off_hours" if d.window_off[i] else "business_hours"
        summary = " ".join(
            _severity_words(hits_sum[i], (i + 7) % len(lexicon), lexicon) + ["change", "request"]
        )
        description = " ".join(
            list(_FILLER) + _severity_words(hits_desc[i], i % len(lexicon), lexicon)
        )
        records.append(
            ChangeRequest(
                id=f"crq-{i:08d}",
                submitted_at=config.start_ts + i * config.ts_step,
                summary=summary,
                description=description,
                qa_answers=qa,
                team_id=f"team-{d.team_idx[i]:03d}",
                declared_risk=_RISK_VALUES[d.risk_cat[i]],
                declared_importance=int(d.importance[i]),
            )
        )
        labels.append(Label.RISKY if labels_arr[i] else Label.NORMAL)
    return records, labels


def save_corpus(path, records: Sequence[ChangeRequest]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")


def load_corpus(path) -> List[ChangeRequest]:
    """Read a line-delimited corpus; every record is validated on the way in."""
    records: List[ChangeRequest] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {lineno}: invalid JSON ({exc.msg})", lineno)
            records.append(validate_change(ChangeRequest.from_dict(payload)))
    return records


def save_labels(path, records: Sequence[ChangeRequest], labels: Sequence[Label]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label"])
        for rec, label in zip(records, labels):
            writer.writerow([rec.id, label.value])


def load_labels(path) -> Dict[str, Label]:
    out: Dict[str, Label] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["id", "label"]:
            raise ParseError(f"expected header id,label, got {reader.fieldnames}")
        for row in reader:
            try:
                out[row["id"]] = Label(row["label"])
            except ValueError:
                raise ParseError(f"unknown label {row['label']!r} for id {row['id']}")
    return out
