"""Feature derivation: team profiles, text severity, encoding, imputation.

Encoding is a pure function of (record, profiles, schema); the same inputs
always produce the same vector. The severity signal comes from a shipped
word list rather than any learned text model, so scores are deterministic
and auditable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .domain import RISK_ORDINAL, ChangeRequest, Dataset, FeatureVector, Label
from .errors import AllMissingFeature, SchemaMismatch, ValidationError

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


def load_lexicon(path: Optional[str] = None) -> Tuple[str, ...]:
    """Severity word list, one term per line; the packaged list has 20 terms."""
    if path is None:
        text = resources.files("crqrisk.data").joinpath("severity_lexicon.txt").read_text()
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    terms = tuple(t.strip().lower() for t in text.splitlines() if t.strip())
    if not terms:
        raise ValidationError("severity lexicon is empty")
    return terms


DEFAULT_LEXICON = load_lexicon()


def severity_score(text: str, lexicon: Sequence[str] = DEFAULT_LEXICON) -> float:
    """Fraction of lexicon terms present in the text, clamped to [0, 1]."""
    tokens = set(_TOKEN_RE.findall(text.lower()))
    hits = sum(1 for term in lexicon if term in tokens)
    return min(1.0, hits / len(lexicon))


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # numeric | ordinal | categorical_onehot | derived


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list plus a version tag.

    Feature names double as extraction rules:
      declared_risk / declared_importance  -> ordinal encodings
      summary_severity / description_severity -> lexicon scores
      team_risky_rate -> smoothed historical rate (derived)
      qa:<question>=<answer> -> one-hot, masked missing when unanswered
    """

    features: Tuple[FeatureSpec, ...]
    version: str

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")

    @property
    def size(self) -> int:
        return len(self.features)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        return cls(
            features=tuple(FeatureSpec(f["name"], f["kind"]) for f in d["features"]),
            version=d["version"],
        )


def default_schema(qa_questions: Mapping[str, Sequence[str]], version: str = "v1") -> FeatureSchema:
    """Schema over the standard record fields plus one-hot Q&A features.

    For binary questions only the first listed answer gets a column; for
    wider ones every answer does.
    """
    feats = [
        FeatureSpec("declared_risk", "ordinal"),
        FeatureSpec("declared_importance", "ordinal"),
        FeatureSpec("summary_severity", "numeric"),
        FeatureSpec("description_severity", "numeric"),
        FeatureSpec("team_risky_rate", "derived"),
    ]
    for question in sorted(qa_questions):
        answers = qa_questions[question]
        cols = answers[:1] if len(answers) == 2 else answers
        for answer in cols:
            feats.append(FeatureSpec(f"qa:{question}={answer}", "categorical_onehot"))
    return FeatureSchema(features=tuple(feats), version=version)


@dataclass(frozen=True)
class TeamProfile:
    team_id: str
    n_changes: int
    n_risky: int
    risky_rate: float


class TeamProfileBook:
    """Per-team smoothed risky rates with a global fallback for unseen teams."""

    def __init__(self, profiles: Dict[str, TeamProfile], global_rate: float, alpha: float):
        self.profiles = profiles
        self.global_rate = global_rate
        self.alpha = alpha

    def rate_for(self, team_id: str) -> float:
        prof = self.profiles.get(team_id)
        return prof.risky_rate if prof is not None else self.global_rate

    def __contains__(self, team_id: str) -> bool:
        return team_id in self.profiles

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "global_rate": self.global_rate,
            "teams": {
                t: {"n_changes": p.n_changes, "n_risky": p.n_risky, "risky_rate": p.risky_rate}
                for t, p in self.profiles.items()
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TeamProfileBook":
        profiles = {
            t: TeamProfile(t, int(p["n_changes"]), int(p["n_risky"]), float(p["risky_rate"]))
            for t, p in d["teams"].items()
        }
        return cls(profiles, float(d["global_rate"]), float(d["alpha"]))


def build_team_profiles(
    history: Iterable[Tuple[ChangeRequest, Label]], alpha: float = 1.0
) -> TeamProfileBook:
    """Laplace-smoothed risky rate per team: (risky + a) / (changes + 2a).

    Teams absent from history fall back to the global smoothed rate, never
    to zero, so brand-new teams are not rewarded for lacking history.
    """
    if alpha <= 0:
        raise ValidationError("smoothing alpha must be > 0")
    counts: Dict[str, List[int]] = {}
    total = 0
    risky = 0
    for change, label in history:
        c = counts.setdefault(change.team_id, [0, 0])
        c[0] += 1
        total += 1
        if label is Label.RISKY:
            c[1] += 1
            risky += 1
    profiles = {
        team: TeamProfile(team, n, r, (r + alpha) / (n + 2 * alpha))
        for team, (n, r) in counts.items()
    }
    global_rate = (risky + alpha) / (total + 2 * alpha)
    return TeamProfileBook(profiles, global_rate, alpha)


_IMPORTANCE_SCALE = {1: 0.0, 2: 0.25, 3: 0.5, 4: 0.75, 5: 1.0}


def _extract(
    change: ChangeRequest,
    spec: FeatureSpec,
    profiles: TeamProfileBook,
    lexicon: Sequence[str],
) -> Tuple[float, bool]:
    name = spec.name
    if name == "declared_risk":
        return float(RISK_ORDINAL[change.declared_risk]), False
    if name == "declared_importance":
        return float(change.declared_importance), False
    if name == "summary_severity":
        return severity_score(change.summary, lexicon), False
    if name == "description_severity":
        return severity_score(change.description, lexicon), False
    if name == "team_risky_rate":
        return profiles.rate_for(change.team_id), False
    if name.startswith("qa:"):
        question, _, answer = name[3:].partition("=")
        given = change.qa_answers.get(question)
        if given is None:
            return 0.0, True
        return (1.0 if given == answer else 0.0), False
    raise SchemaMismatch(f"no extraction rule for feature {name!r}")


def encode(
    change: ChangeRequest,
    profiles: TeamProfileBook,
    schema: FeatureSchema,
    lexicon: Sequence[str] = DEFAULT_LEXICON,
) -> FeatureVector:
    """Encode one record against the schema; unanswered Q&A become missing."""
    values = np.zeros(schema.size)
    mask = np.zeros(schema.size, dtype=bool)
    for i, spec in enumerate(schema.features):
        values[i], mask[i] = _extract(change, spec, profiles, lexicon)
    return FeatureVector(values=values, missing_mask=mask)


def encode_batch(
    changes: Sequence[ChangeRequest],
    profiles: TeamProfileBook,
    schema: FeatureSchema,
    lexicon: Sequence[str] = DEFAULT_LEXICON,
) -> np.ndarray:
    """(n, k) matrix with NaN at missing positions."""
    X = np.empty((len(changes), schema.size))
    for r, change in enumerate(changes):
        for c, spec in enumerate(schema.features):
            v, miss = _extract(change, spec, profiles, lexicon)
            X[r, c] = np.nan if miss else v
    return X


def make_dataset(
    changes: Sequence[ChangeRequest],
    labels: Sequence[Label],
    profiles: TeamProfileBook,
    schema: FeatureSchema,
    weights: Optional[Sequence[float]] = None,
    lexicon: Sequence[str] = DEFAULT_LEXICON,
) -> Dataset:
    if len(changes) != len(labels):
        raise ValidationError("changes and labels must have equal length")
    X = encode_batch(changes, profiles, schema, lexicon)
    y = np.fromiter((1 if lb is Label.RISKY else 0 for lb in labels), dtype=np.int8, count=len(labels))
    w = np.ones(len(changes)) if weights is None else np.asarray(weights, dtype=np.float64)
    ts = np.fromiter((c.submitted_at for c in changes), dtype=np.int64, count=len(changes))
    return Dataset(X=X, y=y, w=w, ts=ts, schema=schema)


def impute(ds: Dataset, strategy: str = "mean") -> Dataset:
    """Fill missing values column-wise by the observed mean or median."""
    if strategy not in ("mean", "median"):
        raise ValidationError(f"unknown imputation strategy {strategy!r}")
    X = np.array(ds.X)
    mask = np.isnan(X)
    if not mask.any():
        return ds
    for j in range(X.shape[1]):
        col_mask = mask[:, j]
        if not col_mask.any():
            continue
        observed = X[~col_mask, j]
        if observed.size == 0:
            name = ds.schema.names[j] if ds.schema is not None else f"column {j}"
            raise AllMissingFeature(name)
        fill = float(np.mean(observed)) if strategy == "mean" else float(np.median(observed))
        X[col_mask, j] = fill
    return ds.replace(X=X)
