import numpy as np
import pytest

from crqrisk.corpus import QA_QUESTIONS, GeneratorConfig, generate
from crqrisk.domain import ChangeRequest, Label, RiskLevel
from crqrisk.features import build_team_profiles, default_schema, make_dataset


def make_change(**overrides) -> ChangeRequest:
    base = dict(
        id="crq-1",
        submitted_at=1_700_000_000,
        summary="routine update",
        description="deploy configuration change",
        qa_answers={"prev_implemented": "yes", "tested": "full"},
        team_id="team-001",
        declared_risk=RiskLevel.LOW,
        declared_importance=3,
    )
    base.update(overrides)
    return ChangeRequest(**base)


@pytest.fixture(scope="session")
def small_corpus():
    """2,000-record interaction corpus at 5% prevalence."""
    cfg = GeneratorConfig(n_records=2000, risky_prevalence=0.05, seed=11)
    return generate(cfg)


@pytest.fixture(scope="session")
def small_dataset(small_corpus):
    records, labels = small_corpus
    profiles = build_team_profiles(zip(records, labels))
    schema = default_schema(QA_QUESTIONS)
    return make_dataset(records, labels, profiles, schema)
