import json

import numpy as np
import pytest

from crqrisk.domain import (
    ChangeRequest,
    Dataset,
    FeatureVector,
    Label,
    RiskLevel,
    validate_change,
)
from crqrisk.errors import EmptyQaMap, MissingId, UnknownRiskLevel, ValidationError

from conftest import make_change


def test_validate_well_formed_is_identity():
    change = make_change()
    assert validate_change(change) is change


def test_validate_rejects_unknown_risk_level():
    with pytest.raises(UnknownRiskLevel):
        ChangeRequest.from_dict(dict(make_change().to_dict(), declared_risk="urgent"))
    with pytest.raises(UnknownRiskLevel):
        validate_change(make_change(declared_risk="urgent"))


def test_validate_rejects_empty_id():
    with pytest.raises(MissingId):
        validate_change(make_change(id=""))


def test_validate_rejects_empty_qa_map():
    with pytest.raises(EmptyQaMap):
        validate_change(make_change(qa_answers={}))


@pytest.mark.parametrize("importance", [0, 6, -1])
def test_validate_rejects_out_of_scale_importance(importance):
    with pytest.raises(ValidationError):
        validate_change(make_change(declared_importance=importance))


def test_change_request_json_round_trip():
    change = make_change(qa_answers={"tested": "partial", "rollback_plan": "no"})
    recovered = ChangeRequest.from_dict(json.loads(change.to_json()))
    assert recovered == change


def test_feature_vector_requires_equal_lengths():
    with pytest.raises(ValidationError):
        FeatureVector(values=np.array([1.0, 2.0]), missing_mask=np.array([False]))


def test_feature_vector_rejects_nonfinite_observed():
    with pytest.raises(ValidationError):
        FeatureVector(values=np.array([np.inf]), missing_mask=np.array([False]))
    # masked positions may hold anything
    fv = FeatureVector(values=np.array([np.inf]), missing_mask=np.array([True]))
    assert np.isnan(fv.values[0])


def _dataset_kwargs(n=3, k=2):
    return dict(
        X=np.zeros((n, k)),
        y=np.zeros(n, dtype=np.int8),
        w=np.ones(n),
        ts=np.arange(n, dtype=np.int64),
    )


def test_dataset_rejects_mismatched_lengths():
    kwargs = _dataset_kwargs()
    kwargs["y"] = np.zeros(2, dtype=np.int8)
    with pytest.raises(ValidationError):
        Dataset(**kwargs)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_dataset_rejects_nonpositive_weights(bad):
    kwargs = _dataset_kwargs()
    kwargs["w"] = np.array([1.0, bad, 1.0])
    with pytest.raises(ValidationError):
        Dataset(**kwargs)


def test_dataset_mask_tracks_nan():
    kwargs = _dataset_kwargs()
    X = kwargs["X"].copy()
    X[1, 1] = np.nan
    kwargs["X"] = X
    ds = Dataset(**kwargs)
    assert ds.mask[1, 1] and ds.mask.sum() == 1


def test_risk_score_probability_bounds():
    from crqrisk.domain import RiskScore
    from crqrisk.uncertainty import mutual_information

    u = mutual_information([0.5])
    with pytest.raises(ValidationError):
        RiskScore(change_id="c", probability=1.5, model_version="v", uncertainty=u)
