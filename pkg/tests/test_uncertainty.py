import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crqrisk.errors import EmptyEnsemble, OutOfRange
from crqrisk.uncertainty import binary_entropy, mutual_information, rank_top_m


def test_entropy_half_is_one_bit():
    assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0])
def test_entropy_degenerate_is_zero(p):
    assert binary_entropy(p) == 0.0


def test_entropy_point_two():
    expected = -(0.2 * math.log2(0.2) + 0.8 * math.log2(0.8))
    assert binary_entropy(0.2) == pytest.approx(expected, abs=1e-12)
    assert binary_entropy(0.2) == pytest.approx(0.7219, abs=1e-4)


def test_entropy_rejects_out_of_range():
    with pytest.raises(OutOfRange):
        binary_entropy(1.2)


def test_identical_members_have_zero_knowledge():
    b = mutual_information([0.5, 0.5])
    assert b.total == pytest.approx(1.0)
    assert b.expected_data == pytest.approx(1.0)
    assert b.knowledge == pytest.approx(0.0, abs=1e-9)


def test_maximal_disagreement():
    b = mutual_information([0.0, 1.0])
    assert b.total == pytest.approx(1.0)
    assert b.expected_data == pytest.approx(0.0)
    assert b.knowledge == pytest.approx(1.0)


def test_worked_decomposition():
    b = mutual_information([0.2, 0.8])
    assert b.total == pytest.approx(1.0, abs=1e-12)
    assert b.expected_data == pytest.approx(binary_entropy(0.2), abs=1e-12)
    assert b.knowledge == pytest.approx(0.2781, abs=1e-4)


def test_empty_ensemble_rejected():
    with pytest.raises(EmptyEnsemble):
        mutual_information([])


@settings(max_examples=300)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=16))
def test_knowledge_nonnegative_and_bounded(probs):
    b = mutual_information(probs)
    assert b.knowledge >= 0.0
    assert 0.0 <= b.expected_data <= b.total + 1e-12
    assert b.total <= 1.0 + 1e-12


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8))
def test_member_permutation_invariance(probs):
    b1 = mutual_information(probs)
    b2 = mutual_information(list(reversed(probs)))
    assert b1.total == pytest.approx(b2.total, abs=1e-12)
    assert b1.knowledge == pytest.approx(b2.knowledge, abs=1e-12)


def test_knowledge_positive_on_disagreement():
    b = mutual_information([0.3, 0.3 + 1e-6])
    assert b.knowledge > 0.0


def _breakdowns(values):
    # synthesize breakdowns with controlled knowledge
    out = []
    for cid, k in values.items():
        out.append((cid, mutual_information([0.5 - k / 2, 0.5 + k / 2])))
    return out


def test_rank_top_m_zero():
    assert rank_top_m(_breakdowns({"a": 0.2}), 0) == []


def test_rank_top_m_orders_by_knowledge():
    batch = _breakdowns({"a": 0.3, "b": 0.1, "c": 0.5})
    assert rank_top_m(batch, 2) == ["c", "a"]


def test_rank_top_m_tie_breaks_by_id():
    batch = _breakdowns({"b": 0.4, "a": 0.4})
    assert rank_top_m(batch, 1) == ["a"]


def test_rank_top_m_caps_at_batch_size():
    batch = _breakdowns({"a": 0.1, "b": 0.2})
    assert len(rank_top_m(batch, 10)) == 2
