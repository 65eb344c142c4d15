import math

import numpy as np
import pytest

from crqrisk.domain import Dataset
from crqrisk.errors import (
    EmptyDataset,
    MissingValuesPresent,
    SchemaMismatch,
    SingleClassDataset,
    TooManyMembers,
)
from crqrisk.gbdt import (
    Ensemble,
    GradientBoostedClassifier,
    LogisticBaseline,
    TrainConfig,
    TreeNode,
    _best_split_for_feature,
    _build_tree,
    leaf_weight,
    logistic_grad_hess,
    sigmoid,
    split_gain,
    train,
    train_logistic_baseline,
)


def _dataset(X, y, w=None):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int8)
    n = len(X)
    return Dataset(
        X=X,
        y=y,
        w=np.ones(n) if w is None else np.asarray(w, dtype=float),
        ts=np.arange(n, dtype=np.int64),
    )


# -- closed-form pieces -----------------------------------------------------

def test_sigmoid_values():
    assert sigmoid(0.0) == pytest.approx(0.5)
    assert sigmoid(1.0) == pytest.approx(0.7311, abs=1e-4)
    assert sigmoid(-1.0) == pytest.approx(1.0 - sigmoid(1.0), abs=1e-12)


def test_leaf_weight_zero_gradient_gives_zero():
    assert leaf_weight(0.0, 5.0, 1.0) == 0.0


def test_leaf_weight_worked_example():
    # G = -2, H = 1, lambda = 1  ->  w* = 2 / 2 = 1.0
    assert leaf_weight(-2.0, 1.0, 1.0) == 1.0


def test_leaf_weight_shrinks_with_lambda():
    small = abs(leaf_weight(-2.0, 1.0, 100.0))
    assert small < abs(leaf_weight(-2.0, 1.0, 1.0))
    assert small == pytest.approx(2.0 / 101.0)


def test_split_gain_symmetric_halves():
    # identical halves give zero structural gain, so gain == -gamma
    assert split_gain(1.0, 2.0, 1.0, 2.0, 0.0, 0.0) == pytest.approx(0.0)
    assert split_gain(1.0, 2.0, 1.0, 2.0, 0.0, 0.3) == pytest.approx(-0.3)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        m = float(rng.normal())
        y = float(rng.integers(0, 2))
        w = float(rng.uniform(0.5, 2.0))

        def loss(margin):
            return w * (math.log1p(math.exp(margin)) - y * margin)

        eps = 1e-6
        g_num = (loss(m + eps) - loss(m - eps)) / (2 * eps)
        # second differences need a larger step to beat cancellation noise
        e2 = 1e-4
        h_num = (loss(m + e2) - 2 * loss(m) + loss(m - e2)) / (e2 * e2)
        p = sigmoid(np.array([m]))
        g, h = logistic_grad_hess(p, np.array([y]), np.array([w]))
        assert g[0] == pytest.approx(g_num, rel=1e-4, abs=1e-6)
        assert h[0] == pytest.approx(h_num, rel=1e-3, abs=1e-6)


# -- split-finding oracle ---------------------------------------------------

def brute_force_split(X, g, h, reg_lambda, gamma, min_child_hessian):
    """Enumerate every (feature, threshold, default direction) combination.

    Candidate order mirrors the greedy search: features ascending, within a
    feature the missing-go-left direction first, thresholds ascending; a
    later candidate wins only on strictly larger gain.
    """
    best = None
    n, k = X.shape
    for f in range(k):
        col = X[:, f]
        miss = np.isnan(col)
        vals = sorted(set(col[~miss]))
        G_miss = sum(g[miss])
        H_miss = sum(h[miss])
        for default_left in (True, False):
            for lo, hi in zip(vals[:-1], vals[1:]):
                t = 0.5 * (lo + hi)
                left = ~miss & (col < t)
                GL, HL = sum(g[left]), sum(h[left])
                if default_left:
                    GL, HL = GL + G_miss, HL + H_miss
                GR, HR = sum(g) - GL, sum(h) - HL
                if HL < min_child_hessian or HR < min_child_hessian:
                    continue
                gain = split_gain(GL, HL, GR, HR, reg_lambda, gamma)
                if best is None or gain > best[0]:
                    best = (gain, f, t, default_left)
    return best


def _dyadic(rng, size, lo, hi):
    # multiples of 1/8, so every partial sum is exact in binary float
    return rng.integers(lo * 8, hi * 8 + 1, size=size) / 8.0


def test_split_matches_brute_force_oracle():
    rng = np.random.default_rng(12)
    for trial in range(60):
        n = int(rng.integers(4, 65))
        k = int(rng.integers(1, 5))
        X = rng.integers(0, 6, size=(n, k)).astype(float)
        X[rng.random((n, k)) < 0.15] = np.nan
        g = _dyadic(rng, n, -2, 2)
        h = _dyadic(rng, n, 0, 2) + 0.125
        lam = float(rng.choice([0.0, 1.0]))
        mch = float(rng.choice([0.0, 0.5]))
        expected = brute_force_split(X, g, h, lam, 0.0, mch)
        tree = _build_tree(X, g, h, TrainConfig(
            n_trees=1, max_depth=1, reg_lambda=lam, min_child_hessian=mch,
        ), np.zeros(k))
        if expected is None or expected[0] <= 0.0:
            assert tree.is_leaf
            continue
        _, f, t, default_left = expected
        assert not tree.is_leaf, f"trial {trial}: expected a split"
        assert tree.feature_index == f
        assert tree.threshold == t
        assert tree.default_left == default_left


def test_single_feature_split_threshold_is_midpoint():
    col = np.array([1.0, 1.0, 4.0, 4.0])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    h = np.ones(4)
    gain, threshold, default_left = _best_split_for_feature(col, g, h, 0.0, 0.0, 0.0)
    assert threshold == 2.5
    assert gain > 0


def test_constant_feature_yields_no_split():
    col = np.ones(5)
    assert _best_split_for_feature(col, np.ones(5), np.ones(5), 1.0, 0.0, 0.0) is None


def test_learned_default_direction_routes_missing_with_signal():
    # missing rows share the positive-class gradient sign, so the learned
    # default must send them to the positive leaf
    col = np.array([np.nan, np.nan, 1.0, 1.0, 5.0, 5.0])
    g = np.array([1.0, 1.0, -1.0, -1.0, 1.0, 1.0])
    h = np.ones(6)
    gain, threshold, default_left = _best_split_for_feature(col, g, h, 0.0, 0.0, 0.0)
    assert default_left is False  # positives live on the right of 3.0
    assert threshold == 3.0


# -- training behaviour -----------------------------------------------------

@pytest.fixture(scope="module")
def toy_ds():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(400, 5))
    logits = 2.0 * X[:, 0] - 1.5 * X[:, 2]
    y = (rng.random(400) < sigmoid(logits)).astype(np.int8)
    return _dataset(X, y)


def test_base_score_is_prior_log_odds(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=1))
    prior = toy_ds.y.mean()
    assert model.base_score == pytest.approx(math.log(prior / (1 - prior)))


def test_training_loss_monotone_nonincreasing(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=30, max_depth=3))
    y = toy_ds.y.astype(float)
    margin = np.full(len(toy_ds), model.base_score)
    losses = [np.mean(np.logaddexp(0, margin) - y * margin)]
    contribs = model.raw_contributions(toy_ds.X)
    for t in range(30):
        margin = margin + model.config.learning_rate * contribs[:, t]
        losses.append(np.mean(np.logaddexp(0, margin) - y * margin))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_huge_lambda_collapses_to_prior(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=5, reg_lambda=1e9))
    probs = model.predict_proba(toy_ds.X)
    assert np.allclose(probs, toy_ds.y.mean(), atol=1e-3)


def test_importances_normalized_and_unused_features_zero(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=20, max_depth=3))
    imp = model.feature_importances
    assert imp.sum() == pytest.approx(1.0)
    assert np.all(imp >= 0)
    # signal features dominate the noise columns
    assert imp[0] + imp[2] > 0.8


def test_unused_feature_has_zero_importance():
    X = np.column_stack([np.arange(40.0), np.zeros(40)])
    y = (np.arange(40) >= 20).astype(np.int8)
    model = train(_dataset(X, y), TrainConfig(n_trees=5, max_depth=2))
    assert model.feature_importances[1] == 0.0


def test_serialization_round_trip_is_prediction_exact(tmp_path, toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=15, max_depth=4))
    path = tmp_path / "model.json"
    model.save(path)
    loaded = Ensemble.load(path)
    assert np.array_equal(loaded.predict_proba(toy_ds.X), model.predict_proba(toy_ds.X))
    assert loaded.config == model.config
    assert np.array_equal(loaded.feature_importances, model.feature_importances)


def test_sample_weights_shift_predictions():
    X = np.array([[0.0], [0.0]])
    y = np.array([0, 1], dtype=np.int8)
    heavy_pos = train(_dataset(X, y, w=[1.0, 9.0]), TrainConfig(n_trees=1))
    heavy_neg = train(_dataset(X, y, w=[9.0, 1.0]), TrainConfig(n_trees=1))
    assert heavy_pos.predict_proba(X)[0] > 0.5 > heavy_neg.predict_proba(X)[0]


def test_single_class_rejected():
    with pytest.raises(SingleClassDataset):
        train(_dataset(np.zeros((4, 1)), [1, 1, 1, 1]))


def test_empty_dataset_rejected():
    ds = _dataset(np.zeros((0, 2)), [])
    with pytest.raises(EmptyDataset):
        train(ds)


def test_schema_mismatch_on_wrong_width(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=2))
    with pytest.raises(SchemaMismatch):
        model.predict_proba(np.zeros((3, 4)))


# -- staged / member predictions -------------------------------------------

def _stump(weight):
    return TreeNode(weight=weight)


def _manual_ensemble(weights, lr=1.0, base=0.0):
    return Ensemble(
        base_score=base,
        trees=[_stump(w) for w in weights],
        config=TrainConfig(n_trees=len(weights), learning_rate=lr),
        feature_importances=np.array([1.0]),
    )


def test_staged_probas_accumulate_trees():
    model = _manual_ensemble([1.0, 1.0])
    staged = model.staged_probas(np.array([0.0]), 2)
    assert staged == pytest.approx([float(sigmoid(1.0)), float(sigmoid(2.0))])


def test_last_member_equals_full_prediction(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=12, max_depth=3))
    members = model.member_probas(toy_ds.X[:20], n_members=4)
    assert members.shape == (20, 4)
    # summation order differs (cumsum vs sum), so allow last-ulp wiggle
    assert np.allclose(members[:, -1], model.predict_proba(toy_ds.X[:20]), atol=1e-12, rtol=0)


def test_member_count_bounds(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=3))
    with pytest.raises(TooManyMembers):
        model.member_probas(toy_ds.X[:2], n_members=4)
    with pytest.raises(TooManyMembers):
        model.member_probas(toy_ds.X[:2], n_members=0)


def test_per_tree_members_differ_from_prefix(toy_ds):
    model = train(toy_ds, TrainConfig(n_trees=10, max_depth=3))
    prefix = model.member_probas(toy_ds.X[:5], 5, mode="prefix")
    per_tree = model.member_probas(toy_ds.X[:5], 5, mode="per_tree")
    assert not np.array_equal(prefix, per_tree)


# -- estimator wrapper ------------------------------------------------------

def test_classifier_params_round_trip():
    clf = GradientBoostedClassifier(n_trees=7, max_depth=2)
    params = clf.get_params()
    clone = GradientBoostedClassifier().set_params(**params)
    assert clone.get_params() == params
    with pytest.raises(ValueError):
        clf.set_params(bogus=1)


def test_classifier_fit_predict(toy_ds):
    clf = GradientBoostedClassifier(n_trees=30, max_depth=3)
    clf.fit(toy_ds.X, toy_ds.y)
    proba = clf.predict_proba(toy_ds.X)
    assert proba.shape == (len(toy_ds), 2)
    assert np.allclose(proba.sum(axis=1), 1.0)
    acc = np.mean(clf.predict(toy_ds.X) == toy_ds.y)
    assert acc > 0.8


def test_unfitted_classifier_raises():
    with pytest.raises(EmptyDataset):
        GradientBoostedClassifier().predict_proba(np.zeros((1, 2)))


# -- logistic baseline ------------------------------------------------------

def test_baseline_learns_separable_data():
    rng = np.random.default_rng(4)
    X = np.concatenate([rng.normal(-2, 0.5, 100), rng.normal(2, 0.5, 100)])[:, None]
    y = np.array([0] * 100 + [1] * 100, dtype=np.int8)
    model = train_logistic_baseline(_dataset(X, y))
    probs = model.predict_proba(X)
    assert np.mean((probs >= 0.5) == y) > 0.98


def test_baseline_zero_epochs_predicts_prior():
    X = np.arange(10.0)[:, None]
    y = np.array([0] * 7 + [1] * 3, dtype=np.int8)
    model = LogisticBaseline(epochs=0).fit(X, y)
    assert np.allclose(model.predict_proba(X), 0.3)


def test_baseline_rejects_missing_values():
    X = np.array([[1.0], [np.nan]])
    with pytest.raises(MissingValuesPresent):
        LogisticBaseline().fit(X, np.array([0, 1]))


def test_trees_beat_linear_model_on_xor():
    rng = np.random.default_rng(6)
    X = rng.integers(0, 2, size=(400, 2)).astype(float)
    y = (X[:, 0] != X[:, 1]).astype(np.int8)
    X_noisy = X + rng.normal(0, 0.05, X.shape)
    ds = _dataset(X_noisy, y)
    gbdt = train(ds, TrainConfig(n_trees=30, max_depth=3))
    linear = train_logistic_baseline(ds)
    acc_gbdt = np.mean((gbdt.predict_proba(X_noisy) >= 0.5) == y)
    acc_lin = np.mean((linear.predict_proba(X_noisy) >= 0.5) == y)
    assert acc_gbdt > 0.95
    assert acc_lin < 0.7
