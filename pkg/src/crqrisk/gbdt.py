"""Gradient-boosted decision trees with second-order (Newton) boosting.

Binary logistic loss only. Splits are exact greedy over sorted unique
values; missing values are routed to the gain-maximizing side at each
split (learned default direction), so no imputation is needed for the
boosted model. A plain logistic-regression baseline is included for
comparison; it requires imputed inputs.

Determinism: training has no random component (exact splits, no
subsampling), so equal inputs give bit-equal models. Equal-gain splits
break ties toward the lowest feature index, then the lowest threshold,
then routing missing values left.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .domain import Dataset, FeatureVector
from .errors import (
    EmptyDataset,
    MissingValuesPresent,
    SchemaMismatch,
    SingleClassDataset,
    TooManyMembers,
)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def logistic_grad_hess(p: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Per-sample gradient and hessian of weighted logistic loss at probability p."""
    g = w * (p - y)
    h = w * p * (1.0 - p)
    return g, h


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    """Newton-optimal leaf value -G / (H + lambda)."""
    return -G / (H + reg_lambda)


def split_gain(GL, HL, GR, HR, reg_lambda, gamma):
    return 0.5 * (
        GL * GL / (HL + reg_lambda)
        + GR * GR / (HR + reg_lambda)
        - (GL + GR) ** 2 / (HL + HR + reg_lambda)
    ) - gamma


@dataclass
class TreeNode:
    """Internal node (feature/threshold/default direction) or leaf (weight)."""

    feature_index: int = -1
    threshold: float = 0.0
    default_left: bool = True
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight}
        return {
            "feature_index": self.feature_index,
            "threshold": self.threshold,
            "default_left": self.default_left,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeNode":
        if "weight" in d:
            return cls(weight=float(d["weight"]))
        return cls(
            feature_index=int(d["feature_index"]),
            threshold=float(d["threshold"]),
            default_left=bool(d["default_left"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


def _tree_predict(root: TreeNode, X: np.ndarray) -> np.ndarray:
    """Raw leaf weights for every row (vectorized routing)."""
    out = np.empty(len(X))
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if node.is_leaf:
            out[idx] = node.weight
            continue
        col = X[idx, node.feature_index]
        miss = np.isnan(col)
        go_left = np.where(miss, node.default_left, col < node.threshold)
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 200
    max_depth: int = 5
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_hessian: float = 1.0
    seed: int = 0  # kept for interface symmetry; training is deterministic

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0 or self.min_child_hessian < 0:
            raise ValueError("regularizers must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "reg_lambda": self.reg_lambda,
            "gamma": self.gamma,
            "min_child_hessian": self.min_child_hessian,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls().to_dict()})


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    default_left: bool


def _best_split_for_feature(
    col: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_hessian: float,
) -> Optional[Tuple[float, float, bool]]:
    """(gain, threshold, default_left) of the best split on one feature, or None."""
    miss = np.isnan(col)
    vals = col[~miss]
    if vals.size < 2:
        return None
    order = np.argsort(vals, kind="stable")
    v = vals[order]
    gs = g[~miss][order]
    hs = h[~miss][order]
    cg = np.cumsum(gs)
    ch = np.cumsum(hs)
    cut = np.nonzero(v[:-1] < v[1:])[0]
    if cut.size == 0:
        return None
    thresholds = 0.5 * (v[cut] + v[cut + 1])
    G_miss = float(g[miss].sum())
    H_miss = float(h[miss].sum())
    G_all = float(g.sum())
    H_all = float(h.sum())

    best = None
    GL0 = cg[cut]
    HL0 = ch[cut]
    for default_left in (True, False):
        GL = GL0 + G_miss if default_left else GL0
        HL = HL0 + H_miss if default_left else HL0
        GR = G_all - GL
        HR = H_all - HL
        ok = (HL >= min_child_hessian) & (HR >= min_child_hessian)
        if not ok.any():
            continue
        gains = np.where(ok, split_gain(GL, HL, GR, HR, reg_lambda, gamma), -np.inf)
        j = int(np.argmax(gains))  # first max == lowest threshold
        cand = (float(gains[j]), float(thresholds[j]), default_left)
        if best is None or cand[0] > best[0]:
            best = cand
    return best


def _build_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    cfg: TrainConfig,
    gain_by_feature: np.ndarray,
) -> TreeNode:
    def build(idx: np.ndarray, depth: int) -> TreeNode:
        Gn = float(g[idx].sum())
        Hn = float(h[idx].sum())
        if depth >= cfg.max_depth or idx.size < 2:
            return TreeNode(weight=leaf_weight(Gn, Hn, cfg.reg_lambda))
        best: Optional[_Split] = None
        for f in range(X.shape[1]):
            found = _best_split_for_feature(
                X[idx, f], g[idx], h[idx], cfg.reg_lambda, cfg.gamma, cfg.min_child_hessian
            )
            if found is None:
                continue
            gain, threshold, default_left = found
            if best is None or gain > best.gain:
                best = _Split(gain, f, threshold, default_left)
        if best is None or best.gain <= 0.0:
            return TreeNode(weight=leaf_weight(Gn, Hn, cfg.reg_lambda))
        gain_by_feature[best.feature] += best.gain
        col = X[idx, best.feature]
        miss = np.isnan(col)
        go_left = np.where(miss, best.default_left, col < best.threshold)
        return TreeNode(
            feature_index=best.feature,
            threshold=best.threshold,
            default_left=best.default_left,
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    return build(np.arange(len(X)), 0)


@dataclass
class Ensemble:
    """Additive boosted-tree model: sigmoid(base + lr * sum of leaf weights)."""

    base_score: float
    trees: List[TreeNode]
    config: TrainConfig
    feature_importances: np.ndarray
    schema_version: str = "v1"

    def raw_contributions(self, X: np.ndarray) -> np.ndarray:
        """(n, n_trees) matrix of per-tree leaf weights (before learning rate)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_importances):
            raise SchemaMismatch(
                f"model was trained on {len(self.feature_importances)} features, "
                f"got {X.shape[1]}"
            )
        out = np.empty((len(X), len(self.trees)))
        for t, tree in enumerate(self.trees):
            out[:, t] = _tree_predict(tree, X)
        return out

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        margin = np.full(len(X), self.base_score)
        if self.trees:
            margin = margin + self.config.learning_rate * self.raw_contributions(X).sum(axis=1)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.predict_margin(X))

    def predict_proba_one(self, x: Union[FeatureVector, np.ndarray]) -> float:
        arr = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
        return float(self.predict_proba(arr[None, :])[0])

    def member_probas(
        self, X: np.ndarray, n_members: int, mode: str = "prefix"
    ) -> np.ndarray:
        """(n, n_members) member probabilities for uncertainty estimation.

        "prefix" (default): member j is the ensemble truncated at
        ceil(j * n_trees / n_members) trees (virtual ensemble); the last
        member equals predict_proba. "per_tree" treats each selected tree's
        single contribution on top of the base score as one member.
        """
        if mode not in ("prefix", "per_tree"):
            raise ValueError(f"unknown member mode {mode!r}")
        M = len(self.trees)
        if n_members < 1 or n_members > M:
            raise TooManyMembers(f"n_members {n_members} outside 1..{M}")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        contribs = self.raw_contributions(X)
        idx = [math.ceil((j + 1) * M / n_members) - 1 for j in range(n_members)]
        if mode == "prefix":
            cum = np.cumsum(contribs, axis=1)
            margins = self.base_score + self.config.learning_rate * cum[:, idx]
        else:
            margins = self.base_score + self.config.learning_rate * contribs[:, idx]
        return sigmoid(margins)

    def staged_probas(self, x: Union[FeatureVector, np.ndarray], n_members: int) -> List[float]:
        arr = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
        return [float(p) for p in self.member_probas(arr[None, :], n_members)[0]]

    def importances_by_name(self, names: Sequence[str]) -> Dict[str, float]:
        return {name: float(v) for name, v in zip(names, self.feature_importances)}

    def to_dict(self) -> dict:
        return {
            "format": "crqrisk-gbdt-1",
            "base_score": self.base_score,
            "config": self.config.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
            "feature_importances": [float(v) for v in self.feature_importances],
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Ensemble":
        return cls(
            base_score=float(d["base_score"]),
            trees=[TreeNode.from_dict(t) for t in d["trees"]],
            config=TrainConfig.from_dict(d["config"]),
            feature_importances=np.asarray(d["feature_importances"], dtype=np.float64),
            schema_version=d["schema_version"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Ensemble":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(ds: Dataset, cfg: TrainConfig = TrainConfig()) -> Ensemble:
    """Stagewise Newton fit of the weighted logistic loss."""
    if len(ds) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    y = ds.y.astype(np.float64)
    if y.min() == y.max():
        raise SingleClassDataset("training data must contain both classes")
    w = ds.w
    X = ds.X
    prior = float(np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6))
    base_score = math.log(prior / (1.0 - prior))
    margin = np.full(len(ds), base_score)
    trees: List[TreeNode] = []
    gain_by_feature = np.zeros(X.shape[1])
    for _ in range(cfg.n_trees):
        p = sigmoid(margin)
        g, h = logistic_grad_hess(p, y, w)
        tree = _build_tree(X, g, h, cfg, gain_by_feature)
        trees.append(tree)
        margin = margin + cfg.learning_rate * _tree_predict(tree, X)
    total_gain = gain_by_feature.sum()
    importances = gain_by_feature / total_gain if total_gain > 0 else gain_by_feature
    version = ds.schema.version if ds.schema is not None else "v1"
    return Ensemble(
        base_score=base_score,
        trees=trees,
        config=cfg,
        feature_importances=importances,
        schema_version=version,
    )


class GradientBoostedClassifier:
    """Thin sklearn-style wrapper around train/predict for pipeline use."""

    def __init__(
        self,
        n_trees: int = 200,
        max_depth: int = 5,
        learning_rate: float = 0.1,
        reg_lambda: float = 1.0,
        gamma: float = 0.0,
        min_child_hessian: float = 1.0,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.gamma = gamma
        self.min_child_hessian = min_child_hessian
        self.seed = seed
        self.ensemble_: Optional[Ensemble] = None

    def get_params(self, deep: bool = True) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "reg_lambda": self.reg_lambda,
            "gamma": self.gamma,
            "min_child_hessian": self.min_child_hessian,
            "seed": self.seed,
        }

    def set_params(self, **params) -> "GradientBoostedClassifier":
        for k, v in params.items():
            if k not in self.get_params():
                raise ValueError(f"unknown parameter {k!r}")
            setattr(self, k, v)
        return self

    def _config(self) -> TrainConfig:
        return TrainConfig(**self.get_params())

    def fit(self, X, y, sample_weight=None, timestamps=None) -> "GradientBoostedClassifier":
        X = np.asarray(X, dtype=np.float64)
        n = len(X)
        ds = Dataset(
            X=X,
            y=np.asarray(y),
            w=np.ones(n) if sample_weight is None else np.asarray(sample_weight),
            ts=np.zeros(n, dtype=np.int64) if timestamps is None else np.asarray(timestamps),
        )
        self.ensemble_ = train(ds, self._config())
        return self

    def predict_proba(self, X) -> np.ndarray:
        if self.ensemble_ is None:
            raise EmptyDataset("classifier is not fitted")
        p1 = self.ensemble_.predict_proba(X)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= threshold).astype(np.int8)

    @property
    def feature_importances_(self) -> np.ndarray:
        if self.ensemble_ is None:
            raise EmptyDataset("classifier is not fitted")
        return self.ensemble_.feature_importances


@dataclass
class LogisticBaseline:
    """L2-regularized logistic regression fit by full-batch gradient descent."""

    l2: float = 1e-3
    epochs: int = 300
    step: float = 0.5

    coef_: Optional[np.ndarray] = None
    intercept_: float = 0.0
    _mean: Optional[np.ndarray] = None
    _scale: Optional[np.ndarray] = None

    def fit(self, X, y, sample_weight=None) -> "LogisticBaseline":
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise MissingValuesPresent("logistic baseline requires imputed inputs")
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(len(X)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        w = w / w.sum()
        self._mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        self._scale = scale
        Z = (X - self._mean) / self._scale
        prior = float(np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6))
        self.intercept_ = math.log(prior / (1.0 - prior))
        self.coef_ = np.zeros(X.shape[1])
        for _ in range(self.epochs):
            p = sigmoid(Z @ self.coef_ + self.intercept_)
            err = w * (p - y)
            grad_c = Z.T @ err + self.l2 * self.coef_
            grad_b = float(err.sum())
            self.coef_ -= self.step * grad_c
            self.intercept_ -= self.step * grad_b
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if np.isnan(X).any():
            raise MissingValuesPresent("logistic baseline requires imputed inputs")
        Z = (np.atleast_2d(X) - self._mean) / self._scale
        return sigmoid(Z @ self.coef_ + self.intercept_)


def train_logistic_baseline(
    ds: Dataset, l2: float = 1e-3, epochs: int = 300, step: float = 0.5
) -> LogisticBaseline:
    model = LogisticBaseline(l2=l2, epochs=epochs, step=step)
    return model.fit(ds.X, ds.y, sample_weight=ds.w)
