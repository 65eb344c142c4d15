"""Minority-class oversampling by synthetic interpolation (SMOTE / ADASYN).

Every synthetic row is a convex combination of a minority row and one of
its k nearest minority neighbors, so each coordinate stays within the
parents' range. ADASYN allocates more synthesis to minority points whose
neighborhoods (in the full dataset) are majority-dominated. Originals are
preserved unchanged; synthesis is deterministic per seed.

Apply to the training fold only — never to validation data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .domain import Dataset
from .errors import MissingValuesPresent, TooFewMinority, ValidationError


@dataclass(frozen=True)
class OversampleConfig:
    method: str = "smote"  # smote | adasyn
    k_neighbors: int = 5
    target_ratio: float = 0.1  # minority/majority after sampling
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("smote", "adasyn"):
            raise ValidationError(f"unknown oversampling method {self.method!r}")
        if self.k_neighbors < 1:
            raise ValidationError("k_neighbors must be >= 1")
        if not 0.0 < self.target_ratio <= 1.0:
            raise ValidationError("target_ratio must lie in (0, 1]")


def _sq_distances(points: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """(len(points), len(pool)) squared Euclidean distances, without the
    full 3-D broadcast (pool can be large)."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        + (pool * pool).sum(axis=1)[None, :]
        - 2.0 * points @ pool.T
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _knn_indices(points: np.ndarray, pool: np.ndarray, k: int, exclude_self: bool) -> np.ndarray:
    """Indices into pool of the k nearest neighbors of each point (Euclidean)."""
    d2 = _sq_distances(points, pool)
    if exclude_self:
        np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def _synthesis_counts(cfg: OversampleConfig, n_minority: int, n_majority: int) -> int:
    current = n_minority / n_majority
    if cfg.target_ratio <= current:
        raise ValidationError(
            f"target_ratio {cfg.target_ratio} not above current ratio {current:.4f}"
        )
    return math.ceil(cfg.target_ratio * n_majority) - n_minority


def oversample(ds: Dataset, cfg: OversampleConfig) -> Dataset:
    """Append synthetic risky rows until minority/majority >= target_ratio."""
    y = ds.y
    min_idx = np.nonzero(y == 1)[0]
    maj_idx = np.nonzero(y == 0)[0]
    n_min, n_maj = len(min_idx), len(maj_idx)
    if n_min < cfg.k_neighbors + 1:
        raise TooFewMinority(
            f"need >= {cfg.k_neighbors + 1} minority rows, have {n_min}"
        )
    if n_maj == 0:
        raise ValidationError("majority class is empty")
    minority = ds.X[min_idx]
    if np.isnan(minority).any():
        raise MissingValuesPresent("minority rows contain missing values; impute first")

    n_syn = _synthesis_counts(cfg, n_min, n_maj)
    if n_syn == 0:
        return ds

    rng = np.random.default_rng(cfg.seed)
    nn_minority = _knn_indices(minority, minority, cfg.k_neighbors, exclude_self=True)

    if cfg.method == "smote":
        base = rng.integers(0, n_min, n_syn)
    else:
        # majority fraction among each minority point's k nearest neighbors
        # in the full dataset (missing entries contribute column means to
        # the distance computation only)
        full = np.array(ds.X)
        col_means = np.nanmean(np.where(np.isnan(full), np.nan, full), axis=0)
        col_means = np.nan_to_num(col_means)
        nan_pos = np.isnan(full)
        full[nan_pos] = np.take(col_means, np.nonzero(nan_pos)[1])
        d2 = _sq_distances(minority, full)
        for i, gi in enumerate(min_idx):
            d2[i, gi] = np.inf
        nn_full = np.argsort(d2, axis=1, kind="stable")[:, : cfg.k_neighbors]
        maj_frac = (y[nn_full] == 0).mean(axis=1)
        if maj_frac.sum() == 0:
            share = np.full(n_min, 1.0 / n_min)
        else:
            share = maj_frac / maj_frac.sum()
        counts = np.floor(share * n_syn).astype(int)
        remainder = n_syn - counts.sum()
        if remainder > 0:
            frac = share * n_syn - counts
            top = np.argsort(-frac, kind="stable")[:remainder]
            counts[top] += 1
        base = np.repeat(np.arange(n_min), counts)

    neighbor_choice = rng.integers(0, cfg.k_neighbors, n_syn)
    delta = rng.random(n_syn)
    nbr = nn_minority[base, neighbor_choice]
    a = minority[base]
    b = minority[nbr]
    syn = a + delta[:, None] * (b - a)
    # keep the convexity bound exact under float rounding
    np.clip(syn, np.minimum(a, b), np.maximum(a, b), out=syn)

    global_base = min_idx[base]
    return Dataset(
        X=np.vstack([ds.X, syn]),
        y=np.concatenate([ds.y, np.ones(n_syn, dtype=np.int8)]),
        w=np.concatenate([ds.w, ds.w[global_base]]),
        ts=np.concatenate([ds.ts, ds.ts[global_base]]),
        schema=ds.schema,
    )
