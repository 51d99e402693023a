"""Random forest classifier and regressor.

The same algorithm and hyperparameters serve as the adversarial classifier
and as the prediction model: bootstrap resamples, ``floor(sqrt(P))``
candidate features per node, and trees grown until leaves are pure.

Determinism does not depend on row order or on the number of worker
threads. Training rows are first put in a canonical order (lexicographic on
features, then target) and tree ``t`` draws its bootstrap and feature
choices from a stream seeded by ``(seed, t)`` alone.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _cart
from ._seeding import derive_seed, rng_for
from .exceptions import InsufficientDataError, ShapeError


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 500
    mtry: Optional[int] = None  # None -> floor(sqrt(P))
    min_samples_split: int = 2
    max_depth: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolve_mtry(self, p: int) -> int:
        m = max(1, math.isqrt(p)) if self.mtry is None else self.mtry
        if m > p:
            raise ValueError(f"mtry={m} exceeds feature count {p}")
        return m

    def with_seed(self, seed: int) -> "ForestConfig":
        return ForestConfig(self.n_trees, self.mtry, self.min_samples_split,
                            self.max_depth, self.bootstrap, int(seed))


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays. Leaves have ``feature == -1``; children are local indices."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(np.array([-1], np.int32), np.zeros(1), np.array([-1], np.int32),
                   np.array([-1], np.int32), np.array([float(value)]))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)


@dataclass(eq=False)
class ForestModel:
    trees: list
    task: str  # "classification" | "regression"
    p: int
    training_target_range: tuple = (0.0, 1.0)
    degenerate: bool = False
    _flat: tuple = field(default=None, repr=False)

    def _packed(self):
        if self._flat is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
            np.cumsum(sizes, out=offsets[1:])
            self._flat = (
                offsets,
                np.concatenate([t.feature for t in self.trees]).astype(np.int32),
                np.concatenate([t.threshold for t in self.trees]).astype(np.float64),
                np.concatenate([t.left for t in self.trees]).astype(np.int32),
                np.concatenate([t.right for t in self.trees]).astype(np.int32),
                np.concatenate([t.value for t in self.trees]).astype(np.float64),
            )
        return self._flat

    def _raw_predict(self, features) -> np.ndarray:
        X = np.ascontiguousarray(features, dtype=np.float64)
        if X.ndim == 1 and self.p == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ShapeError(f"expected (Q, {self.p}) features, got shape {X.shape}")
        if X.shape[0] == 0:
            return np.zeros(0)
        return _cart.predict_flat(X, *self._packed())

    def dump(self) -> str:
        """Text serialisation, one node per line; used for determinism checks."""
        out = [f"forest task={self.task} p={self.p} n_trees={len(self.trees)} "
               f"range={self.training_target_range[0]!r},{self.training_target_range[1]!r} "
               f"degenerate={int(self.degenerate)}"]
        for t, tree in enumerate(self.trees):
            for i in range(tree.n_nodes):
                out.append(f"{t} {i} {int(tree.feature[i])} {float(tree.threshold[i])!r} "
                           f"{int(tree.left[i])} {int(tree.right[i])} {float(tree.value[i])!r}")
        return "\n".join(out) + "\n"


def default_threads() -> int:
    env = os.environ.get("GEOEVAL_THREADS")
    return max(1, int(env)) if env else 1


def _canonical(X, y):
    # last lexsort key is primary: feature 0, feature 1, ..., then target
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys)
    return np.ascontiguousarray(X[order]), np.ascontiguousarray(y[order])


def _grow(X, y, task, cfg: ForestConfig, n_threads: int | None):
    n, p = X.shape
    mtry = cfg.resolve_mtry(p)
    max_depth = -1 if cfg.max_depth is None else int(cfg.max_depth)
    code = _cart.CLASSIFICATION if task == "classification" else _cart.REGRESSION

    def one(t):
        rng = rng_for(cfg.seed, t)
        if cfg.bootstrap:
            rows = rng.integers(0, n, size=n)
            Xb, yb = np.ascontiguousarray(X[rows]), np.ascontiguousarray(y[rows])
        else:
            Xb, yb = X, y
        tree_seed = derive_seed(cfg.seed, t, 1)
        arrs = _cart.build_tree(Xb, yb, code, mtry, cfg.min_samples_split, max_depth, tree_seed)
        return Tree(*arrs[:5])

    n_threads = default_threads() if n_threads is None else max(1, int(n_threads))
    if n_threads == 1 or cfg.n_trees == 1:
        return [one(t) for t in range(cfg.n_trees)]
    with ThreadPoolExecutor(max_workers=n_threads) as ex:
        return list(ex.map(one, range(cfg.n_trees)))


def _check_inputs(features, y):
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise ShapeError(f"features shape {X.shape} does not match {len(y)} targets")
    if len(y) < 2:
        raise InsufficientDataError(f"need at least 2 training rows, got {len(y)}")
    if X.shape[1] < 1:
        raise ShapeError("need at least one feature")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("training data must be finite")
    return X, y


def train_classifier(features, labels, cfg: ForestConfig = ForestConfig(), n_threads=None) -> ForestModel:
    """Fit a binary random-forest classifier (Gini splits).

    A single distinct label yields a model flagged ``degenerate`` that
    predicts that label with probability 1.
    """
    X, y = _check_inputs(features, labels)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    X, y = _canonical(X, y)
    trees = _grow(X, y, "classification", cfg, n_threads)
    return ForestModel(trees, "classification", X.shape[1], (0.0, 1.0), degenerate=bool(y.min() == y.max()))


def train_regressor(features, targets, cfg: ForestConfig = ForestConfig(), n_threads=None) -> ForestModel:
    """Fit a random-forest regressor (variance-reduction splits, mean-valued leaves)."""
    X, y = _check_inputs(features, targets)
    X, y = _canonical(X, y)
    trees = _grow(X, y, "regression", cfg, n_threads)
    return ForestModel(trees, "regression", X.shape[1], (float(y.min()), float(y.max())),
                       degenerate=bool(y.min() == y.max()))


def predict_proba(model: ForestModel, features) -> np.ndarray:
    """Probability of label 1: mean over trees of the leaf's label-1 frequency."""
    if model.task != "classification":
        raise ValueError("predict_proba needs a classification model")
    return np.clip(model._raw_predict(features), 0.0, 1.0)


def predict(model: ForestModel, features) -> np.ndarray:
    if model.task != "regression":
        raise ValueError("predict needs a regression model")
    lo, hi = model.training_target_range
    # mean of leaf means is already inside [lo, hi]; clip only absorbs rounding
    return np.clip(model._raw_predict(features), lo, hi)
