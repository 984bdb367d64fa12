"""Gradient-boosted regression trees for binary logistic loss."""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import DataError
from ..utils import as_matrix, as_sample_weight, as_Xy, require_both_classes
from .losses import softmax

_MIN_HESSIAN = 1e-12


@dataclass(frozen=True)
class RegressionTree:
    """Array-backed binary tree; ``feature[i] < 0`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            cur = node[idx]
            go_left = X[idx, self.feature[cur]] <= self.threshold[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            active = self.feature[node] >= 0
        return self.value[node]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            np.asarray(d["feature"], dtype=np.int64),
            np.asarray(d["threshold"], dtype=float),
            np.asarray(d["left"], dtype=np.int64),
            np.asarray(d["right"], dtype=np.int64),
            np.asarray(d["value"], dtype=float),
        )

    @classmethod
    def leaf(cls, value: float) -> "RegressionTree":
        return cls(
            np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]), np.array([float(value)])
        )


def _best_split(X, residual, idx, min_samples_leaf):
    """Exact greedy split maximizing the reduction in squared error of ``residual``.

    Returns (gain, feature, threshold) or None. Ties keep the lower feature
    index, then the lower threshold.
    """
    n = len(idx)
    r = residual[idx]
    total = r.sum()
    parent_score = total * total / n
    best = None
    for f in range(X.shape[1]):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        csum = np.cumsum(r[order])
        # candidate split after position i-1 (left has i rows)
        i = np.arange(min_samples_leaf, n - min_samples_leaf + 1)
        if len(i) == 0:
            continue
        valid = xs_sorted[i - 1] < xs_sorted[np.minimum(i, n - 1)]
        valid &= i < n
        if not valid.any():
            continue
        i = i[valid]
        left_sum = csum[i - 1]
        right_sum = total - left_sum
        gain = left_sum**2 / i + right_sum**2 / (n - i) - parent_score
        k = int(np.argmax(gain))
        g = float(gain[k])
        if best is None or g > best[0]:
            pos = i[k]
            best = (g, f, 0.5 * (xs_sorted[pos - 1] + xs_sorted[pos]))
    if best is None or not best[0] > 1e-12:
        return None
    return best


def fit_regression_tree(X, residual, hessian, max_depth, min_samples_leaf=2, max_leaf_value=None) -> RegressionTree:
    """Fit one tree to ``residual``; leaves take a Newton step sum(residual) / sum(hessian)."""
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(idx):
        v = residual[idx].sum() / max(hessian[idx].sum(), _MIN_HESSIAN)
        if max_leaf_value is not None:
            v = float(np.clip(v, -max_leaf_value, max_leaf_value))
        return v

    def grow(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(idx))
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            return node
        split = _best_split(X, residual, idx, min_samples_leaf)
        if split is None:
            return node
        _, f, thr = split
        mask = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(idx[mask], depth + 1)
        right[node] = grow(idx[~mask], depth + 1)
        return node

    grow(np.arange(len(X)), 0)
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
    )


class GbdtClassifier(ClassifierMixin, BaseEstimator):
    """Binary gradient-boosted trees with logistic loss.

    The margin is ``base_score + learning_rate * sum(tree outputs)``. Each
    round fits a depth-bounded regression tree to the negative gradient
    ``y - p`` using variance-gain splits; leaf values take one Newton step,
    clipped to ``max_leaf_value``.

    Parameters
    ----------
    n_rounds : int
        Trees added by ``fit`` (and by ``warm_start`` unless overridden).
    learning_rate : float
        Shrinkage applied to every tree.
    max_depth : int
        Maximum tree depth, 2 to 10.
    min_samples_leaf : int
        Minimum rows per leaf.
    max_leaf_value : float
        Bound on the magnitude of a single leaf value.
    """

    def __init__(self, n_rounds=20, learning_rate=0.1, max_depth=3, min_samples_leaf=2, max_leaf_value=10.0):
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_leaf_value = max_leaf_value

    def _check_params(self, n_rounds):
        if not 1 <= int(n_rounds) <= 20:
            raise DataError("n_rounds must lie in [1, 20]")
        if not 2 <= int(self.max_depth) <= 10:
            raise DataError("max_depth must lie in [2, 10]")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be positive")

    def fit(self, X, y=None, sample_weight=None):
        X, y = as_Xy(X, y)
        self._check_params(self.n_rounds)
        require_both_classes(y)
        w = as_sample_weight(sample_weight, len(y))
        prevalence = float(np.clip(np.average(y, weights=w), 1e-6, 1 - 1e-6))
        self.base_score_ = float(np.log(prevalence / (1 - prevalence)))
        self.trees_ = []
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self._boost(X, y, w, self.n_rounds)
        return self

    def _boost(self, X, y, w, n_rounds):
        margin = self.decision_function(X)
        for _ in range(int(n_rounds)):
            p = 1.0 / (1.0 + np.exp(-margin))
            residual = w * (y - p)
            hessian = w * p * (1.0 - p)
            tree = fit_regression_tree(
                X, residual, hessian, int(self.max_depth), int(self.min_samples_leaf), self.max_leaf_value
            )
            self.trees_.append(tree)
            margin = margin + self.learning_rate * tree.predict(X)

    def warm_start(self, X, y=None, n_rounds=None, sample_weight=None) -> "GbdtClassifier":
        """Return a new model with extra trees fit to this ensemble's residuals on (X, y).

        Existing trees and the base score are carried over untouched.
        """
        check_is_fitted(self, "trees_")
        X, y = as_Xy(X, y)
        if len(y) == 0:
            raise DataError("warm start needs at least one row")
        n_rounds = self.n_rounds if n_rounds is None else n_rounds
        self._check_params(n_rounds)
        new = copy.copy(self)
        new.trees_ = list(self.trees_)
        new._boost(X, y, as_sample_weight(sample_weight, len(y)), n_rounds)
        return new

    def decision_function(self, X, n_trees: int | None = None) -> np.ndarray:
        check_is_fitted(self, "base_score_")
        X = as_matrix(X, getattr(self, "n_features_in_", None))
        trees = self.trees_ if n_trees is None else self.trees_[:n_trees]
        z = np.full(len(X), self.base_score_)
        for tree in trees:
            z += self.learning_rate * tree.predict(X)
        return z

    def logits(self, X) -> np.ndarray:
        z = self.decision_function(X)
        return np.column_stack([np.zeros_like(z), z])

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)


def gbdt_train(data, cfg) -> GbdtClassifier:
    """Fit a fresh ensemble on a labelled dataset with ``cfg.n_rounds`` rounds."""
    return cfg.gbdt().fit(data)


def gbdt_predict(model: GbdtClassifier, x):
    """Probability of malicious and the (0, margin) logit pair for one feature vector."""
    logits = model.logits(x)[0]
    prob = float(softmax(logits)[1])
    return prob, (float(logits[0]), float(logits[1]))


def gbdt_warm_start(model: GbdtClassifier, new_data, cfg) -> GbdtClassifier:
    return model.warm_start(new_data, n_rounds=cfg.n_rounds)
