"""Built-in ensemble members.

Members are described by an :class:`EstimatorSpec` and fitted into an
immutable :class:`FittedEstimator`. Learned kinds fit one model per lead time
when the dataset has a lead-time axis; analytic members evaluate a
closed-form expression of ``x`` and ``t`` and ignore the training data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    Dataset,
    FoldTooSmall,
    InvalidHyperParams,
    LeadTimeOutOfRange,
    NotFitted,
    ShapeMismatch,
)
from .expression import Expression

KINDS = (
    "linear_least_squares",
    "knn_regressor",
    "knn_classifier",
    "decision_tree",
    "analytic_function",
)

_DEFAULTS = {
    "linear_least_squares": {},
    "knn_regressor": {"k": 5},
    "knn_classifier": {"k": 5},
    "decision_tree": {"max_depth": 5, "min_samples_leaf": 1},
    "analytic_function": {"expression": None},
}

RIDGE_FALLBACK = 1e-10


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    hyper_params: dict = field(default_factory=dict)
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidHyperParams(f"unknown estimator kind {self.kind!r}")
        unknown = set(self.hyper_params) - set(_DEFAULTS[self.kind]) - {"seed"}
        if unknown:
            raise InvalidHyperParams(f"{self.kind}: unknown hyper-parameters {sorted(unknown)}")
        hp = self.params
        if self.kind.startswith("knn") and not (isinstance(hp["k"], int) and hp["k"] >= 1):
            raise InvalidHyperParams(f"{self.kind}: k must be an integer >= 1")
        if self.kind == "decision_tree":
            if not (isinstance(hp["max_depth"], int) and hp["max_depth"] >= 1):
                raise InvalidHyperParams("decision_tree: max_depth must be an integer >= 1")
            if not (isinstance(hp["min_samples_leaf"], int) and hp["min_samples_leaf"] >= 1):
                raise InvalidHyperParams("decision_tree: min_samples_leaf must be an integer >= 1")
        if self.kind == "analytic_function":
            if not isinstance(hp["expression"], str):
                raise InvalidHyperParams("analytic_function needs an expression string")
            Expression(hp["expression"])

    @property
    def params(self) -> dict:
        return {**_DEFAULTS[self.kind], **self.hyper_params}

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "analytic_function":
            return self.hyper_params["expression"]
        return self.kind

    def to_dict(self) -> dict:
        return {"kind": self.kind, "hyper_params": dict(self.hyper_params), "name": self.name}

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorSpec":
        extra = set(d) - {"kind", "hyper_params", "name"}
        if extra:
            raise InvalidHyperParams(f"unknown member keys {sorted(extra)}")
        return cls(d["kind"], dict(d.get("hyper_params", {})), d.get("name"))


# -- per-kind fit / predict ----------------------------------------------------


def _fit_linear(X, y, hp, n_classes):
    A = np.hstack([X, np.ones((X.shape[0], 1))])
    G = A.T @ A
    b = A.T @ y
    if np.linalg.matrix_rank(G) < G.shape[0]:
        G = G + RIDGE_FALLBACK * np.eye(G.shape[0])
    w = np.linalg.solve(G, b)
    return {"coef": w[:-1], "intercept": np.array([w[-1]])}


def _predict_linear(p, X):
    return X @ p["coef"] + p["intercept"][0]


def _knn_index(train, X, k):
    d2 = ((X[:, None, :] - train[None, :, :]) ** 2).sum(axis=-1)
    idx = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return np.sort(idx, axis=1)


def _fit_knn(X, y, hp, n_classes):
    if X.shape[0] < hp["k"]:
        raise FoldTooSmall(f"k-NN with k={hp['k']} got only {X.shape[0]} training rows")
    return {"X": X.copy(), "y": np.asarray(y, dtype=float).copy(), "k": np.array([hp["k"]])}


def _predict_knn_regressor(p, X):
    idx = _knn_index(p["X"], X, int(p["k"][0]))
    return p["y"][idx].mean(axis=1)


def _predict_knn_classifier(p, X, n_classes):
    k = int(p["k"][0])
    idx = _knn_index(p["X"], X, k)
    labels = p["y"][idx].astype(int)
    probs = np.zeros((X.shape[0], n_classes))
    for c in range(n_classes):
        probs[:, c] = (labels == c).sum(axis=1)
    return probs / k


def _impurity_split(xs, Ys, min_leaf, classification):
    """Best split of one feature: (cost, threshold) or None.

    ``xs`` is sorted; ``Ys`` holds the matching targets (one-hot for
    classification). Cost is the summed child impurity (SSE or n * Gini).
    """
    n = len(xs)
    valid = np.zeros(n - 1, dtype=bool)
    valid[:] = xs[:-1] < xs[1:]
    n_left = np.arange(1, n)
    valid &= (n_left >= min_leaf) & (n - n_left >= min_leaf)
    if not valid.any():
        return None
    if classification:
        cl = np.cumsum(Ys, axis=0)[:-1]
        cr = Ys.sum(axis=0) - cl
        nl = n_left[:, None].astype(float)
        nr = n - nl
        cost = (nl[:, 0] - (cl**2).sum(axis=1) / nl[:, 0]) + (nr[:, 0] - (cr**2).sum(axis=1) / nr[:, 0])
    else:
        s = np.cumsum(Ys)[:-1]
        sq = np.cumsum(Ys**2)[:-1]
        total, total_sq = Ys.sum(), (Ys**2).sum()
        nl = n_left.astype(float)
        nr = n - nl
        cost = (sq - s**2 / nl) + ((total_sq - sq) - (total - s) ** 2 / nr)
    cost = np.where(valid, cost, np.inf)
    i = int(np.argmin(cost))
    lo, hi = xs[i], xs[i + 1]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return float(cost[i]), float(thr)


def _fit_tree(X, y, hp, n_classes):
    classification = n_classes is not None
    Y = np.eye(n_classes)[np.asarray(y, dtype=int)] if classification else np.asarray(y, dtype=float)
    max_depth, min_leaf = hp["max_depth"], hp["min_samples_leaf"]
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(rows):
        return Y[rows].mean(axis=0)

    def impurity(rows):
        if classification:
            counts = Y[rows].sum(axis=0)
            return len(rows) - (counts**2).sum() / len(rows)
        ys = Y[rows]
        return float(((ys - ys.mean()) ** 2).sum())

    def grow(rows, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_value(rows))
        if depth >= max_depth or len(rows) < 2 * min_leaf:
            return node
        parent = impurity(rows)
        if parent <= 0:
            return node
        best = None
        for f in range(X.shape[1]):
            order = np.argsort(X[rows, f], kind="stable")
            sorted_rows = rows[order]
            found = _impurity_split(X[sorted_rows, f], Y[sorted_rows], min_leaf, classification)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], f, found[1])
        if best is None or best[0] >= parent:
            return node
        _, f, thr = best
        mask = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(X.shape[0]), 0)
    return {
        "feature": np.array(feature, dtype=int),
        "threshold": np.array(threshold, dtype=float),
        "left": np.array(left, dtype=int),
        "right": np.array(right, dtype=int),
        "value": np.array(value, dtype=float),
    }


def _predict_tree(p, X):
    node = np.zeros(X.shape[0], dtype=int)
    feature, threshold = p["feature"], p["threshold"]
    while True:
        internal = feature[node] >= 0
        if not internal.any():
            break
        n = node[internal]
        go_left = X[internal, feature[n]] <= threshold[n]
        node[internal] = np.where(go_left, p["left"][n], p["right"][n])
    return p["value"][node]


_INT_KEYS = {"feature", "left", "right", "k"}


# -- fitted estimator ------------------------------------------------------------


@dataclass(frozen=True)
class FittedEstimator:
    spec: EstimatorSpec
    params: tuple
    n_features: int
    n_classes: Optional[int] = None

    @property
    def n_lead_times(self) -> int:
        return len(self.params)

    def predict(self, X, t: int = 0) -> np.ndarray:
        """Predictions for the rows of ``X`` at lead time ``t``.

        Regression members return shape ``(M,)``; classifiers return
        ``(M, n_classes)`` probability rows.
        """
        if not self.params:
            raise NotFitted("estimator has not been fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ShapeMismatch(f"expected {self.n_features} features, got {X.shape[1]}")
        kind = self.spec.kind
        if kind == "analytic_function":
            if t < 0:
                raise LeadTimeOutOfRange(f"lead time {t} < 0")
            return Expression(self.spec.params["expression"])(X, t)
        if not 0 <= t < len(self.params):
            raise LeadTimeOutOfRange(f"lead time {t} outside 0..{len(self.params) - 1}")
        p = self.params[t]
        if kind == "linear_least_squares":
            return _predict_linear(p, X)
        if kind == "knn_regressor":
            return _predict_knn_regressor(p, X)
        if kind == "knn_classifier":
            return _predict_knn_classifier(p, X, self.n_classes)
        return _predict_tree(p, X)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": [{k: v.tolist() for k, v in p.items()} for p in self.params],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FittedEstimator":
        params = tuple(
            {k: np.asarray(v, dtype=int if k in _INT_KEYS else float) for k, v in p.items()}
            for p in d["params"]
        )
        return cls(EstimatorSpec.from_dict(d["spec"]), params, int(d["n_features"]), d["n_classes"])


_FITTERS = {
    "linear_least_squares": _fit_linear,
    "knn_regressor": _fit_knn,
    "knn_classifier": _fit_knn,
    "decision_tree": _fit_tree,
}


def fit(spec: EstimatorSpec, train: Dataset) -> FittedEstimator:
    """Fit one member on ``train``; deterministic for a given (spec, data)."""
    if spec.kind == "analytic_function":
        return FittedEstimator(spec, ({},), train.n_features, train.n_classes)
    if train.n_samples < 1:
        raise FoldTooSmall("no training rows")
    classification = train.is_classification
    if spec.kind == "knn_classifier" and not classification:
        raise InvalidHyperParams("knn_classifier needs a classification dataset")
    if spec.kind in ("knn_regressor", "linear_least_squares") and classification:
        raise InvalidHyperParams(f"{spec.kind} only supports regression")
    hp = spec.params
    Y = train.target_matrix()
    params = tuple(
        _FITTERS[spec.kind](train.features, Y[:, t], hp, train.n_classes)
        for t in range(Y.shape[1])
    )
    return FittedEstimator(spec, params, train.n_features, train.n_classes)
