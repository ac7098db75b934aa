"""Shared domain types, scorers and validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class CsgeError(Exception):
    """Base class for every error raised by this package."""


class ShapeMismatch(CsgeError, ValueError):
    pass


class NonFiniteValue(CsgeError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NegativeError(CsgeError, ValueError):
    pass


class EtaOutOfRange(CsgeError, ValueError):
    pass


class InvalidHyperParams(CsgeError, ValueError):
    pass


class DegenerateData(CsgeError, ValueError):
    pass


class NotFitted(CsgeError, RuntimeError):
    pass


class FoldTooSmall(CsgeError, ValueError):
    pass


class LeadTimeOutOfRange(CsgeError, IndexError):
    pass


class ParseError(CsgeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MissingCell(CsgeError, ValueError):
    pass


def _first_nonfinite(a: np.ndarray):
    bad = np.argwhere(~np.isfinite(a))
    return tuple(int(i) for i in bad[0])


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus targets.

    ``targets`` is 1-D for plain tasks and ``(N, T)`` when the dataset has a
    lead-time axis. Classification targets are integer class indices and
    ``n_classes`` is set.
    """

    features: np.ndarray
    targets: np.ndarray
    lead_times: Optional[np.ndarray] = None
    feature_names: tuple = ()
    n_classes: Optional[int] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        dtype = int if self.n_classes is not None else float
        targets = np.asarray(self.targets, dtype=dtype)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "targets", targets)
        if self.lead_times is not None:
            object.__setattr__(self, "lead_times", np.asarray(self.lead_times, dtype=int))
        if not self.feature_names and features.ndim == 2:
            names = tuple(f"x{i}" for i in range(features.shape[1]))
            object.__setattr__(self, "feature_names", names)
        else:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_lead_times(self) -> int:
        return 1 if self.lead_times is None else len(self.lead_times)

    @property
    def is_classification(self) -> bool:
        return self.n_classes is not None

    def target_matrix(self) -> np.ndarray:
        """Targets as an ``(N, T)`` array (T=1 without a lead-time axis)."""
        return self.targets if self.targets.ndim == 2 else self.targets[:, None]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.features[rows],
            self.targets[rows],
            lead_times=self.lead_times,
            feature_names=self.feature_names,
            n_classes=self.n_classes,
        )


def validate_dataset(d: Dataset) -> Dataset:
    """Return ``d`` unchanged if it is well formed, raise otherwise."""
    X, y = d.features, d.targets
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeMismatch(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
    if y.shape[0] != X.shape[0]:
        raise ShapeMismatch(f"{y.shape[0]} targets for {X.shape[0]} feature rows")
    if d.lead_times is not None:
        if y.ndim != 2 or y.shape[1] != len(d.lead_times):
            raise ShapeMismatch(
                f"targets must be N x {len(d.lead_times)} with a lead-time axis, got {y.shape}"
            )
        if not np.array_equal(d.lead_times, np.arange(len(d.lead_times))):
            raise ShapeMismatch("lead times must be 0..T-1")
    elif y.ndim != 1:
        raise ShapeMismatch(f"targets must be 1-D without a lead-time axis, got {y.shape}")
    if len(d.feature_names) != X.shape[1]:
        raise ShapeMismatch(f"{len(d.feature_names)} feature names for {X.shape[1]} columns")
    if not np.all(np.isfinite(X)):
        r, c = _first_nonfinite(X)
        raise NonFiniteValue(f"non-finite feature value at row {r}, column {c}", r, c)
    if not d.is_classification and not np.all(np.isfinite(y)):
        r = _first_nonfinite(y)[0]
        raise NonFiniteValue(f"non-finite target at row {r}", r)
    if d.is_classification:
        if d.n_classes < 2:
            raise ShapeMismatch("classification needs at least two classes")
        if y.min() < 0 or y.max() >= d.n_classes:
            raise ShapeMismatch(f"class labels must lie in 0..{d.n_classes - 1}")
    return d


@dataclass(frozen=True)
class PredictionCube:
    """Out-of-fold predictions, shape ``(N, J, T)``.

    Classification cubes carry a trailing class axis: ``(N, J, T, C)``.
    """

    values: np.ndarray
    member_ids: tuple = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.ndim not in (3, 4):
            raise ShapeMismatch(f"prediction cube must be 3-D or 4-D, got {values.ndim}-D")
        if not np.all(np.isfinite(values)):
            idx = _first_nonfinite(values)
            raise NonFiniteValue(f"non-finite prediction at {idx}", idx[0])
        object.__setattr__(self, "values", values)
        ids = tuple(self.member_ids) or tuple(f"m{j}" for j in range(values.shape[1]))
        if len(ids) != values.shape[1]:
            raise ShapeMismatch(f"{len(ids)} member ids for {values.shape[1]} members")
        object.__setattr__(self, "member_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_members(self) -> int:
        return self.values.shape[1]

    @property
    def n_lead_times(self) -> int:
        return self.values.shape[2]

    @property
    def is_probabilistic(self) -> bool:
        return self.values.ndim == 4


@dataclass(frozen=True)
class EtaVector:
    eta_global: float = 0.0
    eta_local: float = 0.0
    eta_time: float = 0.0
    eta_max: float = field(default=12.0, compare=False, repr=False)

    def __post_init__(self):
        for name in ("eta_global", "eta_local", "eta_time"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0 or v > self.eta_max:
                raise EtaOutOfRange(f"{name}={v} outside [0, {self.eta_max}]")
            object.__setattr__(self, name, v)

    def as_array(self) -> np.ndarray:
        return np.array([self.eta_global, self.eta_local, self.eta_time])

    @classmethod
    def from_array(cls, a: Sequence[float], eta_max: float = 12.0) -> "EtaVector":
        g, l, t = (float(v) for v in a)
        return cls(g, l, t, eta_max=eta_max)


SCORER_KINDS = ("squared_error", "absolute_error", "zero_one_error", "user_supplied")


@dataclass(frozen=True)
class Scorer:
    """Per-sample error function; lower is better.

    Built-in kinds are vectorised over matching arrays. For ``zero_one_error``
    the prediction may be a probability vector (trailing class axis), in which
    case its argmax is compared with the class index.
    """

    kind: str = "absolute_error"
    func: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in SCORER_KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}")
        if self.kind == "user_supplied" and self.func is None:
            raise ValueError("user_supplied scorer needs func")

    def __call__(self, predicted, truth) -> np.ndarray:
        p = np.asarray(predicted, dtype=float)
        y = np.asarray(truth)
        if self.kind == "squared_error":
            return (p - y) ** 2
        if self.kind == "absolute_error":
            return np.abs(p - y)
        if self.kind == "zero_one_error":
            if p.ndim > y.ndim:
                p = np.argmax(p, axis=-1)
            return (np.rint(p) != y).astype(float)
        return np.asarray(self.func(p, y), dtype=float)

    def mean(self, predicted, truth) -> float:
        return float(np.mean(self(predicted, truth)))


def score(s: Scorer, predicted, truth) -> float:
    """Error of a single prediction."""
    p = np.asarray(predicted, dtype=float)
    y = np.asarray(truth, dtype=float)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(y))):
        raise NonFiniteValue("score needs finite inputs")
    e = float(np.squeeze(s(p, y)))
    if e < 0 or not np.isfinite(e):
        raise ValueError(f"scorer {s.kind} returned {e}; errors must be finite and >= 0")
    return e


@dataclass(frozen=True)
class WeightBreakdown:
    """Per-member weights behind one fused prediction."""

    w_global: np.ndarray
    w_local: np.ndarray
    w_time: np.ndarray
    w_final: np.ndarray
    member_ids: tuple = ()

    def rows(self):
        ids = self.member_ids or tuple(f"m{j}" for j in range(len(self.w_final)))
        for j, mid in enumerate(ids):
            yield mid, self.w_global[j], self.w_local[j], self.w_time[j], self.w_final[j]
