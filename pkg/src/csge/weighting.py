"""The three weighting aspects: global, local (PCA + k-NN) and lead-time."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LeadTimeOutOfRange, PredictionCube, Scorer, ShapeMismatch
from .softgate import DEFAULT_CONFIG, SoftGateConfig, member_sum, soft_gate


def _member_errors(cube: PredictionCube, targets, scorer: Scorer) -> np.ndarray:
    """Per-sample, per-member, per-lead-time errors, shape (N, J, T)."""
    y = np.asarray(targets)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[0] != cube.n_samples or y.shape[1] != cube.n_lead_times:
        raise ShapeMismatch(
            f"targets {y.shape} do not match cube ({cube.n_samples}, {cube.n_lead_times})"
        )
    truth = y[:, None, :]
    if cube.is_probabilistic:
        errors = scorer(cube.values, np.broadcast_to(truth, cube.values.shape[:3]))
    else:
        errors = scorer(cube.values, truth)
    return np.asarray(errors, dtype=float)


def _mean_over(a, axis: int) -> np.ndarray:
    """Mean along ``axis`` with a summation order that ignores the other axes' layout.

    Keeps results bit-identical when members are permuted.
    """
    return np.ascontiguousarray(np.moveaxis(a, axis, -1)).mean(axis=-1)


# -- global --------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalScores:
    R: np.ndarray


def fit_global(cube: PredictionCube, targets, scorer: Scorer) -> GlobalScores:
    """Mean error of every member over the training samples (lead time 0)."""
    errors = _member_errors(cube, targets, scorer)[:, :, 0]
    return GlobalScores(_mean_over(errors, 0))


def global_weights(scores: GlobalScores, eta_global: float, cfg: SoftGateConfig = DEFAULT_CONFIG):
    return soft_gate(scores.R, eta_global, cfg)


# -- local ---------------------------------------------------------------------


@dataclass(frozen=True)
class Projection:
    """Standardise-then-project PCA basis.

    ``basis`` has one column per kept component, ordered by decreasing
    eigenvalue; each column is signed so its largest-magnitude entry is positive.
    """

    basis: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    eigenvalues: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return ((X - self.means) / self.scales) @ self.basis


def fit_pca(X_H, n_dim: int) -> Projection:
    X = np.asarray(X_H, dtype=float)
    n, f = X.shape
    if not 1 <= n_dim <= f:
        raise ValueError(f"n_dim={n_dim} must lie in [1, {f}]")
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    # constant columns stay unscaled; they are all-zero after centring anyway
    scales = np.where(scales > 0, scales, 1.0)
    Z = (X - means) / scales
    cov = Z.T @ Z / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")[:n_dim]
    eigvals = np.clip(eigvals[order], 0.0, None)
    basis = eigvecs[:, order]
    lead = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[lead, np.arange(n_dim)])
    basis = basis * np.where(signs == 0, 1.0, signs)
    return Projection(basis, means, scales, eigvals)


def default_n_dim(n_features: int) -> int:
    return min(n_features, 3)


def default_n_neighbors(n_samples: int) -> int:
    return max(5, math.ceil(0.05 * n_samples))


@dataclass(frozen=True)
class LocalMemory:
    projection: Projection
    projected_training: np.ndarray
    training_errors: np.ndarray
    k_neighbors: int

    def __post_init__(self):
        if self.projected_training.shape[0] != self.training_errors.shape[0]:
            raise ShapeMismatch("projected rows and stored errors disagree")
        if not 1 <= self.k_neighbors <= self.projected_training.shape[0]:
            raise ValueError(f"k_neighbors={self.k_neighbors} outside [1, N]")

    @property
    def pca_basis(self) -> np.ndarray:
        return self.projection.basis


def build_local_memory(X_H, training_errors, n_dim=None, k_neighbors=None) -> LocalMemory:
    """Fit the PCA on ``X_H`` and store the projected rows with their errors.

    ``k_neighbors`` larger than N is clipped to N.
    """
    X = np.asarray(X_H, dtype=float)
    errors = np.asarray(training_errors, dtype=float)
    n, f = X.shape
    n_dim = default_n_dim(f) if n_dim is None else int(n_dim)
    k = default_n_neighbors(n) if k_neighbors is None else int(k_neighbors)
    if k < 1:
        raise ValueError("k_neighbors must be >= 1")
    proj = fit_pca(X, n_dim)
    return LocalMemory(proj, proj.transform(X), errors, min(k, n))


def _neighbors(train: np.ndarray, queries: np.ndarray, c: int, exclude: np.ndarray | None):
    """Indices of the ``c`` nearest training rows per query.

    Exact scan; equal distances resolve to the lowest training index.
    """
    d2 = ((queries[:, None, :] - train[None, :, :]) ** 2).sum(axis=-1)
    if exclude is not None:
        d2[np.arange(len(queries)), exclude] = np.inf
    return np.argsort(d2, axis=1, kind="stable")[:, :c]


def local_errors_batch(
    memory: LocalMemory, X, exclude_rows=None, chunk: int = 512
) -> np.ndarray:
    """Mean absolute stored error over the nearest situations, for many queries.

    ``exclude_rows`` (one training index per query, or None) removes that row
    from the candidate set; it is used when the queries are the training rows
    themselves so a row never votes on its own weight.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != memory.projection.means.shape[0]:
        raise ShapeMismatch(
            f"query has {X.shape[1]} features, memory expects {memory.projection.means.shape[0]}"
        )
    Z = memory.projection.transform(X)
    abs_err = np.abs(memory.training_errors)
    c = memory.k_neighbors
    if exclude_rows is not None:
        exclude_rows = np.asarray(exclude_rows, dtype=int)
        c = min(c, memory.projected_training.shape[0] - 1)
    out = np.empty((len(Z), abs_err.shape[1]))
    for start in range(0, len(Z), chunk):
        stop = start + chunk
        excl = None if exclude_rows is None else exclude_rows[start:stop]
        idx = _neighbors(memory.projected_training, Z[start:stop], c, excl)
        # sorted indices keep the summation order fixed regardless of the query
        idx = np.sort(idx, axis=1)
        out[start:stop] = _mean_over(abs_err[idx], 1)
    return out


def local_errors(memory: LocalMemory, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeMismatch("local_errors takes one feature vector")
    return local_errors_batch(memory, x[None, :])[0]


def local_weights(q, eta_local: float, cfg: SoftGateConfig = DEFAULT_CONFIG):
    return soft_gate(q, eta_local, cfg)


# -- time ----------------------------------------------------------------------


@dataclass(frozen=True)
class TimeScores:
    R_t: np.ndarray
    r_t: np.ndarray

    @property
    def n_lead_times(self) -> int:
        return self.R_t.shape[0]


def relative_time_scores(R_t) -> np.ndarray:
    """Each member's per-lead-time error divided by its mean over the horizon.

    A member whose mean error is zero gets a flat profile of ones.
    """
    R_t = np.asarray(R_t, dtype=float)
    mean = _mean_over(R_t, 0)[None, :]
    safe = np.where(mean > 0, mean, 1.0)
    return np.where(mean > 0, R_t / safe, 1.0)


def fit_time(cube: PredictionCube, targets, scorer: Scorer) -> TimeScores:
    errors = _member_errors(cube, targets, scorer)
    R_t = _mean_over(errors, 0).T
    return TimeScores(R_t, relative_time_scores(R_t))


def time_weights(scores: TimeScores, t: int, eta_time: float, cfg: SoftGateConfig = DEFAULT_CONFIG):
    if not 0 <= t < scores.n_lead_times:
        raise LeadTimeOutOfRange(f"lead time {t} outside 0..{scores.n_lead_times - 1}")
    return soft_gate(scores.r_t[t], eta_time, cfg)


# -- combination -----------------------------------------------------------------


def combine_log_weights(log_global, log_local, log_time) -> np.ndarray:
    """Multiply the three aspect weights and renormalise over members.

    Inputs are log-weights broadcastable to ``(..., J)``; the product is
    formed as a sum of logs so that near-gating weights never underflow.
    """
    total = np.asarray(log_global) + np.asarray(log_local) + np.asarray(log_time)
    e = np.exp(total - total.max(axis=-1, keepdims=True))
    return e / member_sum(e)[..., None]
