"""Choosing the three soft-gating exponents.

The objective is the squared fusion error over the out-of-fold training
predictions plus ``c_reg`` times a penalty on the exponents. It is minimised
by a coarse grid over ``[0, eta_max]^3`` followed by a bounded Nelder-Mead
refinement started from the best grid point.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .core import EtaOutOfRange, EtaVector
from .softgate import DEFAULT_CONFIG, SoftGateConfig, eta_penalty, log_soft_gate, member_sum
from .weighting import combine_log_weights


@dataclass(frozen=True)
class ObjectiveConfig:
    c_reg: float = 0.1
    use_penalty_heuristic: bool = True
    eta_max: float = 12.0
    grid_resolution: int = 5
    max_refine_iters: int = 200
    tolerance: float = 1e-6

    def __post_init__(self):
        if self.c_reg < 0:
            raise ValueError("c_reg must be >= 0")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if self.max_refine_iters < 1:
            raise ValueError("max_refine_iters must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.eta_max > 0:
            raise ValueError("eta_max must be > 0")


@dataclass(frozen=True)
class EvalContext:
    """Everything the objective needs, precomputed from the training cube.

    predictions: ``(N, T, J)`` (``(N, T, J, C)`` for classification).
    targets: ``(N, T)``.
    global_R: ``(J,)``; local_Q: ``(N, J)``; time_r: ``(T, J)``.
    """

    predictions: np.ndarray
    targets: np.ndarray
    global_R: np.ndarray
    local_Q: np.ndarray
    time_r: np.ndarray
    n_classes: Optional[int] = None
    gate: SoftGateConfig = field(default=DEFAULT_CONFIG)

    def weights(self, eta) -> np.ndarray:
        """Final member weights, shape ``(N, T, J)``."""
        g, l, t = (float(v) for v in eta)
        return combine_log_weights(
            log_soft_gate(self.global_R, g, self.gate)[None, None, :],
            log_soft_gate(self.local_Q, l, self.gate)[:, None, :],
            log_soft_gate(self.time_r, t, self.gate)[None, :, :],
        )

    def fused(self, eta) -> np.ndarray:
        return fuse(self.weights(eta), self.predictions, self.n_classes is not None)

    def data_term(self, eta) -> float:
        fused = self.fused(eta)
        if self.n_classes is None:
            return float(((self.targets - fused) ** 2).sum())
        onehot = np.eye(self.n_classes)[self.targets]
        return float(((onehot - fused) ** 2).sum())


def fuse(weights, predictions, probabilistic=False) -> np.ndarray:
    """Weighted member combination; ``weights`` is ``(..., J)``."""
    if not probabilistic:
        return member_sum(weights * predictions)
    return member_sum(weights[..., None] * predictions, axis=-2)


def penalty(eta, cfg: ObjectiveConfig) -> float:
    eta = np.asarray(eta, dtype=float)
    if cfg.use_penalty_heuristic:
        return float(np.sum(eta_penalty(eta)))
    return float(eta.sum())


def objective(eta, ctx: EvalContext, cfg: ObjectiveConfig = ObjectiveConfig()) -> float:
    eta = np.asarray(eta.as_array() if isinstance(eta, EtaVector) else eta, dtype=float)
    if np.any(eta < 0) or np.any(eta > cfg.eta_max) or not np.all(np.isfinite(eta)):
        raise EtaOutOfRange(f"eta {eta} outside [0, {cfg.eta_max}]")
    return ctx.data_term(eta) + cfg.c_reg * penalty(eta, cfg)


@dataclass(frozen=True)
class MinimizeResult:
    eta: EtaVector
    value: float
    trace: np.ndarray  # rows: eta_global, eta_local, eta_time, objective
    n_grid: int

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(self.trace[:, 3])

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eval", "phase", "eta_global", "eta_local", "eta_time", "objective", "best"])
            for i, (row, best) in enumerate(zip(self.trace, self.best_so_far)):
                phase = "grid" if i < self.n_grid else "simplex"
                w.writerow([i, phase, *(repr(float(v)) for v in row), repr(float(best))])


def minimize(cfg: ObjectiveConfig, ctx: EvalContext) -> MinimizeResult:
    """Grid seeding then bounded simplex refinement; returns the best point evaluated."""
    lo, hi = 0.0, cfg.eta_max
    trace = []

    def f(eta):
        eta = np.clip(np.asarray(eta, dtype=float), lo, hi)
        value = objective(eta, ctx, cfg)
        trace.append((*eta, value))
        return value

    axis = np.linspace(lo, hi, cfg.grid_resolution)
    for point in product(axis, repeat=3):
        f(point)
    n_grid = len(trace)
    seed = np.array(min(trace, key=lambda r: r[3])[:3])

    step = 0.5 * (hi - lo) / (cfg.grid_resolution - 1)
    simplex = [seed]
    for i in range(3):
        vertex = seed.copy()
        vertex[i] = seed[i] + step if seed[i] + step <= hi else seed[i] - step
        simplex.append(vertex)
    _scipy_minimize(
        f,
        seed,
        method="Nelder-Mead",
        bounds=[(lo, hi)] * 3,
        options={
            "initial_simplex": np.array(simplex),
            "maxiter": cfg.max_refine_iters,
            "xatol": cfg.tolerance,
            "fatol": cfg.tolerance,
        },
    )
    arr = np.array(trace)
    best = int(np.argmin(arr[:, 3]))
    eta = EtaVector.from_array(arr[best, :3], eta_max=cfg.eta_max)
    return MinimizeResult(eta, float(arr[best, 3]), arr, n_grid)
