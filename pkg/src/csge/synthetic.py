"""Noise-free toy problems, one per weighting aspect.

Each problem pairs a target function with the two analytic members
``sin(x)`` and ``sin(x) + 10``:

* ``global``: target ``sin(x) + 4`` everywhere, so only a fixed blend works.
* ``local``: target ``sin(x) + 10`` on ``10 <= x <= 15`` and ``sin(x)`` elsewhere.
* ``time``: target ``sin(x)`` for lead times ``t < 3`` and ``sin(x) + 10`` after.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .ensemble import CsgeModel, fit
from .estimators import EstimatorSpec

WHICH = ("global", "local", "time")

MEMBER_EXPRESSIONS = ("sin(x)", "sin(x) + 10")


def target(which: str, x, t=0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if which == "global":
        return np.sin(x) + 4.0
    if which == "local":
        return np.where((x >= 10.0) & (x <= 15.0), np.sin(x) + 10.0, np.sin(x))
    if which == "time":
        return np.sin(x) + (10.0 if t >= 3 else 0.0)
    raise ValueError(f"unknown synthetic problem {which!r}; pick one of {WHICH}")


def member_specs() -> list:
    return [
        EstimatorSpec("analytic_function", {"expression": e}, name=f"f{i + 1}")
        for i, e in enumerate(MEMBER_EXPRESSIONS)
    ]


def sample_x(n_samples: int, x_range=(0.0, 20.0), seed=None) -> np.ndarray:
    """Evenly spaced grid when ``seed`` is None, else seeded uniform draws."""
    lo, hi = x_range
    if seed is None:
        return np.linspace(lo, hi, n_samples)
    return np.sort(np.random.default_rng(seed).uniform(lo, hi, n_samples))


def generate_synthetic(
    which: str,
    n_samples: int = 500,
    x_range=(0.0, 20.0),
    seed=None,
    n_lead_times: int = 6,
):
    """Dataset and member specs for one toy problem.

    The ``time`` problem has a lead-time axis of ``n_lead_times`` steps.
    """
    if which not in WHICH:
        raise ValueError(f"unknown synthetic problem {which!r}; pick one of {WHICH}")
    if n_samples < 50:
        raise ValueError("synthetic problems need at least 50 samples")
    x = sample_x(n_samples, x_range, seed)
    if which == "time":
        y = np.stack([target(which, x, t) for t in range(n_lead_times)], axis=1)
        data = Dataset(x[:, None], y, lead_times=np.arange(n_lead_times), feature_names=("x",))
    else:
        data = Dataset(x[:, None], target(which, x), feature_names=("x",))
    return data, member_specs()


@dataclass
class SyntheticRun:
    """Outcome of fitting the ensemble on one toy problem and scoring a test grid."""

    which: str
    model: CsgeModel
    x_test: np.ndarray
    truth: np.ndarray  # (M, T)
    fused: np.ndarray  # (M, T)
    w_global: np.ndarray  # (J,)
    w_local: np.ndarray  # (M, J)
    w_time: np.ndarray  # (T, J)
    w_final: np.ndarray  # (M, T, J)

    @property
    def abs_error(self) -> np.ndarray:
        return np.abs(self.fused - self.truth)

    @property
    def rmse(self) -> float:
        return float(np.sqrt(np.mean(self.abs_error**2)))

    def summary(self) -> dict:
        return {
            "which": self.which,
            "eta": self.model.eta.as_array().tolist(),
            "w_global": self.w_global.tolist(),
            "w_final_mean": self.w_final.mean(axis=(0, 1)).tolist(),
            "w_time": self.w_time.tolist(),
            "rmse": self.rmse,
            "max_abs_error": float(self.abs_error.max()),
        }


def run_experiment(
    which: str,
    n_samples: int = 500,
    n_test: int = 1000,
    x_range=(0.0, 20.0),
    test_seed: int = 12345,
    obj_cfg=None,
    **fit_kwargs,
) -> SyntheticRun:
    """Fit on an evenly spaced grid, evaluate on seeded uniform test points."""
    data, specs = generate_synthetic(which, n_samples, x_range)
    model = fit(specs, data, obj_cfg=obj_cfg, **fit_kwargs)
    x = sample_x(n_test, x_range, test_seed)
    T = data.n_lead_times
    truth = np.stack([target(which, x, t) for t in range(T)], axis=1)
    fused, w_final, w_time = [], [], []
    for t in range(T):
        batch = model.predict_batch(x[:, None], t)
        fused.append(batch.fused)
        w_final.append(batch.w_final)
        w_time.append(batch.w_time)
    return SyntheticRun(
        which, model, x, truth, np.stack(fused, axis=1), batch.w_global, batch.w_local,
        np.array(w_time), np.stack(w_final, axis=1),
    )
