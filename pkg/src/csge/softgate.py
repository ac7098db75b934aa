"""Soft gating: turn member errors into weights.

The raw gate of member ``j`` is ``sum(errors) / (errors[j]**eta + epsilon)``.
Normalising the raw gates over members gives the weights. ``eta = 0`` is plain
averaging; growing ``eta`` moves towards picking the single best member.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EtaOutOfRange, NegativeError


@dataclass(frozen=True)
class SoftGateConfig:
    epsilon: float = 1e-9
    eta_max: float = 12.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.eta_max > 0:
            raise ValueError("eta_max must be > 0")


DEFAULT_CONFIG = SoftGateConfig()


def _check(errors, eta, cfg):
    errors = np.asarray(errors, dtype=float)
    if not np.all(np.isfinite(errors)):
        raise NegativeError("errors must be finite")
    if np.any(errors < 0):
        raise NegativeError("errors must be nonnegative")
    eta = float(eta)
    if not (0.0 <= eta <= cfg.eta_max):
        raise EtaOutOfRange(f"eta={eta} outside [0, {cfg.eta_max}]")
    return errors, eta


def member_sum(a, axis=-1) -> np.ndarray:
    """Sum over the member axis in sorted order, so member order never changes the bits."""
    return np.sort(a, axis=axis).sum(axis=axis)


def _logsumexp(a, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    return np.log(member_sum(np.exp(a - m), axis=axis))[..., None] + m


def _log_power(errors: np.ndarray, eta: float) -> np.ndarray:
    # log(rho**eta) with 0**0 == 1 and 0**eta == 0 for eta > 0
    if eta == 0.0:
        return np.zeros_like(errors)
    with np.errstate(divide="ignore"):
        return eta * np.log(errors)


def soft_gate_raw(errors, j: int, eta: float, cfg: SoftGateConfig = DEFAULT_CONFIG) -> float:
    """Unnormalised gate value of member ``j``."""
    errors, eta = _check(errors, eta, cfg)
    rho_eta = float(np.exp(_log_power(errors[j : j + 1], eta))[0])
    return float(errors.sum()) / (rho_eta + cfg.epsilon)


def log_soft_gate(errors, eta: float, cfg: SoftGateConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Log of the normalised soft-gate weights along the last axis.

    Computed as ``-log(rho**eta + eps)`` followed by a log-softmax so that huge
    or tiny ``rho**eta`` never over- or underflow. Rows whose errors are all
    zero come out uniform, which is the chosen value for the 0/0 case.
    """
    errors, eta = _check(errors, eta, cfg)
    log_inv = -np.logaddexp(_log_power(errors, eta), np.log(cfg.epsilon))
    return log_inv - _logsumexp(log_inv)


def soft_gate(errors, eta: float, cfg: SoftGateConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Normalised weights for an error vector (or a stack of them, last axis = members)."""
    return np.exp(log_soft_gate(errors, eta, cfg))


def eta_penalty(eta):
    """Regularisation shaping for an exponent: high at 0, low around 3, rising past 10."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta < 0) or not np.all(np.isfinite(eta)):
        raise EtaOutOfRange("eta_penalty needs finite eta >= 0")
    out = 1.0 / (1.0 + np.exp(-0.5 * (eta - 10.0))) + 1.0 / (2.0 * (1.0 + np.exp(np.sqrt(eta))))
    return float(out) if out.ndim == 0 else out
