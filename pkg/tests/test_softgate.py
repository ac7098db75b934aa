import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from csge.core import EtaOutOfRange, NegativeError
from csge.softgate import SoftGateConfig, eta_penalty, soft_gate, soft_gate_raw

EPS = 1e-9


def gate_oracle(errors, eta, eps=EPS):
    """Plain evaluation of sum(errors) / (rho**eta + eps), then normalisation."""
    total = sum(errors)
    raw = [total / ((e**eta if not (e == 0 and eta == 0) else 1.0) + eps) for e in errors]
    s = sum(raw)
    if s == 0:
        return [1.0 / len(errors)] * len(errors)
    return [r / s for r in raw]


def penalty_oracle(x):
    x = mpmath.mpf(x)
    with mpmath.workdps(50):
        return 1 / (1 + mpmath.exp(-(x - 10) / 2)) + 1 / (2 * (1 + mpmath.exp(mpmath.sqrt(x))))


@pytest.mark.parametrize(
    "errors, j, eta, expected",
    [
        ([2, 2], 0, 1, 4 / (2 + EPS)),
        ([1, 3], 0, 0, 4 / (1 + EPS)),
        ([1, 3], 1, 2, 4 / (9 + EPS)),
    ],
)
def test_raw_gate(errors, j, eta, expected):
    assert soft_gate_raw(errors, j, eta) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize(
    "errors, eta, expected, tol",
    [
        ([1, 3], 0, [0.5, 0.5], 1e-12),
        ([1, 3], 1, [0.75, 0.25], 1e-9),
        ([1, 2, 4], 1, [0.5714, 0.2857, 0.1429], 1e-3),
        ([1, 3], 2, [0.9, 0.1], 1e-9),
    ],
)
def test_soft_gate_examples(errors, eta, expected, tol):
    w = soft_gate(errors, eta)
    np.testing.assert_allclose(w, expected, atol=tol)
    np.testing.assert_allclose(w, gate_oracle(errors, eta), atol=1e-14)


def test_soft_gate_rejects_bad_input():
    with pytest.raises(NegativeError):
        soft_gate([1, -1], 1)
    with pytest.raises(EtaOutOfRange):
        soft_gate([1, 2], 12.5)
    with pytest.raises(EtaOutOfRange):
        soft_gate([1, 2], -0.5)


def test_all_zero_errors_uniform():
    np.testing.assert_allclose(soft_gate([0, 0, 0], 3), [1 / 3] * 3, atol=1e-15)
    assert soft_gate_raw([0, 0], 0, 2) == 0.0


def test_zero_error_dominates():
    w = soft_gate([0, 5], 1)
    assert w[0] >= 1 - 1e-6


def test_gating_limit():
    w = soft_gate([1, 3], 50, SoftGateConfig(eta_max=60))
    assert w[0] >= 1 - 1e-8


def test_batched_rows():
    E = np.array([[1, 3], [2, 2], [0, 1]])
    W = soft_gate(E, 1)
    for row, w in zip(E, W):
        np.testing.assert_allclose(w, gate_oracle(list(row), 1), atol=1e-12)


def test_huge_errors_do_not_overflow():
    w = soft_gate([1e300, 3e300], 12)
    assert np.all(np.isfinite(w))
    assert w[0] > w[1]


error_vectors = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=50)


@given(error_vectors, st.floats(0, 12))
def test_sums_to_one(errors, eta):
    assert abs(soft_gate(errors, eta).sum() - 1) <= 1e-12


@given(error_vectors, st.floats(0, 12))
def test_monotone(errors, eta):
    w = soft_gate(errors, eta)
    e = np.asarray(errors)
    i, j = np.argmin(e), np.argmax(e)
    assert w[i] >= w[j]
    less = e[:, None] < e[None, :]
    assert np.all((w[:, None] >= w[None, :] - 1e-15)[less])


@given(error_vectors)
def test_eta_zero_uniform(errors):
    w = soft_gate(errors, 0)
    assert np.max(np.abs(w - 1 / len(errors))) <= 1e-9


@settings(max_examples=200)
@given(
    st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=10),
    st.floats(0.1, 10),
    st.floats(0, 12),
)
def test_scale_invariance(errors, factor, eta):
    e = np.asarray(errors)
    # stay where rho**eta dwarfs epsilon; below that the epsilon term is meant to dominate
    assume(min(e.min(), (e * factor).min()) ** eta >= 1e-2)
    np.testing.assert_allclose(soft_gate(e, eta), soft_gate(e * factor, eta), atol=1e-6)


@pytest.mark.parametrize("x, expected", [(0, 0.2567), (10, 0.5203), (4, 0.1070)])
def test_penalty_examples(x, expected):
    assert eta_penalty(x) == pytest.approx(expected, abs=1e-3)
    assert abs(eta_penalty(x) - float(penalty_oracle(x))) <= 1e-12


def test_penalty_vectorised_and_validated():
    xs = np.linspace(0, 12, 7)
    np.testing.assert_allclose(eta_penalty(xs), [float(penalty_oracle(x)) for x in xs], atol=1e-12)
    with pytest.raises(EtaOutOfRange):
        eta_penalty(-1)
