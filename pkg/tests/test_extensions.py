"""Dividend recovery, perpetual calls and the joint put/call check."""

from __future__ import annotations

import math

import numpy as np
import pytest

from perpput.curves import ConvexCurve
from perpput.duality import put_to_phi
from perpput.errors import ModelError
from perpput.extensions import (call_to_psi, gbm_call, gbm_exponents, joint_put_call_check,
                                perpetual_call_price, psi_to_call, recover_dividend)

R_C, S2_C, Q_C = 0.04, 0.08, 0.06  # gamma = 2


def call_oracle(K):
    """C(K) = x0 - K below x0/2 and x0^2/(4K) above, for x0 = 1 and gamma = 2."""
    K = np.asarray(K, float)
    with np.errstate(divide="ignore"):
        return np.where(K <= 0.5, 1.0 - K, 1.0 / (4 * K))


@pytest.fixture(scope="module")
def call_curve():
    return ConvexCurve.from_function(call_oracle, 0.0, 6.0, breaks=[0.5],
                                     deriv=lambda K: np.where(K < 0.5, -1.0, -0.25 / np.maximum(K, 0.5) ** 2))


@pytest.fixture(scope="module")
def psi(call_curve):
    return call_to_psi(call_curve, 1.0)


def test_exponents():
    lo, hi = gbm_exponents(math.sqrt(S2_C), R_C, Q_C)
    assert (lo, hi) == (pytest.approx(-0.5), pytest.approx(2.0))


def test_closed_form_call_matches_oracle():
    K = np.linspace(0.0, 3.0, 61)
    assert np.max(np.abs(gbm_call(math.sqrt(S2_C), R_C, Q_C, 1.0, K) - call_oracle(K))) < 1e-14


def test_psi_is_square(psi):
    x = np.linspace(1.0, 5.0, 401)
    assert psi.domain[0] == 1.0 and psi.domain[1] >= 5.0
    assert np.max(np.abs(psi(x) - x ** 2)) <= 1e-8


def test_call_prices_two_branches(psi):
    K = np.linspace(0.0, 2.5, 251)
    assert np.max(np.abs(perpetual_call_price(psi, 1.0, K) - call_oracle(K))) <= 1e-8
    assert perpetual_call_price(psi, 1.0, [0.0, 0.5, 1.0, 2.0]) == pytest.approx([1.0, 0.5, 0.25, 0.125])


def test_call_round_trip(call_curve, psi):
    C = psi_to_call(psi, 1.0)
    assert C.meta["k_low"] == pytest.approx(0.5, rel=1e-9)
    k = call_curve.knots[call_curve.knots <= C.knots[-1]]
    assert np.max(np.abs(C(k) - call_curve(k))) < 1e-12


def test_piecewise_linear_calls_round_trip():
    C = ConvexCurve.from_points([0.0, 0.4, 1.0, 3.0], [1.0, 0.6, 0.3, 0.1])
    back = psi_to_call(call_to_psi(C, 1.0), 1.0)
    k = C.knots[C.knots <= back.knots[-1]]
    assert np.max(np.abs(back(k) - C(k))) < 1e-12


def test_no_dividend_calls_are_trivial():
    with pytest.raises(ModelError):
        gbm_call(0.2, 0.05, 0.0, 1.0, 1.0)
    flat = ConvexCurve.from_points([0.0, 2.0], [1.0, 1.0])
    with pytest.raises(ModelError):
        call_to_psi(flat, 1.0)
    line = ConvexCurve.from_points([1.0, 3.0], [1.0, 3.0])
    with pytest.raises(ModelError):
        psi_to_call(line, 1.0)


def test_dividend_recovery():
    # phi = x^-1/2 solves the dividend ODE with sigma^2 = 0.08, q = 0.06, r = 0.04
    phi = ConvexCurve.from_function(lambda x: x ** -0.5, 1e-3, 1.0)
    d = recover_dividend(phi, math.sqrt(S2_C), R_C)
    assert d.x.size > 100
    assert np.max(np.abs(d.q - Q_C)) < 1e-6
    assert not d.convenience.any()


def test_no_dividend_recovered_for_gbm_put(gbm_curve):
    r = 0.05
    d = recover_dividend(put_to_phi(gbm_curve, 1.0), math.sqrt(2 * r), r)
    assert np.max(np.abs(d.q)) < 1e-6


def test_convenience_yield_flagged():
    # phi = x^-2: q = r - (6 sigma^2 - 2 r)/4, negative once sigma^2 > r
    r, s2 = 0.05, 0.1
    phi = ConvexCurve.from_function(lambda x: x ** -2.0, 1e-2, 1.0)
    d = recover_dividend(phi, math.sqrt(s2), r)
    assert np.max(np.abs(d.q - (r - (6 * s2 - 2 * r) / 4))) < 1e-6
    assert d.convenience.all()


def test_joint_check_recovers_constants(psi):
    phi = ConvexCurve.from_function(lambda x: x ** -0.5, 1e-3, 1.0)
    j = joint_put_call_check(phi, psi, R_C)
    assert j.sigma == pytest.approx(math.sqrt(S2_C), rel=1e-6)
    assert j.q == pytest.approx(Q_C, rel=1e-6)
    assert j.consistent(1e-6)


def test_joint_check_detects_inconsistency(psi, smooth_curve):
    # a local-volatility put with a constant-coefficient call
    j = joint_put_call_check(put_to_phi(smooth_curve, 1.0), psi, R_C)
    assert not j.consistent(1e-3)


def test_powers_are_always_jointly_consistent(psi, gbm_curve):
    # phi = 1/x and psi = x^2 fit sigma^2 = r and q = r
    j = joint_put_call_check(put_to_phi(gbm_curve, 1.0), psi, R_C)
    assert j.consistent(1e-6)
    assert (j.sigma ** 2, j.q) == (pytest.approx(R_C, rel=1e-6), pytest.approx(R_C, rel=1e-6))
