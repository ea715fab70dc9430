"""Ratio duality between put curves and the decreasing fundamental solution."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from perpput.duality import brute_force_phi, check_self_duality, phi_at, phi_to_put, put_to_phi
from perpput.curves import ConvexCurve
from perpput.errors import CurveStructureError, DegenerateCurveError

from conftest import X0, kink_price, put_curves, smooth_phi


@settings(max_examples=1000, deadline=None, derandomize=True,
          suppress_health_check=[HealthCheck.too_slow])
@given(put_curves())
def test_self_duality_random_curves(P):
    assert check_self_duality(P, X0) <= 1e-10
    phi = put_to_phi(P, X0)
    assert check_self_duality(phi, X0) <= 1e-10


@settings(max_examples=200, deadline=None, derandomize=True)
@given(put_curves(), st.floats(0.0, 1.0))
def test_phi_matches_brute_force(P, u):
    phi = put_to_phi(P, X0)
    lo = phi.inf_below if phi.inf_below is not None else phi.knots[0]
    z = lo + u * (X0 - lo)
    if z <= phi.knots[0]:
        z = phi.knots[0]
    ref = brute_force_phi(P, z)
    if math.isinf(ref):
        return
    assert phi(z) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_two_put_phi(two_put_curve):
    phi = put_to_phi(two_put_curve, X0)
    # tangent points: K = 1 for z <= 1/2, K = 2 for z in [1/2, 1]
    assert phi(0.25) == pytest.approx(3 * 0.75, abs=1e-14)
    assert phi(0.5) == pytest.approx(1.5, abs=1e-14)
    assert phi(0.75) == pytest.approx(1.25, abs=1e-14)
    assert phi(1.0) == 1.0


def test_smooth_phi(smooth_curve):
    phi = put_to_phi(smooth_curve, X0)
    x = np.linspace(0.05, 1.0, 60)
    assert np.max(np.abs(phi(x) / smooth_phi(x) - 1)) < 1e-8


def test_kink_phi_exact_on_both_branches(kink_curve):
    phi = put_to_phi(kink_curve, X0)
    x = phi.knots
    a = x[(x > 0) & (x <= 27 / 64)]
    b = x[(x >= 9 / 16) & (x <= 1)]
    assert np.max(np.abs(phi(a) - 2 / a)) <= 1e-9
    assert np.max(np.abs(phi(b) - b ** -2.0)) <= 1e-9
    # the slope jump of P at 27/32 is a straight piece of phi
    mid = 0.5 * (27 / 64 + 9 / 16)
    chord = 128 / 27 + (256 / 81 - 128 / 27) * (mid - 27 / 64) / (9 / 16 - 27 / 64)
    assert phi(mid) == pytest.approx(chord, rel=1e-10)


def test_phi_to_put_recovers_prices(kink_curve):
    P = phi_to_put(put_to_phi(kink_curve, X0), X0)
    k = np.linspace(0.01, 2.9, 200)
    assert np.max(np.abs(P(k) - kink_price(k))) < 1e-9


def test_phi_at_pointwise(smooth_curve):
    for z in (0.1, 0.4, 0.9):
        assert phi_at(smooth_curve, z) == pytest.approx(float(smooth_phi(z)), rel=1e-8)


def test_zero_region_gives_infinite_phi():
    P = ConvexCurve.from_points([0.0, 0.5, 2.0, 3.0], [0.0, 0.0, 1.0, 2.0])
    phi = put_to_phi(P, X0)
    assert phi.inf_below == 0.5
    assert brute_force_phi(P, 0.25) == math.inf


def test_degenerate_rejected():
    P = ConvexCurve.from_points([0.0, 1.0, 3.0], [0.0, 0.0, 2.0])
    with pytest.raises(DegenerateCurveError):
        put_to_phi(P, X0)


def test_invalid_curve_rejected():
    P = ConvexCurve.from_points([0.0, 1.0, 2.0, 3.0], [0.0, 0.5, 0.8, 2.0])
    with pytest.raises(CurveStructureError):
        put_to_phi(P, X0)
