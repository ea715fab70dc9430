"""Scale function, inverse scale and speed measure."""

from __future__ import annotations

import math

import numpy as np
import pytest

from perpput.duality import put_to_phi
from perpput.scale import build_scale_system, build_speed_measure

from conftest import R, X0, atom_scale, smooth_phi


@pytest.fixture(scope="module")
def atom_system(atom_curve):
    return build_scale_system(put_to_phi(atom_curve, X0), X0)


def test_atom_scale_matches_closed_form(atom_system):
    x = np.array([0.05, 0.2, 0.45, 0.5, 0.6, 0.9, 1.0])
    assert np.max(np.abs(atom_system.s(x) - atom_scale(x)) / np.maximum(1, np.abs(atom_scale(x)))) < 1e-10


def test_atom_speed_measure(atom_system):
    nu = build_speed_measure(atom_system, R)
    assert len(nu.atoms) == 1
    y, m, x = nu.atoms[0]
    assert y == pytest.approx(-2 * math.log(2), abs=1e-9)
    assert m == pytest.approx(1 / (12 * R), rel=1e-8)
    assert x == pytest.approx(0.5, rel=1e-10)
    assert atom_system.lower == "natural"


def test_inverse_scale_is_inverse(atom_system):
    x = np.geomspace(0.01, 1.0, 50)
    assert np.max(np.abs(atom_system.g(atom_system.s(x)) - x)) < 1e-9


def test_f_is_phi_of_g(smooth_curve):
    sys = build_scale_system(put_to_phi(smooth_curve, X0), X0)
    y = np.linspace(sys.s(0.05), 0.0, 40)
    assert np.max(np.abs(sys.f(y) / smooth_phi(sys.g(y)) - 1)) < 1e-8


def test_gbm_density_constant(gbm_system, gbm_speed):
    mid, dens = gbm_speed.density()
    m = (mid > gbm_system.s(0.01)) & (mid < gbm_system.s(50.0))
    # s = 2 ln x, g = exp(y/2), g''/(2 r g) = 1/(8 r)
    assert np.max(np.abs(dens[m] * 8 * R - 1)) < 1e-6
    assert gbm_system.s(0.5) == pytest.approx(-2 * math.log(2), abs=1e-10)
    assert not gbm_speed.atoms and not gbm_speed.zero_intervals


def test_kink_gives_zero_mass(kink_curve):
    sys = build_scale_system(put_to_phi(kink_curve, X0), X0)
    nu = build_speed_measure(sys, R)
    a, b = float(sys.s(27 / 64)), float(sys.s(9 / 16))
    assert len(nu.zero_intervals) == 1
    za, zb = nu.zero_intervals[0]
    assert za == pytest.approx(a, abs=1e-12) and zb == pytest.approx(b, abs=1e-12)
    assert nu.mass_between(a, b) == 0.0
    assert nu.mass_between(a - 0.1, a) > 0 and nu.mass_between(b, b + 0.1) > 0


def test_two_put_measure(two_put_system, two_put_speed):
    sys, nu = two_put_system, two_put_speed
    assert sys.lower == "absorbing" and sys.upper == "growth"
    assert sys.s_low == pytest.approx(-2.5) and sys.s_high == pytest.approx(2.0)
    assert sys.gbar == pytest.approx(2.0)
    assert len(nu.atoms) == 1
    y, m, x = nu.atoms[0]
    assert (y, x) == (pytest.approx(-1.0), pytest.approx(0.5))
    assert m == pytest.approx(1 / (6 * R), rel=1e-12)
    assert nu.zero_intervals == (pytest.approx((-2.5, -1.0)), pytest.approx((-1.0, 2.0)))


def test_measure_from_f_agrees(atom_system):
    a = build_speed_measure(atom_system, R)
    b = build_speed_measure(atom_system, R, use_f=True)
    assert len(a.atoms) == len(b.atoms)
    assert a.atoms[0][1] == pytest.approx(b.atoms[0][1], rel=1e-8)
    big = a.cell_mass > 1e-8
    assert np.max(np.abs(b.cell_mass[big] / a.cell_mass[big] - 1)) < 1e-4


def test_linear_extension_has_growth_end(gbm_curve):
    sys = build_scale_system(put_to_phi(gbm_curve, X0), X0, extension="linear")
    assert sys.upper == "growth"
    assert sys.gbar == pytest.approx(2.0, rel=1e-9)


def test_speed_rejects_bad_rate(gbm_system):
    with pytest.raises(ValueError):
        build_speed_measure(gbm_system, 0.0)


def test_to_dict(two_put_system, two_put_speed):
    d = two_put_speed.to_dict(two_put_system)
    assert d["atoms"][0]["price"] == pytest.approx(0.5)
    assert d["barriers"]["lower_kind"] == "absorbing"
