"""Forward pricer: fundamental solution of the pricing ODE and put prices."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from perpput.errors import DomainError
from perpput.forward import (VolCurve, exercise_level, fundamental_phi, gbm_khat, gbm_put,
                             hitting_laplace, ode_residual, perpetual_put_price)

from conftest import R, X0, gbm_price, gbm_sigma, smooth_phi, smooth_price, smooth_sigma2


@pytest.fixture(scope="module")
def gbm_fs():
    return fundamental_phi(VolCurve.constant(gbm_sigma()), R, X0)


def test_gbm_closed_form_matches_oracle():
    k = np.linspace(0.01, 3.0, 40)
    for beta in (0.5, 1.0, 3.0):
        assert np.max(np.abs(gbm_put(gbm_sigma(beta), R, X0, k) - gbm_price(k, beta))) < 1e-14
    assert gbm_khat(gbm_sigma(), R, X0) == pytest.approx(2.0)


def test_gbm_phi_is_power(gbm_fs):
    m = (gbm_fs.x >= 1e-3) & (gbm_fs.x <= 1e3)
    assert np.max(np.abs(gbm_fs.phi[m] * gbm_fs.x[m] - 1)) < 1e-9
    assert gbm_fs.dphi_x0 == pytest.approx(-1.0, rel=1e-9)
    assert gbm_fs.khat == pytest.approx(2.0, rel=1e-9)


def test_gbm_prices_fifty_strikes(gbm_fs):
    t = time.perf_counter()
    fs = fundamental_phi(VolCurve.constant(gbm_sigma()), R, X0)
    k = np.linspace(3.0 / 50, 3.0, 50)
    p = perpetual_put_price(fs, k)
    assert time.perf_counter() - t < 5.0
    assert np.max(np.abs(p / gbm_price(k) - 1)) <= 1e-6


@pytest.mark.parametrize("beta", [0.5, 2.0, 4.0])
def test_other_betas(beta):
    fs = fundamental_phi(VolCurve.constant(gbm_sigma(beta)), R, X0)
    k = np.linspace(0.1, 3.0, 30)
    assert np.max(np.abs(perpetual_put_price(fs, k) / gbm_price(k, beta) - 1)) <= 1e-6


def test_ode_residual_small(gbm_fs):
    vol = VolCurve.constant(gbm_sigma())
    assert np.max(ode_residual(gbm_fs, vol)) < 1e-5


def test_local_vol_smooth_example():
    vol = VolCurve.from_function(lambda x: np.sqrt(smooth_sigma2(x)))
    fs = fundamental_phi(vol, R, X0)
    x = np.array([0.05, 0.2, 0.5, 0.9])
    assert np.max(np.abs(fs.phi_at(x)[0] / smooth_phi(x) - 1)) < 1e-7
    assert fs.khat == pytest.approx(5 / 3, rel=1e-7)
    k = np.linspace(0.05, 2.5, 30)
    assert np.max(np.abs(perpetual_put_price(fs, k) - smooth_price(k))) < 1e-7


def test_exercise_level_and_hitting(gbm_fs):
    assert exercise_level(gbm_fs, 1.0) == pytest.approx(0.5, rel=1e-7)
    assert exercise_level(gbm_fs, 2.5) == X0
    assert hitting_laplace(gbm_fs, 1.0, 0.5) == pytest.approx(0.5, rel=1e-7)
    assert hitting_laplace(gbm_fs, 1.0, 2.0) == pytest.approx(0.5)
    assert hitting_laplace(gbm_fs, 0.7, 0.7) == 1.0


def test_price_bounds(gbm_fs):
    k = np.linspace(0.0, 4.0, 81)
    p = perpetual_put_price(gbm_fs, k)
    assert np.all(p >= np.maximum(k - X0, 0) - 1e-15)
    assert np.all(p <= k + 1e-15)
    assert np.all(np.diff(p, 2) >= -1e-12)


def test_negative_strike_rejected(gbm_fs):
    with pytest.raises(DomainError):
        perpetual_put_price(gbm_fs, -1.0)


def test_vol_table(tmp_path):
    p = tmp_path / "vol.csv"
    p.write_text("x,sigma\n0.5,0.3\n1,0.2\n2,0.25\n")
    vol = VolCurve.from_csv(p)
    assert vol(1.0) == pytest.approx(0.2)
    assert vol(0.1) == pytest.approx(0.3)
    assert vol(5.0) == pytest.approx(0.25)


def test_constant_vol_rejects_nonpositive():
    with pytest.raises(ValueError):
        VolCurve.constant(0.0)
