"""Event-driven simulation of chains: reproducibility and statistical checks."""

from __future__ import annotations

import math

import numpy as np
import pytest

from perpput.chain import discretize_speed_measure
from perpput.simulate import (FLAGS, exact_absorption_probability, martingale_diagnostic,
                              mc_put_price, path_generator, simulate_paths)

from conftest import R, X0


@pytest.fixture(scope="module")
def chain(two_put_system, two_put_speed):
    return discretize_speed_measure(two_put_speed, two_put_system)


@pytest.fixture(scope="module")
def ensemble(chain):
    return simulate_paths(chain, R, 200 / R, 20_000, seed=11, observe=(0.5 / R, 1 / R))


def test_streams_are_keyed_by_path():
    a = path_generator(5, 3).random(4)
    b = path_generator(5, 3).random(4)
    c = path_generator(5, 4).random(4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_same_seed_same_paths(chain):
    a = simulate_paths(chain, R, 50.0, 200, seed=7)
    b = simulate_paths(chain, R, 50.0, 200, seed=7)
    assert all(np.array_equal(x, y) for x, y in zip(a.events, b.events))
    c = simulate_paths(chain, R, 50.0, 200, seed=8)
    assert not np.array_equal(a.end_time, c.end_time)


def test_paths_independent_of_batch_size(chain):
    small = simulate_paths(chain, R, 50.0, 10, seed=3)
    large = simulate_paths(chain, R, 50.0, 40, seed=3)
    for i in range(10):
        assert np.array_equal(small[i].times, large[i].times)
        assert np.array_equal(small[i].prices, large[i].prices)


def test_paths_start_at_spot_flanks(ensemble):
    first = ensemble[0]
    assert first.times[0] == 0.0
    assert first.prices[0] in (0.5, 2.0)
    assert np.all(np.diff(first.times) > 0)


def test_absorption_frequency(chain, ensemble):
    p = exact_absorption_probability(chain)
    assert p == pytest.approx(4 / 9, abs=1e-12)
    n = len(ensemble)
    frac = ensemble.flag_counts()["absorbed"] / n
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_holding_time_mean(ensemble):
    h = ensemble.holding_times(1)
    assert abs(h.mean() - 1 / (3 * R)) <= 3 * h.std() / math.sqrt(h.size)


def test_martingale(ensemble):
    assert martingale_diagnostic(ensemble, t=0.0).mean == X0
    for t in (0.5 / R, 1 / R):
        m = martingale_diagnostic(ensemble, t=t)
        assert abs(m.deviation) <= 3


def test_growth_paths_grow_exponentially(ensemble):
    grow = np.flatnonzero(ensemble.flags == FLAGS.index("growing"))
    t = 1 / R
    x = ensemble.prices_at(t)
    for i in grow[:50]:
        if ensemble.end_time[i] <= t:
            assert x[i] == pytest.approx(2.0 * math.exp(R * (t - ensemble.end_time[i])))


def test_mc_price(chain):
    mc = mc_put_price(chain, K=1.0, n_paths=20_000, seed=5)
    assert mc.exact == pytest.approx(1 / 3, abs=1e-12)
    assert abs(mc.estimate - mc.exact) <= 3 * mc.stderr


def test_immediate_exercise_needs_no_paths(chain):
    mc = mc_put_price(chain, K=3.0, n_paths=10)
    assert (mc.estimate, mc.stderr) == (2.0, 0.0)


def test_csv(tmp_path, chain):
    ens = simulate_paths(chain, R, 20.0, 5, seed=1)
    p = tmp_path / "paths.csv"
    ens.to_csv(p, ["seed: 1"])
    lines = p.read_text().splitlines()
    assert lines[0] == "# seed: 1"
    assert lines[1] == "path_id,event_time,price"
    assert len(lines) == 2 + ens.events[0].size


def test_argument_checks(chain):
    with pytest.raises(ValueError):
        simulate_paths(chain, R, 0.0, 10)
    with pytest.raises(ValueError):
        simulate_paths(chain, R, 1.0, 0)
    with pytest.raises(ValueError):
        simulate_paths(chain, R, 1.0, 10, observe=(2.0,))
    ens = simulate_paths(chain, R, 1.0, 10, record=False)
    with pytest.raises(ValueError):
        ens[0]


def _brute_force_holding(m, d_lo, d_hi, eps, n_paths, seed):
    """Gamma = m L^{z_i} at exit from (z_i - d_lo, z_i + d_hi) by a fine random walk.

    Walk on the eps lattice with time step eps^2; local time at z_i is
    eps times the number of visits.
    """
    rng = np.random.default_rng(seed)
    a, b = round(d_lo / eps), round(d_hi / eps)
    pos = np.zeros(n_paths, int)
    visits = np.zeros(n_paths, int)
    alive = np.ones(n_paths, bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        visits[idx] += pos[idx] == 0
        pos[idx] += np.where(rng.random(idx.size) < 0.5, 1, -1)
        alive[idx] = (pos[idx] > -a) & (pos[idx] < b)
    return m * eps * visits, pos >= b


def test_holding_law_matches_brute_force_local_time(chain):
    from scipy import stats

    i = 1
    z = chain.states
    d_lo, d_hi = z[i] - z[i - 1], z[i + 1] - z[i]
    gamma, up = _brute_force_holding(chain.masses[i], d_lo, d_hi, 0.05, 20_000, seed=17)
    se = gamma.std() / math.sqrt(gamma.size)
    assert abs(gamma.mean() - chain.hold[i]) <= 3 * se
    p = chain.p_up[i]
    assert abs(up.mean() - p) <= 3 * math.sqrt(p * (1 - p) / up.size)
    # the local time at exit is exponential: visits are geometric, so spread each
    # sample uniformly over its lattice cell before comparing
    cell = chain.masses[i] * 0.05
    jitter = np.random.default_rng(18).random(gamma.size) * cell
    ks = stats.kstest((gamma - jitter) / chain.hold[i], "expon")
    assert ks.pvalue > 1e-3
