"""Event-driven Monte Carlo of a ChainModel with per-path counter-based streams."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .chain import ChainModel, chain_put_price, start_laplace

FLAGS = ("running", "absorbed", "growing", "truncated", "horizon", "hit")
_BLOCK = 32


def path_generator(seed: int, path_id: int) -> np.random.Generator:
    """Philox stream keyed by (path id, seed): independent of how paths are batched."""
    key = np.array([path_id, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PathSample:
    path_id: int
    seed: int
    times: np.ndarray
    states: np.ndarray
    prices: np.ndarray
    flag: str


class _Streams:
    """Per-path uniform buffers refilled from each path's own generator."""

    def __init__(self, seed: int, n: int, offset: int = 0):
        self.gens = [path_generator(seed, offset + i) for i in range(n)]
        self.buf = np.empty((n, _BLOCK))
        self.cur = np.full(n, _BLOCK)

    def draw(self, rows: np.ndarray, k: int) -> np.ndarray:
        need = rows[self.cur[rows] + k > _BLOCK]
        for i in need:
            rest = self.buf[i, self.cur[i]:].copy()
            self.buf[i, :rest.size] = rest
            self.buf[i, rest.size:] = self.gens[i].random(_BLOCK - rest.size)
            self.cur[i] = 0
        c = self.cur[rows]
        out = self.buf[rows[:, None], c[:, None] + np.arange(k)[None, :]]
        self.cur[rows] = c + k
        return out


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated paths: per-path end data plus optional full event records."""

    chain: ChainModel
    r: float
    horizon: float
    seed: int
    flags: np.ndarray          # index into FLAGS
    end_time: np.ndarray       # time of the terminal event (horizon if none)
    end_state: np.ndarray
    hit_time: np.ndarray       # first hit of the target state (inf if none)
    observe: tuple[float, ...]
    observed: np.ndarray       # state index at each observation time (-1: not yet set)
    events: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None  # (path, time, state)
    offsets: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.flags.size)

    def __getitem__(self, i: int) -> PathSample:
        if self.events is None:
            raise ValueError("paths were simulated without event records")
        a, b = self.offsets[i], self.offsets[i + 1]
        st = self.events[2][a:b]
        return PathSample(int(i), self.seed, self.events[1][a:b].copy(), self.chain.states[st],
                          self.chain.prices[st], FLAGS[self.flags[i]])

    def samples(self) -> list[PathSample]:
        return [self[i] for i in range(len(self))]

    def flag_counts(self) -> dict[str, int]:
        return {f: int(np.sum(self.flags == k)) for k, f in enumerate(FLAGS) if np.any(self.flags == k)}

    def _state_at(self, t: float) -> np.ndarray:
        if t in self.observe:
            return self.observed[:, self.observe.index(t)]
        if self.events is None:
            raise ValueError(f"t={t!r} was not an observation time and no events were recorded")
        pid, times, st = self.events
        out = np.empty(len(self), int)
        for i in range(len(self)):
            a, b = self.offsets[i], self.offsets[i + 1]
            k = int(np.searchsorted(times[a:b], t, side="right")) - 1
            out[i] = st[a + k]
        return out

    def prices_at(self, t: float) -> np.ndarray:
        """X_t per path (X = 0 after absorption, e^{r(t-t0)} growth after growth onset)."""
        if t > self.horizon:
            raise ValueError("t beyond the simulated horizon")
        if t == 0:
            return np.full(len(self), self.chain.x0)
        x = self.chain.prices[self._state_at(t)].astype(float)
        grow = np.isin(self.flags, [FLAGS.index("growing"), FLAGS.index("truncated")]) & (self.end_time <= t)
        x[grow] = self.chain.prices[self.end_state[grow]] * np.exp(self.r * (t - self.end_time[grow]))
        return x

    def holding_times(self, i: int) -> np.ndarray:
        """Completed sojourn lengths in state ``i`` across all recorded paths."""
        if self.events is None:
            raise ValueError("no event records")
        pid, times, st = self.events
        same = pid[:-1] == pid[1:]
        sel = same & (st[:-1] == i)
        return (times[1:] - times[:-1])[sel]

    def to_csv(self, path: str | Path, header_lines=()) -> None:
        if self.events is None:
            raise ValueError("no event records")
        pid, times, st = self.events
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["path_id", "event_time", "price"])
            for p, t, s in zip(pid, times, st):
                w.writerow([int(p), repr(float(t)), repr(float(self.chain.prices[s]))])


def simulate_paths(chain: ChainModel, r: float | None = None, horizon: float = 1.0,
                   n_paths: int = 1000, seed: int = 0, *, observe=(), record: bool = True,
                   target: int | None = None, stop_at_hit: bool = False) -> PathEnsemble:
    """Simulate ``n_paths`` chain paths up to ``horizon``.

    Exponential holding with mean h_i, then a nearest-neighbour jump (up with
    probability p_i). A path started on a zero-mass interval first jumps to a
    flanking state with the martingale weights. Absorbing states end the path at
    price 0; growth and truncation states switch it to X_t = X_{t0} e^{r(t - t0)}.
    """
    r = chain.r if r is None else float(r)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    observe = tuple(float(t) for t in observe)
    if any(t < 0 or t > horizon for t in observe):
        raise ValueError("observation times must lie in [0, horizon]")
    kinds = np.array([FLAGS.index({"absorbing": "absorbed", "growth": "growing"}.get(k, "truncated"))
                      if k in ("absorbing", "growth", "floor", "cap") else 0 for k in chain.kinds])
    p_up, hold = chain.p_up, chain.hold
    streams = _Streams(seed, n_paths)
    rows = np.arange(n_paths)

    if len(chain.start) == 2:
        u0 = streams.draw(rows, 1)[:, 0]
        idx = np.where(u0 < chain.start_weights[0], chain.start[0], chain.start[1])
    else:
        idx = np.full(n_paths, chain.start[0])
    t = np.zeros(n_paths)
    flags = kinds[idx].copy()
    end_time = np.where(flags > 0, 0.0, horizon)
    hit = np.full(n_paths, np.inf)
    if target is not None:
        hit[idx == target] = 0.0
        if stop_at_hit:
            flags[idx == target] = FLAGS.index("hit")
            end_time[idx == target] = 0.0
    observed = np.full((n_paths, len(observe)), -1)
    obs = np.asarray(observe)
    rec_p, rec_t, rec_s = ([rows.copy()], [t.copy()], [idx.copy()]) if record else ([], [], [])

    active = flags == 0
    while np.any(active):
        a = rows[active]
        u = streams.draw(a, 2)
        tn = t[a] - hold[idx[a]] * np.log1p(-u[:, 0])
        if obs.size:
            cross = (t[a, None] <= obs[None, :]) & (obs[None, :] < tn[:, None])
            rr, cc = np.nonzero(cross)
            observed[a[rr], cc] = idx[a[rr]]
        over = tn > horizon
        if np.any(over):
            flags[a[over]] = FLAGS.index("horizon")
        go = a[~over]
        up = u[~over, 1] < p_up[idx[go]]
        idx[go] += np.where(up, 1, -1)
        t[go] = tn[~over]
        if record:
            rec_p.append(go.copy())
            rec_t.append(t[go].copy())
            rec_s.append(idx[go].copy())
        term = kinds[idx[go]]
        ended = term > 0
        flags[go[ended]] = term[ended]
        end_time[go[ended]] = t[go[ended]]
        if target is not None:
            first = (idx[go] == target) & ~np.isfinite(hit[go])
            hit[go[first]] = t[go[first]]
            if stop_at_hit:
                flags[go[first]] = FLAGS.index("hit")
                end_time[go[first]] = t[go[first]]
        active = flags == 0

    # observation times after a path stopped moving: it sits in its last state
    for k, to in enumerate(observe):
        unset = observed[:, k] < 0
        observed[unset, k] = idx[unset]
    events = offsets = None
    if record:
        pid = np.concatenate(rec_p)
        tt = np.concatenate(rec_t)
        ss = np.concatenate(rec_s)
        order = np.lexsort((tt, pid))
        events = (pid[order], tt[order], ss[order])
        offsets = np.searchsorted(events[0], np.arange(n_paths + 1))
    return PathEnsemble(chain, r, float(horizon), int(seed), flags, end_time, idx.copy(), hit,
                        observe, observed, events, offsets)


class MartingaleCheck(NamedTuple):
    mean: float
    stderr: float
    deviation: float  # (mean - x0) / stderr, 0 when stderr is 0


def martingale_diagnostic(paths: PathEnsemble, r: float | None = None, x0: float | None = None,
                          t: float = 0.0) -> MartingaleCheck:
    """Sample mean and standard error of exp(-rt) X_t across paths."""
    r = paths.r if r is None else float(r)
    x0 = paths.chain.x0 if x0 is None else float(x0)
    v = math.exp(-r * t) * paths.prices_at(t)
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return MartingaleCheck(mean, se, (mean - x0) / se if se > 0 else 0.0)


class MCPrice(NamedTuple):
    estimate: float
    stderr: float
    exact: float


def mc_put_price(chain: ChainModel, r: float | None = None, x0: float | None = None, K: float = 0.0,
                 n_paths: int = 10_000, seed: int = 0, *, horizon: float | None = None) -> MCPrice:
    """Monte Carlo of (K - g(z*)) E[exp(-r H_{z*})] for the chain-optimal state z*."""
    r = chain.r if r is None else float(r)
    x0 = chain.x0 if x0 is None else float(x0)
    exact, j = chain_put_price(chain, r, x0, K, return_state=True)
    if j is None:
        return MCPrice(float(exact), 0.0, float(exact))
    horizon = 50.0 / r if horizon is None else horizon
    ens = simulate_paths(chain, r, horizon, n_paths, seed, record=False, target=j, stop_at_hit=True)
    v = (K - chain.prices[j]) * np.exp(-r * ens.hit_time)
    return MCPrice(float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_paths)), float(exact))


def exact_absorption_probability(chain: ChainModel) -> float:
    """P(absorbed at 0 eventually) from the start law (r -> 0 limit of the hitting transform)."""
    if chain.kinds[0] != "absorbing":
        return 0.0
    return float(start_laplace(chain, 1e-300)[0])
