"""Birth-death chain approximation of the time-changed Brownian motion Z.

States z_i sit on the scale axis. Between visits the chain holds for an
exponential time with mean

    h_i = m_i * 2 (z_i - z_{i-1}) (z_{i+1} - z_i) / (z_{i+1} - z_{i-1})

(the mass m_i times the Green function of the neighbour interval at z_i) and
then moves to a neighbour with the martingale probability
p_i = (z_i - z_{i-1}) / (z_{i+1} - z_{i-1}). The price is X = g(Z).

Terminal states:

``absorbing``  price 0, killed.
``growth``     top of a finite scale range with finite g-bar: X then grows like e^{rt}.
``floor``      natural lower end truncated at a small price.
``cap``        natural upper end truncated at a large price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError, NumericalError
from .scale import ScaleSystem, SpeedMeasure

TERMINAL = ("absorbing", "growth", "floor", "cap")


@dataclass(frozen=True, eq=False)
class ChainModel:
    """Nearest-neighbour chain on scale points with per-state holding means."""

    states: np.ndarray
    prices: np.ndarray
    fvals: np.ndarray
    masses: np.ndarray
    p_up: np.ndarray
    hold: np.ndarray
    kinds: tuple[str, ...]
    start: tuple[int, ...]
    start_weights: tuple[float, ...]
    r: float
    x0: float
    lower: str
    upper: str
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.states.size)

    @property
    def terminal(self) -> np.ndarray:
        return np.array([k in TERMINAL for k in self.kinds])

    def rate(self, i: int) -> float:
        """Jump rate 1/h_i of a non-terminal state."""
        return 1.0 / float(self.hold[i])

    def index(self, z: float, *, by: str = "scale", tol: float = 1e-9) -> int:
        """Index of the state at scale point (or price, with ``by='price'``) ``z``."""
        ref = self.states if by == "scale" else self.prices
        i = int(np.argmin(np.abs(ref - z)))
        if abs(ref[i] - z) > tol * max(1.0, abs(z)):
            raise KeyError(f"no chain state at {by} {z!r} (nearest {ref[i]!r})")
        return i

    def martingale_defect(self) -> np.ndarray:
        """p_i (z_{i+1} - z_i) - (1 - p_i)(z_i - z_{i-1}) at interior states."""
        z, p = self.states, self.p_up
        out = np.zeros(self.n)
        for i in self._interior():
            if self.kinds[i] == "reflecting":
                continue
            out[i] = p[i] * (z[i + 1] - z[i]) - (1 - p[i]) * (z[i] - z[i - 1])
        return out

    def _interior(self) -> np.ndarray:
        return np.flatnonzero(~self.terminal)

    def to_rows(self) -> list[tuple]:
        return [(float(z), float(x), float(m), float(p), float(h), k)
                for z, x, m, p, h, k in zip(self.states, self.prices, self.masses, self.p_up,
                                            self.hold, self.kinds)]


def _charged_regions(nu: SpeedMeasure, lo: float, hi: float) -> list[tuple[float, float]]:
    pos = nu.cell_mass > 0
    regions = []
    i = 0
    while i < pos.size:
        if pos[i]:
            j = i
            while j + 1 < pos.size and pos[j + 1]:
                j += 1
            a, b = max(nu.cell_left[i], lo), min(nu.cell_right[j], hi)
            if b > a:
                regions.append((float(a), float(b)))
            i = j + 1
        else:
            i += 1
    return regions


def _lattice(regions, n: int, anchors) -> tuple[np.ndarray, float]:
    total = sum(b - a for a, b in regions)
    if total <= 0:
        return np.empty(0), math.nan
    delta = total / max(n, 1)
    nz = [a for a in anchors if a != 0.0]
    if nz:
        k = max(1, round(abs(nz[0]) / delta))
        delta = abs(nz[0]) / k
    pts = []
    for a, b in regions:
        k = np.arange(math.ceil(a / delta), math.floor(b / delta) + 1)
        z = k * delta
        pts.append(z[(z > a) & (z < b)])
    return np.concatenate(pts), delta


def _cell_mass(g, z: np.ndarray, r: float, first_reflecting: bool) -> np.ndarray:
    """nu over the dual cell [midpoint left, midpoint right] of each interior state."""
    a = 0.5 * (z[:-2] + z[1:-1])
    b = 0.5 * (z[1:-1] + z[2:])
    _, ga = g.slopes(a)
    gb, _ = g.slopes(b)
    m = np.zeros(z.size)
    m[1:-1] = (gb - ga) / (2 * r * g(z[1:-1]))
    if first_reflecting:
        gb0, _ = g.slopes(0.5 * (z[0] + z[1]))
        m[0] = gb0 / (2 * r * g(z[0]))
    return m


def _chord_mass(x: np.ndarray, z: np.ndarray, r: float, first_reflecting: bool) -> np.ndarray:
    ch = np.diff(x) / np.diff(z)
    m = np.zeros(z.size)
    m[1:-1] = (ch[1:] - ch[:-1]) / (2 * r * x[1:-1])
    if first_reflecting:
        m[0] = ch[0] / (2 * r * x[0])
    return m


def discretize_speed_measure(nu: SpeedMeasure, sys: ScaleSystem, n: int = 400, *,
                             floor: float | None = None, cap: float | None = None,
                             anchors=(), mass: str = "cell") -> ChainModel:
    """Chain whose states carry the nu-mass of their dual cells.

    Parameters
    ----------
    nu, sys
        Speed measure and the scale system it was built from.
    n
        Target number of lattice states across the charged (non-atomic) part.
    floor, cap
        Optional price truncations overriding the represented range; the
        corresponding ends become natural terminals.
    anchors
        Scale points that must be states. The lattice spacing is adjusted so
        the first non-zero anchor is a lattice point (0 always is).
    mass
        ``cell``: nu of the dual cell (default). ``chord``: mass making the
        discrete generator of g exact at every state.

    Atoms become states with their exact masses, zero-mass intervals get no
    interior states, and states left with zero mass are removed.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    if mass not in ("cell", "chord"):
        raise ValueError(f"unknown mass rule {mass!r}")
    r = nu.r
    lo, hi = sys.s_low, sys.s_high
    lower, upper = sys.lower, sys.upper
    if floor is not None:
        if not sys.x_low < floor < sys.x0:
            raise ValueError("floor must lie between the lower end and x0")
        lo, lower = float(sys.s(floor)), "natural"
    if cap is not None:
        if not sys.x0 < cap < sys.g.values[-1]:
            raise ValueError("cap must lie between x0 and the top of the represented range")
        hi, upper = float(sys.s(cap)), "natural"

    regions = _charged_regions(nu, lo, hi)
    anchors = [float(a) for a in anchors if lo < a < hi]
    latt, delta = _lattice(regions, n, anchors)
    must = [lo, hi] + [y for y, _, _ in nu.atoms if lo <= y <= hi] + anchors
    must += [e for a, b in regions for e in (a, b)]
    if any(a < 0.0 < b for a, b in regions):
        must.append(0.0)
    must = np.unique(np.asarray(must, float))
    if latt.size:
        near = np.min(np.abs(latt[:, None] - must[None, :]), axis=1) < 0.25 * delta
        latt = latt[~near]
    z = np.unique(np.concatenate([latt, must]))
    z = z[(z >= lo) & (z <= hi)]

    refl = lower == "reflecting"
    while True:
        if z.size < 2:
            raise ModelError("fewer than two reachable chain states")
        x = np.asarray(sys.g(z), float)
        m = _cell_mass(sys.g, z, r, refl) if mass == "cell" else _chord_mass(x, z, r, refl)
        scale = max(float(np.max(np.abs(m))), 1e-300)
        drop = np.flatnonzero(m[1:-1] <= 1e-12 * scale) + 1
        if refl and m[0] <= 0:
            raise ModelError("reflecting state carries no mass")
        if drop.size == 0:
            break
        z = np.delete(z, drop)

    kinds = ["interior"] * z.size
    kinds[0] = {"absorbing": "absorbing", "reflecting": "reflecting", "natural": "floor"}[lower]
    kinds[-1] = {"growth": "growth", "natural": "cap"}[upper]
    if z.size == 2 and kinds[0] != "reflecting":
        raise ModelError("fewer than two reachable chain states")
    p = np.full(z.size, np.nan)
    h = np.zeros(z.size)
    dz = np.diff(z)
    p[1:-1] = dz[:-1] / (dz[:-1] + dz[1:])
    h[1:-1] = m[1:-1] * 2 * dz[:-1] * dz[1:] / (dz[:-1] + dz[1:])
    if refl:
        p[0] = 1.0
        h[0] = 2 * m[0] * dz[0]
    m = np.where([k in TERMINAL for k in kinds], 0.0, m)
    fv = np.asarray(sys.f(z), float)

    k0 = int(np.argmin(np.abs(z)))
    if abs(z[k0]) <= 1e-12 * max(1.0, float(np.max(np.abs(z)))):
        start, weights = (k0,), (1.0,)
    else:
        j = int(np.searchsorted(z, 0.0))
        a, b = z[j - 1], z[j]
        start, weights = (j - 1, j), (float(b / (b - a)), float(-a / (b - a)))
    meta = {"delta": delta, "mass_rule": mass, "floor_discount": sys.meta.get("floor_discount", 0.0),
            "s_low": lo, "s_high": hi}
    return ChainModel(z, x, fv, m, p, h, tuple(kinds), start, weights, float(r), float(sys.x0),
                      lower, upper, meta)


def _down_ratios(chain: ChainModel, r: float) -> np.ndarray:
    """q_i = E_i[exp(-r H_{i-1})] for i >= 1 (q_0 unused)."""
    q = np.zeros(chain.n)
    top = chain.n - 1
    if chain.kinds[top] == "cap":
        # beyond the cap the continuous model is used: phi(x)/phi(y) = f ratio
        q[top] = chain.fvals[top] / chain.fvals[top - 1]
    for i in range(top - 1, 0, -1):
        a = 1.0 + r * chain.hold[i]
        q[i] = (1 - chain.p_up[i]) / (a - chain.p_up[i] * q[i + 1])
    return q


def _up_ratios(chain: ChainModel, r: float) -> np.ndarray:
    """w_i = E_i[exp(-r H_{i+1})] for i <= n-2 (w_{n-1} unused)."""
    w = np.zeros(chain.n)
    if chain.kinds[0] == "reflecting":
        w[0] = 1.0 / (1.0 + r * chain.hold[0])
    for i in range(1, chain.n - 1):
        a = 1.0 + r * chain.hold[i]
        w[i] = chain.p_up[i] / (a - (1 - chain.p_up[i]) * w[i - 1])
    return w


def _laplace_from(chain: ChainModel, r: float, i: int, j: int) -> float:
    if i == j:
        return 1.0
    if chain.kinds[i] in TERMINAL:
        if chain.kinds[i] == "cap" and j < i:
            return float(chain.fvals[i] / chain.fvals[j])
        return 0.0
    if j < i:
        return float(np.prod(_down_ratios(chain, r)[j + 1:i + 1]))
    return float(np.prod(_up_ratios(chain, r)[i:j]))


def chain_hitting_laplace(chain: ChainModel, r: float | None = None, from_state=None,
                          to_state=None, *, by: str = "scale") -> float:
    """E[exp(-r H_to)] on the chain, started at ``from_state`` (default: the start law).

    Solves the tridiagonal system (1 + r h_i) u_i = p_i u_{i+1} + (1 - p_i) u_{i-1}
    with u = 1 at the target by its LU recursion (products of one-step ratios).
    Terminal states other than the target do not return (u = 0), except a
    natural cap, which continues with the exact ratio f(cap)/f(target).
    """
    r = chain.r if r is None else float(r)
    if not r > 0:
        raise NumericalError("hitting transform needs r > 0 (the system is singular otherwise)")
    if to_state is None:
        raise ValueError("to_state is required")
    j = chain.index(to_state, by=by)
    if from_state is None:
        return float(sum(w * _laplace_from(chain, r, i, j) for i, w in zip(chain.start, chain.start_weights)))
    return _laplace_from(chain, r, chain.index(from_state, by=by), j)


def start_laplace(chain: ChainModel, r: float | None = None) -> np.ndarray:
    """E_start[exp(-r H_j)] for every state j at or below the start (zero above)."""
    r = chain.r if r is None else float(r)
    q = _down_ratios(chain, r)
    a = chain.start[0]
    with np.errstate(divide="ignore"):
        logq = np.log(q[1:a + 1])
    # u_{a -> j} = prod_{k=j+1}^{a} q_k, accumulated in logs
    tail = np.concatenate([np.cumsum(logq[::-1])[::-1], [0.0]])
    u = np.exp(tail)
    weight = chain.start_weights[0]
    if len(chain.start) == 2:
        weight += chain.start_weights[1] * q[chain.start[1]]
    out = np.zeros(chain.n)
    out[:a + 1] = weight * u
    return out


def chain_put_price(chain: ChainModel, r: float | None = None, x0: float | None = None,
                    K: float = 0.0, *, return_state: bool = False):
    """max over states with price <= min(x0, K) of (K - g(z)) E_start[exp(-r H_z)].

    Immediate exercise (K - x0)^+ is included. With ``return_state`` the
    optimal state index is returned as well (None for immediate exercise).
    """
    x0 = chain.x0 if x0 is None else float(x0)
    if K < 0:
        raise ValueError("K must be non-negative")
    u = start_laplace(chain, r)
    best, arg = max(K - x0, 0.0), None
    tol = 1e-12 * max(1.0, x0)
    for j in range(chain.n):
        xj = chain.prices[j]
        if xj <= min(x0, K) + tol and chain.kinds[j] not in ("growth", "cap") and u[j] > 0:
            val = (K - xj) * u[j]
            if val > best:
                best, arg = float(val), j
    if return_state:
        return best, arg
    return best


def generator_residuals(chain: ChainModel, which: str = "g", r: float | None = None) -> np.ndarray:
    """Relative residual of lambda_i [p_i v_{i+1} + (1-p_i) v_{i-1} - v_i] = r v_i.

    ``which`` selects v = g (prices) or v = f (phi along the chain). Entries
    at terminal states are zero. At a reflecting state only g satisfies the
    identity: phi is the solution killed at the barrier, not the reflected one.
    """
    r = chain.r if r is None else float(r)
    v = chain.prices if which == "g" else chain.fvals
    out = np.zeros(chain.n)
    for i in np.flatnonzero(~chain.terminal):
        up = v[i + 1]
        down = v[i - 1] if i > 0 else v[i]
        p = chain.p_up[i]
        lhs = (p * up + (1 - p) * down - v[i]) / chain.hold[i]
        out[i] = (lhs - r * v[i]) / (r * v[i])
    return out


def hitting_convergence(nu: SpeedMeasure, sys: ScaleSystem, target: float, ns=(250, 500, 1000, 2000),
                        **kw) -> list[tuple[int, float, float, float]]:
    """Chain estimate of E_x0[exp(-r H_target)] against phi(x0)/phi(target) on refining lattices.

    ``target`` is a price below x0; it is made a lattice state on every grid.
    Returns rows (n, delta, chain value, absolute error).
    """
    x0 = sys.x0
    if not sys.x_low < target < x0:
        raise ValueError(f"target must lie in ({sys.x_low:g}, {x0:g})")
    exact = float(sys.phi(x0) / sys.phi(target))
    anchor = float(sys.s(target))
    rows = []
    for n in ns:
        c = discretize_speed_measure(nu, sys, int(n), anchors=(anchor,), **kw)
        v = chain_hitting_laplace(c, nu.r, to_state=anchor)
        rows.append((int(n), float(c.meta["delta"]), v, abs(v - exact)))
    return rows
