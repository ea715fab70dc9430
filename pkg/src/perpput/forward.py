"""Forward pricer for perpetual puts under dX = rX dt + sigma(X) X dW.

The decreasing fundamental solution is

    phi(x) = x * int_x^inf y^-2 exp(-I(y)) dy,   I(y) = int_{x0}^y 2r / (z sigma(z)^2) dz,

normalised to phi(x0) = 1. In log coordinates u = ln x the outer integral is
accumulated backwards cell by cell, with the inner exponent integrated by
nested Gauss-Legendre rules, so no quantity ever overflows or cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._numerics import hermite_eval
from .curves import ConvexCurve, read_quotes
from .errors import CurveStructureError, DomainError, ForwardError

_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True, eq=False)
class VolCurve:
    """Local volatility sigma(x) > 0.

    Either analytic (``func``) or tabulated on ``x`` and interpolated
    monotonically in log x, constant beyond the table. ``split``/``sigma_above``
    optionally override the value above a price level (used for the constant
    continuation above the spot).
    """

    x: np.ndarray | None = None
    sigma: np.ndarray | None = None
    func: Callable | None = None
    tag: str = ""
    split: float | None = None
    sigma_above: float | None = None
    meta: dict = field(default_factory=dict)
    _pchip: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.func is None:
            if self.x is None or self.sigma is None:
                raise ValueError("VolCurve needs a function or a table")
            x = np.asarray(self.x, float)
            s = np.asarray(self.sigma, float)
            if x.shape != s.shape or x.size < 2:
                raise CurveStructureError("vol table needs matching arrays with two or more rows")
            if np.any(np.diff(x) <= 0) or np.any(x <= 0):
                raise CurveStructureError("vol table abscissae must be positive and increasing")
            if np.any(~np.isfinite(s)) or np.any(s <= 0):
                raise CurveStructureError("sigma must be positive and finite")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "sigma", s)
            object.__setattr__(self, "_pchip", PchipInterpolator(np.log(x), s, extrapolate=False))

    @classmethod
    def constant(cls, sigma: float) -> "VolCurve":
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        return cls(func=lambda x: np.full_like(np.asarray(x, float), sigma), tag=f"constant:{sigma!r}")

    @classmethod
    def from_function(cls, func: Callable, tag: str = "function") -> "VolCurve":
        return cls(func=func, tag=tag)

    @classmethod
    def from_csv(cls, path: str | Path) -> "VolCurve":
        x, s = read_quotes(path, header=("x", "sigma"))
        return cls(np.array(x), np.array(s), tag=f"table:{Path(path).name}")

    def __call__(self, x) -> np.ndarray:
        xa = np.asarray(x, float)
        if self.func is not None:
            out = np.asarray(self.func(xa), float) * np.ones_like(xa)
        else:
            lx = np.clip(np.log(np.maximum(xa, 1e-300)), math.log(self.x[0]), math.log(self.x[-1]))
            out = self._pchip(lx)
        if self.split is not None:
            out = np.where(xa > self.split, self.sigma_above, out)
        return out

    def eta(self, x) -> np.ndarray:
        """eta(x) = x sigma(x)."""
        return np.asarray(x, float) * self(x)

    def to_csv_rows(self) -> list[tuple[float, float]]:
        if self.x is None:
            raise ValueError("analytic VolCurve has no table")
        return list(zip(self.x.tolist(), self.sigma.tolist()))


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    """phi on a log-uniform grid with phi(x0) = 1; psi(x) = x."""

    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    x0: float
    r: float
    k0: int

    @property
    def dphi_x0(self) -> float:
        return float(self.dphi[self.k0])

    @property
    def khat(self) -> float:
        return self.x0 - 1.0 / self.dphi_x0

    def psi(self, x):
        return np.asarray(x, float) / self.x0

    def phi_at(self, x):
        """phi and phi' at arbitrary points of the grid domain (cubic Hermite)."""
        xa = np.atleast_1d(np.asarray(x, float))
        if np.any(xa < self.x[0] * (1 - 1e-12)) or np.any(xa > self.x[-1] * (1 + 1e-12)):
            raise DomainError(f"x outside grid [{self.x[0]:g}, {self.x[-1]:g}]")
        i = np.clip(np.searchsorted(self.x, xa, side="right") - 1, 0, self.x.size - 2)
        v, d = hermite_eval(self.x[i], self.x[i + 1], self.phi[i], self.phi[i + 1],
                            self.dphi[i], self.dphi[i + 1], xa)
        if np.ndim(x) == 0:
            return float(v[0]), float(d[0])
        return v, d

    def as_curve(self, upto_x0: bool = True) -> ConvexCurve:
        m = slice(0, self.k0 + 1) if upto_x0 else slice(None)
        return ConvexCurve(self.x[m], self.phi[m], self.dphi[m], self.dphi[m],
                           np.zeros(len(self.x[m]) - 1, bool), np.zeros(len(self.x[m]) - 1, int),
                           True, None, {"kind": "phi", "x0": self.x0})


def _log_grid(x0: float, n: int, decades_lo: float, decades_hi: float) -> tuple[np.ndarray, int]:
    if n < 5:
        raise ValueError("grid needs at least 5 points")
    lo, hi = math.log(x0) - decades_lo * math.log(10), math.log(x0) + decades_hi * math.log(10)
    h = (hi - lo) / (n - 1)
    k0 = int(round((math.log(x0) - lo) / h))
    u = math.log(x0) + (np.arange(n) - k0) * h
    return u, k0


def fundamental_phi(vol: VolCurve, r: float, x0: float, n: int = 4097, *,
                    decades: tuple[float, float] = (4.0, 4.0),
                    tail_decades: float = 4.0) -> FundamentalSolution:
    """Decreasing fundamental solution phi with phi(x0) = 1 on a log grid.

    The grid has ``n`` points log-uniform on [x0 10^-a, x0 10^b] and always
    contains x0 as a node. The outer integral is carried ``tail_decades``
    further up on the same spacing; sigma is held constant beyond that.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if not x0 > 0:
        raise ValueError("x0 must be positive")
    u, k0 = _log_grid(x0, n, *decades)
    h = u[1] - u[0]
    n_out = n
    extra = int(math.ceil(tail_decades * math.log(10) / h))
    u = np.concatenate([u, u[-1] + h * np.arange(1, extra + 1)])
    n = u.size
    beta = lambda v: 2.0 * r / vol(np.exp(v)) ** 2

    # inner exponent increments per cell and at the outer quadrature nodes
    t = h * _GL_T                                   # outer nodes within a cell
    cells = u[:-1, None]
    dI = h * (beta(cells + t[None, :]) @ _GL_W)      # I(u_{k+1}) - I(u_k)
    # I(u_k + t_j) - I(u_k): inner rule on [0, t_j]
    inner_pts = cells[:, :, None] + t[None, :, None] * _GL_T[None, None, :]
    partial = (beta(inner_pts) @ _GL_W) * t[None, :]
    if not (np.all(np.isfinite(dI)) and np.all(np.isfinite(partial))):
        raise ForwardError("sigma is zero or non-finite on the grid", None)
    # d_k = int_0^h e^{-t} expm1(-(I(u_k+t) - I_k)) dt
    d = h * (np.exp(-t)[None, :] * np.expm1(-partial)) @ _GL_W
    eh = math.exp(-h)
    beta_end = float(beta(np.array([u[-1]]))[0])
    D = np.empty(n)
    D[-1] = -beta_end / (1.0 + beta_end)
    for k in range(n - 2, -1, -1):
        D[k] = d[k] + eh * math.expm1(-dI[k]) + eh * math.exp(-dI[k]) * D[k + 1]
    R = 1.0 + D
    I = np.concatenate([[0.0], np.cumsum(dI)])
    I -= I[k0]
    with np.errstate(over="ignore"):
        scale = np.exp(-I) / R[k0]
        phi = scale * R
        dphi = scale * D / np.exp(u)
    if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(dphi))):
        ok = np.isfinite(phi) & np.isfinite(dphi)
        raise ForwardError("tail integral overflowed; narrow the grid or check sigma",
                           {"x": np.exp(u)[ok], "phi": phi[ok]})
    if np.any(R <= 0):
        raise ForwardError("non-positive tail integral", {"x": np.exp(u), "R": R})
    phi[k0] = 1.0
    m = slice(0, n_out)
    return FundamentalSolution(np.exp(u)[m], phi[m], dphi[m], float(x0), float(r), k0)


def ode_residual(fs: FundamentalSolution, vol: VolCurve) -> np.ndarray:
    """|1/2 sigma^2 x^2 phi'' + r x phi' - r phi| / (r phi) at interior nodes."""
    from ._numerics import run_derivative

    d2 = run_derivative(fs.x, fs.dphi)
    res = 0.5 * vol(fs.x) ** 2 * fs.x ** 2 * d2 + fs.r * fs.x * fs.dphi - fs.r * fs.phi
    return np.abs(res[2:-2]) / (fs.r * fs.phi[2:-2])


def perpetual_put_price(fs: FundamentalSolution, K):
    """P(K) = sup_{z <= x0} (K - z)/phi(z); K - x0 above K-hat.

    The maximiser solves (K - z) phi'(z) + phi(z) = 0, located on the grid and
    refined by bisection on the Hermite cell.
    """
    Ks = np.atleast_1d(np.asarray(K, float))
    out = np.empty_like(Ks)
    khat = fs.khat
    x, phi, dphi = fs.x[: fs.k0 + 1], fs.phi[: fs.k0 + 1], fs.dphi[: fs.k0 + 1]
    for j, k in enumerate(Ks):
        if k < 0:
            raise DomainError("strike must be non-negative")
        if k == 0:
            out[j] = 0.0
            continue
        if k >= khat:
            out[j] = k - fs.x0
            continue
        hv = (k - x) * dphi + phi
        i = int(np.searchsorted(hv, 0.0))  # hv is increasing
        if i == 0:
            z = x[0]
            out[j] = (k - z) / phi[0]
            continue
        i = min(i, x.size - 1)
        a, b = x[i - 1], x[i]
        args = (x[i - 1], x[i], phi[i - 1], phi[i], dphi[i - 1], dphi[i])
        for _ in range(100):
            m = 0.5 * (a + b)
            v, dv = hermite_eval(*args, m)
            if (k - m) * dv + v < 0:
                a = m
            else:
                b = m
            if b - a <= 1e-15 * b:
                break
        z = 0.5 * (a + b)
        v, _ = hermite_eval(*args, z)
        out[j] = max((k - z) / v, k - fs.x0, 0.0)
    return float(out[0]) if np.ndim(K) == 0 else out


def exercise_level(fs: FundamentalSolution, K: float) -> float:
    """Optimal exercise level z(K) for the forward model (x0 at and above K-hat)."""
    if K >= fs.khat:
        return fs.x0
    x, phi, dphi = fs.x[: fs.k0 + 1], fs.phi[: fs.k0 + 1], fs.dphi[: fs.k0 + 1]
    hv = (K - x) * dphi + phi
    i = max(1, min(int(np.searchsorted(hv, 0.0)), x.size - 1))
    a, b = x[i - 1], x[i]
    args = (x[i - 1], x[i], phi[i - 1], phi[i], dphi[i - 1], dphi[i])
    for _ in range(100):
        m = 0.5 * (a + b)
        v, dv = hermite_eval(*args, m)
        if (K - m) * dv + v < 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def hitting_laplace(fs: FundamentalSolution, frm: float, to: float) -> float:
    """E^frm[exp(-r H_to)]: phi(frm)/phi(to) below, frm/to above."""
    if frm == to:
        return 1.0
    if to < frm:
        return fs.phi_at(frm)[0] / fs.phi_at(to)[0]
    fs.phi_at(to)  # domain check
    return frm / to


def gbm_put(sigma: float, r: float, x0: float, K):
    """Closed-form perpetual put under geometric Brownian motion."""
    if not (sigma > 0 and r > 0):
        raise ValueError("sigma and r must be positive")
    beta = 2.0 * r / sigma ** 2
    khat = x0 * (beta + 1) / beta
    K = np.asarray(K, float)
    with np.errstate(invalid="ignore"):
        low = K / (beta + 1) * (beta * K / (x0 * (beta + 1))) ** beta
    out = np.where(K < khat, low, K - x0)
    return float(out) if out.ndim == 0 else out


def gbm_khat(sigma: float, r: float, x0: float) -> float:
    beta = 2.0 * r / sigma ** 2
    return x0 * (beta + 1) / beta
