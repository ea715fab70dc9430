"""Dividend recovery under a given volatility, and perpetual calls.

With a dividend yield q the pricing operator is
    L u = 1/2 sigma^2 x^2 u'' + (r - q) x u' - r u,
so a decreasing solution phi of L phi = 0 determines

    q(x) = r + (x^2 sigma^2 phi'' - 2 r phi) / (2 x phi').

Calls are handled by the mirror image of the put duality:

    psi(x) = sup_{K <= x} (x - K) / C(K),     C(K) = sup_{x >= x0} (x - K) / psi(x).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curves import ConvexCurve, node_second_derivative
from .duality import _tangent_walk, _with_pieces
from .errors import CurveStructureError, DomainError, ModelError

_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DividendCurve:
    """Tabulated yield q(x); negative values are a convenience yield."""

    x: np.ndarray
    q: np.ndarray
    skipped: tuple[float, ...] = ()
    tol: float = 1e-8
    meta: dict = field(default_factory=dict)

    @property
    def convenience(self) -> np.ndarray:
        """Points with q below -tol (negative beyond round-off)."""
        return self.q < -self.tol

    def to_csv_rows(self) -> list[tuple[float, float]]:
        return [(float(a), float(b)) for a, b in zip(self.x, self.q)]


def _sigma_values(sigma, x: np.ndarray) -> np.ndarray:
    if callable(sigma):
        return np.asarray(sigma(x), float) * np.ones_like(x)
    return np.full_like(x, float(sigma))


def recover_dividend(phi: ConvexCurve, sigma: float | Callable, r: float, *,
                     x0: float | None = None, rtol: float = 1e-4) -> DividendCurve:
    """q(x) at the smooth knots of phi on (x_under, x0].

    Knots where phi' = 0 or phi'' is unavailable (kinks, straight pieces,
    failed finite-difference check) are skipped and reported.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    d2, smooth = node_second_derivative(phi, rtol=rtol)
    top = phi.knots[-1] if x0 is None else x0
    inside = (phi.knots > 0) & (phi.knots <= top * (1 + 1e-12))
    d1 = phi.left_slopes.copy()
    d1[0] = phi.right_slopes[0]
    ok = inside & smooth & np.isfinite(d1) & (d1 != 0) & np.isfinite(d2)
    skipped = tuple(float(v) for v in phi.knots[inside & ~ok])
    x = phi.knots[ok]
    v, d, dd = phi.values[ok], d1[ok], d2[ok]
    s2 = _sigma_values(sigma, x) ** 2
    q = r + (x ** 2 * s2 * dd - 2 * r * v) / (2 * x * d)
    return DividendCurve(x, q, skipped, meta={"r": r})


def _lower_exercise_strike(C: ConvexCurve, x0: float) -> int:
    """Index of the last knot of the leading run with C(K) = x0 - K."""
    ex = C.values - (x0 - C.knots)
    i = 0
    while i + 1 < C.n and ex[i + 1] <= _TOL * x0:
        i += 1
    return i


def validate_call_curve(C: ConvexCurve, x0: float) -> None:
    """Raise unless C is non-increasing, convex and within (x0 - K)^+ <= C <= x0."""
    if C.knots[0] != 0.0:
        raise DomainError("call curve must start at K = 0")
    if abs(C.values[0] - x0) > _TOL * x0:
        raise CurveStructureError(f"C(0) = {C.values[0]!r}, expected x0 = {x0!r}")
    tol = 1e-12 * C.scale
    if np.any(np.diff(C.values) > tol):
        raise CurveStructureError("call curve must be non-increasing")
    ch = C.chords()
    if np.any(np.diff(ch) < -tol):
        raise CurveStructureError("call curve must be convex")
    low = np.maximum(x0 - C.knots, 0.0)
    if np.any(C.values < low - tol) or np.any(C.values > x0 + tol):
        raise CurveStructureError("call curve violates (x0 - K)^+ <= C(K) <= x0")
    if np.all(np.abs(C.values - x0) <= tol):
        raise ModelError("C(K) = x0 for all K: trivial call prices carry no information")


def call_to_psi(C: ConvexCurve, x0: float) -> ConvexCurve:
    """psi(x) = sup_{K <= x} (x - K)/C(K) on [x0, ...), with psi(x0) = 1.

    The tangent to C at K with slope m maps to (K - C/m, -1/m); psi has
    slope 1/C(K) there.
    """
    validate_call_curve(C, x0)
    i = _lower_exercise_strike(C, x0)
    src = C.restricted(C.knots[i], C.knots[-1]) if i > 0 else C
    dl = src.left_slopes.copy()
    dl[0] = -1.0
    src = ConvexCurve(src.knots, src.values, dl, src.right_slopes, src.linear, src.pieces)
    if src.right_slopes[-1] >= 0 or src.values[-1] <= 0:
        # C flat at the top: drop the trailing flat piece (its image is at infinity)
        keep = np.flatnonzero((src.left_slopes < 0) & (src.values > 0))
        src = src.restricted(src.knots[0], src.knots[keep[-1]])
    x, y, sl, sr, lin, pcs = _tangent_walk(src, -1.0, 1.0, first_left=True, last_right=False)
    if abs(x[0] - x0) > 1e-8 * x0 or abs(y[0] - 1.0) > 1e-8:
        raise CurveStructureError(f"psi starts at ({x[0]!r}, {y[0]!r}), expected ({x0!r}, 1)")
    x[0], y[0] = x0, 1.0
    return ConvexCurve(x, y, sl, sr, lin, _with_pieces(lin, pcs), True, None,
                       {"kind": "psi", "x0": x0}).simplified()


def psi_to_call(psi: ConvexCurve, x0: float) -> ConvexCurve:
    """C(K) = sup_{x >= x0} (x - K)/psi(x) on [0, K_max]; C = x0 - K below K_*."""
    lo, hi = psi.domain
    if abs(lo - x0) > 1e-12 * x0:
        if lo > x0:
            raise DomainError(f"psi must start at x0={x0!r}")
        psi = psi.restricted(x0, hi)
    if abs(psi.values[0] - 1.0) > 1e-9:
        raise CurveStructureError(f"psi(x0) = {psi.values[0]!r}, expected 1")
    if not psi.right_slopes[0] > 1.0 / x0:
        raise ModelError("psi'(x0+) <= 1/x0: calls are never exercised (q <= 0)")
    x, y, sl, sr, lin, pcs = _tangent_walk(psi, 1.0, -1.0, first_left=False, last_right=False)
    k_low = float(x[0])
    # leading exercise line x0 - K
    x = np.insert(x, 0, 0.0)
    y = np.insert(y, 0, x0)
    sl = np.insert(sl, 0, -1.0)
    sr = np.insert(sr, 0, -1.0)
    sl[1] = -1.0
    lin = np.insert(lin, 0, True)
    pcs = np.insert(pcs, 0, -1)
    if k_low <= 0:
        raise CurveStructureError("lower exercise strike is not positive")
    return ConvexCurve(x, y, sl, sr, lin, _with_pieces(lin, pcs), True, None,
                       {"kind": "call", "x0": x0, "k_low": k_low}).simplified()


def perpetual_call_price(psi: ConvexCurve, x0: float, K):
    """sup_{x >= x0} (x - K)/psi(x) by the mirrored tangent construction."""
    C = psi_to_call(psi, x0)
    k = np.asarray(K, float)
    if np.any(k < 0):
        raise DomainError("K must be non-negative")
    if np.any(k > C.knots[-1]):
        raise DomainError(f"K beyond the range covered by psi (K_max = {C.knots[-1]:g})")
    out = np.asarray(C(k), float)
    return float(out) if out.ndim == 0 else out


def gbm_exponents(sigma: float, r: float, q: float) -> tuple[float, float]:
    """(beta_minus, beta_plus) for GBM with yield q."""
    a = (r - q) / sigma ** 2 - 0.5
    d = math.sqrt(2 * r / sigma ** 2 + a * a)
    return -a - d, -a + d


def gbm_call(sigma: float, r: float, q: float, x0: float, K):
    """Perpetual call under GBM with yield q > 0 (gamma = beta_plus > 1)."""
    if not q > 0:
        raise ModelError("q <= 0: perpetual calls are never exercised (C(K) = x0)")
    g = gbm_exponents(sigma, r, q)[1]
    k = np.asarray(K, float)
    kb = (g - 1) * x0 / g
    with np.errstate(divide="ignore", invalid="ignore"):
        cont = x0 ** g * g ** (-g) * (g - 1) ** (g - 1) * k ** (1 - g)
    out = np.where(k <= kb, x0 - k, cont)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class JointCheck:
    sigma: float
    q: float
    max_residual: float
    n_points: int

    def consistent(self, tol: float = 1e-6) -> bool:
        return self.max_residual <= tol


def _ode_rows(curve: ConvexCurve, rtol: float):
    d2, smooth = node_second_derivative(curve, rtol=rtol)
    d1 = np.where(np.isfinite(curve.left_slopes), curve.left_slopes, curve.right_slopes)
    ok = smooth & np.isfinite(d2) & np.isfinite(d1) & (curve.knots > 0)
    x, u, du, ddu = curve.knots[ok], curve.values[ok], d1[ok], d2[ok]
    return x, u, du, ddu


def joint_put_call_check(phi: ConvexCurve, psi: ConvexCurve, r: float, *,
                         rtol: float = 1e-4) -> JointCheck:
    """Fit one constant (sigma, q) so that phi and psi both solve L u = 0.

    The equation is linear in (sigma^2, q):
        sigma^2 (x^2 u''/2) - q (x u') = r u - r x u'.
    Returns the fit and the largest residual relative to r u.
    """
    rows, rhs, scale = [], [], []
    for c in (phi, psi):
        x, u, du, ddu = _ode_rows(c, rtol)
        rows.append(np.column_stack([0.5 * x ** 2 * ddu, -x * du]))
        rhs.append(r * u - r * x * du)
        scale.append(r * u)
    A, b, s = np.vstack(rows), np.concatenate(rhs), np.concatenate(scale)
    if A.shape[0] < 2:
        raise ModelError("too few smooth points for a joint fit")
    sol, *_ = np.linalg.lstsq(A / s[:, None], b / s, rcond=None)
    res = (A @ sol - b) / s
    s2, q = float(sol[0]), float(sol[1])
    return JointCheck(math.sqrt(max(s2, 0.0)), q, float(np.max(np.abs(res))), int(A.shape[0]))
