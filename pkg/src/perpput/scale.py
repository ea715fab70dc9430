"""Scale function, its inverse and the speed measure built from phi.

With s'(x) = phi(x) - x phi'(x) and s(x0) = 0, the inverse g = s^{-1} is convex
and f = phi o g is decreasing and convex. The speed measure is

    nu(dy) = g''(y) / (2 r g(y)) dy

in the distributional sense: slope jumps of g are atoms and straight pieces of
g carry no mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._numerics import hermite_integral
from .curves import ConvexCurve, detect_linear
from .errors import KStarInfiniteError, ModelError

LOWER_KINDS = ("absorbing", "reflecting", "natural")
UPPER_KINDS = ("growth", "natural")


@dataclass(frozen=True, eq=False)
class ScaleSystem:
    """The triple (s, g, f) with endpoint data.

    ``s_low``/``s_high`` are the scale coordinates of the represented ends
    (truncation points for natural ends). ``s_zero``/``s_inf`` are the true
    endpoint values s(x_under+) and s(infinity): finite for absorbing,
    reflecting and growth ends, -inf/+inf for natural ones unless known in
    closed form.
    """

    phi: ConvexCurve
    s: ConvexCurve
    g: ConvexCurve
    f: ConvexCurve
    x0: float
    x_low: float
    s_low: float
    s_high: float
    s_zero: float
    s_inf: float
    gbar: float
    lower: str
    upper: str
    extension: str
    meta: dict = field(default_factory=dict)


def extend_phi(phi: ConvexCurve, x0: float, extension: str = "power", *, cap: float = 1e4,
               per_decade: int = 512) -> tuple[ConvexCurve, float, float, float]:
    """Continue phi above x0.

    ``power``: phi(x) = (x/x0)^p with p = x0 phi'(x0-), sampled up to cap*x0.
    ``linear``: phi(x) = 1 + phi'(x0-)(x - x0) up to its root K*.
    Returns the extended curve, s(inf) - s(top), the true s(inf) and gbar.
    """
    lo, hi = phi.domain
    if abs(hi - x0) > 1e-12 * x0:
        phi = phi.restricted(lo, x0)
    a = float(phi.left_slopes[-1])
    if not a < 0:
        raise KStarInfiniteError("phi'(x0-) = 0; reflected model required (not constructed)")
    if extension == "linear":
        kstar = x0 - 1.0 / a
        knots = np.append(phi.knots, kstar)
        vals = np.append(phi.values, 0.0)
        dl = np.append(phi.left_slopes, a)
        dr = np.append(phi.right_slopes, a)
        dr[-2] = a
        lin = np.append(phi.linear, True)
        pcs = np.append(phi.pieces, phi.pieces.max() + 1)
        s_inf = (1 - a * x0) * (kstar - x0)
        out = ConvexCurve(knots, vals, dl, dr, lin, pcs, True, phi.inf_below, dict(phi.meta))
        return out, 0.0, s_inf, kstar
    if extension != "power":
        raise ValueError(f"unknown extension {extension!r}")
    p = a * x0
    m = max(2, int(math.ceil(per_decade * math.log10(cap))) + 1)
    xs = x0 * np.geomspace(1.0, cap, m)
    vals = (xs / x0) ** p
    ders = p * vals / xs
    knots = np.concatenate([phi.knots, xs[1:]])
    values = np.concatenate([phi.values, vals[1:]])
    dl = np.concatenate([phi.left_slopes, ders[1:]])
    dr = np.concatenate([phi.right_slopes[:-1], ders])
    lin = np.concatenate([phi.linear, np.zeros(m - 1, bool)])
    pcs = np.concatenate([phi.pieces, np.full(m - 1, phi.pieces.max() + 1)])
    out = ConvexCurve(knots, values, dl, dr, lin, pcs, True, phi.inf_below, dict(phi.meta))
    top = xs[-1]
    if p < -1:
        s_inf = (1 - p) * x0 / (-p - 1)
        s_top = (1 - p) * x0 / (p + 1) * ((top / x0) ** (p + 1) - 1)
        return out, s_inf - s_top, s_inf, math.inf
    return out, math.inf, math.inf, math.inf


def build_scale_system(phi: ConvexCurve, x0: float, *, extension: str = "power",
                       cap: float = 1e4, floor: float = 1e-4) -> ScaleSystem:
    """Scale triple from phi given on (x_under, x0].

    The lower end is absorbing when phi is finite at x = 0, reflecting when
    phi is finite at x_under > 0 (a vertical edge), and natural otherwise
    (truncated at the first knot at or above ``floor * x0``).
    """
    ext, _, s_inf, gbar = extend_phi(phi, x0, extension, cap=cap)
    x = ext.knots
    v = ext.values
    closed = ext.left_closed or not math.isfinite(ext.left_slopes[0])
    if closed:
        lower = "absorbing" if x[0] == 0.0 else "reflecting"
    else:
        lower = "natural"
        i = int(np.searchsorted(x, floor * x0))
        i = min(i, int(np.searchsorted(x, x0)) - 1)
        if i > 0:
            ext = ext.restricted(x[i], x[-1])
            x, v = ext.knots, ext.values
    upper = "growth" if extension == "linear" else "natural"

    dl, dr = ext.left_slopes, ext.right_slopes
    with np.errstate(invalid="ignore"):
        sl = v - x * dl
        sr = v - x * dr
    sl[0] = sr[0] if not math.isfinite(sl[0]) else sl[0]
    if closed and not math.isfinite(dl[0]):
        sl[0] = math.inf
    # increments: int s' = 2 int phi - [x phi]
    h0, h1 = x[:-1], x[1:]
    d0 = np.where(np.isfinite(dr[:-1]) & ~ext.linear, dr[:-1], (v[1:] - v[:-1]) / (h1 - h0))
    d1 = np.where(np.isfinite(dl[1:]) & ~ext.linear, dl[1:], (v[1:] - v[:-1]) / (h1 - h0))
    integ = hermite_integral(h0, h1, v[:-1], v[1:], d0, d1)
    ds = 2 * integ - (h1 * v[1:] - h0 * v[:-1])
    if np.any(ds <= 0):
        raise ModelError("scale function is not increasing; phi is not decreasing and convex")
    s_vals = np.concatenate([[0.0], np.cumsum(ds)])
    k0 = int(np.argmin(np.abs(x - x0)))
    s_vals -= s_vals[k0]
    s_vals[k0] = 0.0
    lin = ext.linear
    s = ConvexCurve(x, s_vals, sl, sr, lin, ext.pieces, False, None, {"kind": "scale"})
    with np.errstate(divide="ignore"):
        gl = 1.0 / sl
        gr = 1.0 / sr
    g = ConvexCurve(s_vals, x, gl, gr, lin, ext.pieces, True, None, {"kind": "g"})
    with np.errstate(invalid="ignore", divide="ignore"):
        fl = dl / sl
        fr = dr / sr
        fl = np.where(np.isfinite(fl), fl, -1.0 / x)  # phi' = -inf at a vertical edge
    f = ConvexCurve(s_vals, v, fl, fr, lin, ext.pieces, True, None, {"kind": "f"})

    s_low, s_high = float(s_vals[0]), float(s_vals[-1])
    s_zero = s_low if lower != "natural" else -math.inf
    if upper == "growth":
        s_inf = s_high
    meta = {"floor_discount": float(1.0 / v[0]) if lower == "natural" else 0.0}
    return ScaleSystem(ext, s, g, f, float(x0), float(x[0]), s_low, s_high, s_zero,
                       float(s_inf), float(gbar), lower, upper, extension, meta)


@dataclass(frozen=True, eq=False)
class SpeedMeasure:
    """Cells (mass per knot interval of g), atoms, zero-mass intervals and barriers."""

    cell_left: np.ndarray
    cell_right: np.ndarray
    cell_mass: np.ndarray
    atoms: tuple[tuple[float, float, float], ...]   # (scale point, mass, price)
    zero_intervals: tuple[tuple[float, float], ...]
    lower_barrier: float
    upper_barrier: float
    lower: str
    upper: str
    r: float
    meta: dict = field(default_factory=dict)

    def mass_between(self, a: float, b: float) -> float:
        """nu((a, b)) from cells fully inside plus atoms strictly inside."""
        inside = (self.cell_left >= a) & (self.cell_right <= b)
        atoms = sum(m for y, m, _ in self.atoms if a < y < b)
        return float(self.cell_mass[inside].sum() + atoms)

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        mid = 0.5 * (self.cell_left + self.cell_right)
        return mid, self.cell_mass / (self.cell_right - self.cell_left)

    def to_dict(self, sys: ScaleSystem | None = None) -> dict:
        def price(y):
            return float(sys.g(y)) if sys is not None and sys.s_low <= y <= sys.s_high else None
        return {
            "rate": self.r,
            "atoms": [{"scale": y, "mass": m, "price": x} for y, m, x in self.atoms],
            "cells": [{"left": float(a), "right": float(b), "density": float(m / (b - a))}
                      for a, b, m in zip(self.cell_left, self.cell_right, self.cell_mass)],
            "zero_intervals": [{"left": a, "right": b, "price_left": price(a), "price_right": price(b)}
                               for a, b in self.zero_intervals],
            "barriers": {"lower": _enc(self.lower_barrier), "upper": _enc(self.upper_barrier),
                         "lower_kind": self.lower, "upper_kind": self.upper},
            "meta": {k: v for k, v in self.meta.items()},
        }


def _enc(v: float):
    return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")


def _cell_masses(curve: ConvexCurve, r: float) -> np.ndarray:
    y = curve.knots
    mid = 0.5 * (y[:-1] + y[1:])
    jump = curve.left_slopes[1:] - curve.right_slopes[:-1]
    mass = jump / (2 * r * curve(mid))
    return np.where(curve.linear, 0.0, mass)


def build_speed_measure(sys: ScaleSystem, r: float, *, use_f: bool = False) -> SpeedMeasure:
    """nu = g''/(2 r g) as cell masses, atoms at slope jumps and zero intervals.

    ``use_f`` builds the same measure from f''/(2 r f) instead (a consistency
    check: both must agree).
    """
    if not r > 0:
        raise ValueError("r must be positive")
    g = sys.f if use_f else sys.g
    y = g.knots
    cells = _cell_masses(g, r)
    kinks = g.kinks()
    atoms = []
    for i in kinks:
        jump = g.right_slopes[i] - g.left_slopes[i]
        atoms.append((float(y[i]), float(jump / (2 * r * g.values[i])), float(sys.g.values[i])))
    if sys.lower == "reflecting":
        # one-sided sticky point: g is flat to the left of the barrier
        m0 = sys.g.right_slopes[0] / (2 * r * sys.g.values[0])
        atoms.insert(0, (float(y[0]), float(m0), float(sys.g.values[0])))
    zero = []
    kinkset = set(kinks.tolist())
    lin = g.linear
    i = 0
    while i < len(lin):
        if lin[i]:
            j = i
            while j + 1 < len(lin) and lin[j + 1] and (j + 1) not in kinkset:
                j += 1
            zero.append((float(y[i]), float(y[j + 1])))
            i = j + 1
        else:
            i += 1
    lower_b = sys.s_zero if math.isfinite(sys.s_zero) else -math.inf
    upper_b = sys.s_inf if math.isfinite(sys.s_inf) else math.inf
    return SpeedMeasure(y[:-1].copy(), y[1:].copy(), cells, tuple(atoms), tuple(zero), lower_b,
                        upper_b, sys.lower, sys.upper, float(r),
                        {"lower_truncation": sys.s_low, "upper_truncation": sys.s_high})
