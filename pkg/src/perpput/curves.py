"""Piecewise convex/concave curves and put-curve validation.

A :class:`ConvexCurve` stores knot abscissae, values and *one-sided* slopes at
every knot. Each interval between knots is either exactly linear (the chord)
or a sampled-smooth piece evaluated by cubic Hermite interpolation of the
stored values and slopes. Kinks are knots whose left and right slopes differ.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from ._numerics import fd_weights, hermite_eval, numeric_slope, stencil
from .errors import CurveParseError, CurveStructureError, DomainError, KStarInfiniteError

LINEAR_RTOL = 1e-9
STRUCT_RTOL = 1e-10
CONVEX_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ConvexCurve:
    """Piecewise representation of a convex (or concave) scalar function.

    ``inf_below`` marks a structural +inf region: the function is +inf for
    abscissae strictly below it. When it equals ``knots[0]`` the first knot is a
    closed domain end with a finite value (a vertical edge).
    """

    knots: np.ndarray
    values: np.ndarray
    left_slopes: np.ndarray
    right_slopes: np.ndarray
    linear: np.ndarray
    pieces: np.ndarray
    convex: bool = True
    inf_below: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        k = _frozen(self.knots)
        n = k.size
        if k.ndim != 1 or n < 2:
            raise CurveStructureError("a curve needs at least two knots")
        for name in ("values", "left_slopes", "right_slopes"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (n,):
                raise CurveStructureError(f"{name} has shape {arr.shape}, expected ({n},)")
            object.__setattr__(self, name, arr)
        lin = _frozen(self.linear, bool)
        pcs = _frozen(self.pieces, int)
        if lin.shape != (n - 1,) or pcs.shape != (n - 1,):
            raise CurveStructureError("linear/pieces flags must have one entry per interval")
        if not np.all(np.isfinite(k)):
            raise CurveStructureError("knots must be finite")
        if np.any(np.diff(k) <= 0):
            bad = int(np.argmax(np.diff(k) <= 0))
            raise CurveStructureError(f"knots not strictly increasing at index {bad + 1} ({k[bad + 1]!r})")
        if not np.all(np.isfinite(self.values)):
            raise CurveStructureError("values must be finite on the declared domain")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "pieces", pcs)

    # ------------------------------------------------------------------ constructors

    @classmethod
    def from_hermite(cls, knots, values, left_slopes, right_slopes, *, linear=None,
                     pieces=None, convex=True, inf_below=None, meta=None) -> "ConvexCurve":
        """Build from knot data; linear intervals are detected when not given."""
        knots = np.asarray(knots, float)
        values = np.asarray(values, float)
        dl = np.asarray(left_slopes, float)
        dr = np.asarray(right_slopes, float)
        if linear is None:
            linear = detect_linear(knots, values, dl, dr)
        if pieces is None:
            pieces = np.zeros(len(knots) - 1, int)
        return cls(knots, values, dl, dr, linear, pieces, convex, inf_below, dict(meta or {}))

    @classmethod
    def from_points(cls, knots, values, *, convex=True, inf_below=None, meta=None) -> "ConvexCurve":
        """Piecewise-linear curve through the given points."""
        knots = np.asarray(knots, float)
        values = np.asarray(values, float)
        if knots.shape != values.shape or knots.size < 2:
            raise CurveStructureError("need matching knot/value arrays with at least two points")
        if np.any(np.diff(knots) <= 0):
            raise CurveStructureError("knots not strictly increasing")
        chords = np.diff(values) / np.diff(knots)
        dl = np.concatenate([[chords[0]], chords])
        dr = np.concatenate([chords, [chords[-1]]])
        lin = np.ones(len(knots) - 1, bool)
        return cls(knots, values, dl, dr, lin, np.zeros(len(knots) - 1, int), convex,
                   inf_below, dict(meta or {})).simplified()

    @classmethod
    def from_function(cls, func: Callable, lo: float, hi: float, *, deriv: Callable | None = None,
                      breaks: Iterable[float] = (), per_decade: int = 512, convex: bool = True,
                      zero_floor: float = 1e-4, inf_below=None, meta=None) -> "ConvexCurve":
        """Sample ``func`` on a log-uniform grid, piece by piece.

        ``breaks`` are abscissae where the function may have a kink or a jump in
        curvature; no sample interval straddles them. A piece starting at 0 is
        sampled from ``zero_floor * b`` upward after the knot at 0.
        ``deriv`` (if given) supplies exact slopes; otherwise slopes come from
        fourth-order differences that stay inside each piece.
        """
        edges = sorted({float(lo), float(hi), *(float(b) for b in breaks if lo < b < hi)})
        xs, ys, dls, drs, pid, lin = [], [], [], [], [], []
        for p, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            grid = _piece_grid(a, b, per_decade, zero_floor)
            y = _call(func, grid)
            if deriv is not None:
                d = _call(deriv, grid)
                # one-sided slopes at interior breaks: nudge inside the piece
                if p > 0:
                    d[0] = _call(deriv, np.array([np.nextafter(a, np.inf)]))[0]
                if p < len(edges) - 2:
                    d[-1] = _call(deriv, np.array([np.nextafter(b, -np.inf)]))[0]
            else:
                d = np.array([numeric_slope(lambda t: float(_call(func, np.array([t]))[0]), t, a, b)
                              for t in grid])
            if xs:
                prev = ys[-1]
                if abs(prev - y[0]) > 1e-9 * max(1.0, abs(prev)):
                    raise CurveStructureError(f"function is discontinuous at break {a!r}")
                drs[-1] = d[0]
                xs.extend(grid[1:]); ys.extend(y[1:]); dls.extend(d[1:]); drs.extend(d[1:])
            else:
                xs.extend(grid); ys.extend(y); dls.extend(d); drs.extend(d)
            pid.extend([p] * (len(grid) - 1))
        knots = np.array(xs)
        values = np.array(ys)
        dl = np.array(dls)
        dr = np.array(drs)
        linear = detect_linear(knots, values, dl, dr)
        return cls(knots, values, dl, dr, linear, np.array(pid), convex, inf_below,
                   dict(meta or {})).simplified()

    # ------------------------------------------------------------------ basic queries

    @property
    def n(self) -> int:
        return self.knots.size

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def scale(self) -> float:
        return float(max(1.0, np.max(np.abs(self.knots)), np.max(np.abs(self.values))))

    def chords(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def kinks(self, rtol: float = 1e-9) -> np.ndarray:
        """Indices of knots where the one-sided slopes differ."""
        dl, dr = self.left_slopes, self.right_slopes
        with np.errstate(invalid="ignore"):
            gap = np.abs(dr - dl)
            ref = np.maximum(np.abs(dl), np.abs(dr))
            ok = np.isfinite(dl) & np.isfinite(dr)
            jump = np.where(ok, gap > rtol * np.maximum(ref, 1e-300) + 1e-300, dl != dr)
        jump[0] = jump[-1] = False
        return np.flatnonzero(jump)

    def smooth_runs(self) -> list[tuple[int, int]]:
        """Maximal node ranges [i, j] joined by smooth intervals of one piece and no kink."""
        kinks = set(self.kinks().tolist())
        runs, start = [], None
        for i in range(self.n - 1):
            ok = not self.linear[i]
            if ok and start is not None and (self.pieces[i] != self.pieces[i - 1] or i in kinks):
                runs.append((start, i))
                start = None
            if ok and start is None:
                start = i
            if not ok and start is not None:
                runs.append((start, i))
                start = None
        if start is not None:
            runs.append((start, self.n - 1))
        return runs

    def _locate(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(idx, 0, self.n - 2)

    def _check_domain(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.domain
        tol = 1e-12 * self.scale
        if np.any(x < lo - tol) or np.any(x > hi + tol) or np.any(np.isnan(x)):
            bad = x[(x < lo - tol) | (x > hi + tol) | np.isnan(x)][0]
            raise DomainError(f"x = {bad!r} outside curve domain [{lo!r}, {hi!r}]")
        return np.clip(x, lo, hi)

    def _interval_eval(self, x: np.ndarray, idx: np.ndarray):
        x0 = self.knots[idx]
        x1 = self.knots[idx + 1]
        y0 = self.values[idx]
        y1 = self.values[idx + 1]
        d0 = self.right_slopes[idx]
        d1 = self.left_slopes[idx + 1]
        chord = (y1 - y0) / (x1 - x0)
        use_chord = self.linear[idx] | ~np.isfinite(d0) | ~np.isfinite(d1)
        d0s = np.where(use_chord, chord, d0)
        d1s = np.where(use_chord, chord, d1)
        val, der = hermite_eval(x0, x1, y0, y1, d0s, d1s, x)
        val = np.where(use_chord, y0 + chord * (x - x0), val)
        der = np.where(use_chord, chord, der)
        return val, der

    def __call__(self, x):
        xa = self._check_domain(np.asarray(x, float))
        flat = np.atleast_1d(xa)
        idx = self._locate(flat)
        val, _ = self._interval_eval(flat, idx)
        at = np.searchsorted(self.knots, flat)
        hit = (at < self.n) & (self.knots[np.minimum(at, self.n - 1)] == flat)
        val = np.where(hit, self.values[np.minimum(at, self.n - 1)], val)
        return val.reshape(xa.shape) if xa.ndim else float(val[0])

    def slopes(self, x):
        """One-sided slopes (left, right) at ``x``; they differ only at kinks."""
        xa = self._check_domain(np.asarray(x, float))
        flat = np.atleast_1d(xa)
        idx = self._locate(flat)
        _, der = self._interval_eval(flat, idx)
        at = np.minimum(np.searchsorted(self.knots, flat), self.n - 1)
        hit = self.knots[at] == flat
        left = np.where(hit, self.left_slopes[at], der)
        right = np.where(hit, self.right_slopes[at], der)
        if xa.ndim:
            return left.reshape(xa.shape), right.reshape(xa.shape)
        return float(left[0]), float(right[0])

    def derivative(self, x):
        """Slope at ``x`` (right slope at kinks, left slope at the right end)."""
        left, right = self.slopes(x)
        return np.where(np.isfinite(right), right, left) if np.ndim(left) else (
            right if math.isfinite(right) else left)

    # ------------------------------------------------------------------ transforms

    def simplified(self) -> "ConvexCurve":
        """Drop interior knots lying inside one straight line."""
        keep = np.ones(self.n, bool)
        ch = self.chords()
        for i in range(1, self.n - 1):
            if self.linear[i - 1] and self.linear[i]:
                a, b = ch[i - 1], ch[i]
                if abs(a - b) <= LINEAR_RTOL * max(abs(a), abs(b)) + 1e-15 * self.scale:
                    keep[i] = False
        if keep.all():
            return self
        idx = np.flatnonzero(keep)
        lin = np.array([bool(np.all(self.linear[a:b])) for a, b in zip(idx[:-1], idx[1:])])
        pcs = self.pieces[idx[:-1]]
        return ConvexCurve(self.knots[idx], self.values[idx], self.left_slopes[idx],
                           self.right_slopes[idx], lin, pcs, self.convex, self.inf_below,
                           dict(self.meta))

    def restricted(self, lo: float, hi: float) -> "ConvexCurve":
        """Sub-curve on the knots within [lo, hi] (knot-aligned, no new knots)."""
        mask = (self.knots >= lo) & (self.knots <= hi)
        idx = np.flatnonzero(mask)
        if idx.size < 2:
            raise DomainError(f"fewer than two knots in [{lo!r}, {hi!r}]")
        a, b = idx[0], idx[-1]
        return ConvexCurve(self.knots[a:b + 1], self.values[a:b + 1], self.left_slopes[a:b + 1],
                           self.right_slopes[a:b + 1], self.linear[a:b], self.pieces[a:b],
                           self.convex, self.inf_below, dict(self.meta))

    # ------------------------------------------------------------------ serialization

    def to_dict(self) -> dict:
        def enc(a):
            return [v if math.isfinite(v) else ("inf" if v > 0 else "-inf") if not math.isnan(v)
                    else "nan" for v in map(float, a)]
        return {
            "kind": "ConvexCurve",
            "convexity": "convex" if self.convex else "concave",
            "domain": {"left": float(self.knots[0]), "right": float(self.knots[-1]),
                       "left_closed": self.left_closed, "inf_below": self.inf_below},
            "knots": enc(self.knots),
            "values": enc(self.values),
            "left_slopes": enc(self.left_slopes),
            "right_slopes": enc(self.right_slopes),
            "segments": ["linear" if l else "sampled-smooth" for l in self.linear],
            "pieces": [int(p) for p in self.pieces],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvexCurve":
        def dec(a):
            return np.array([float(v) for v in a])
        return cls(dec(d["knots"]), dec(d["values"]), dec(d["left_slopes"]), dec(d["right_slopes"]),
                   np.array([s == "linear" for s in d["segments"]]), np.array(d["pieces"], int),
                   d.get("convexity", "convex") == "convex", d["domain"].get("inf_below"),
                   dict(d.get("meta", {})))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "ConvexCurve":
        return cls.from_dict(json.loads(text))

    @property
    def left_closed(self) -> bool:
        xs = max(1.0, float(np.max(np.abs(self.knots[np.isfinite(self.knots)]))))
        return self.inf_below is not None and abs(self.inf_below - self.knots[0]) <= 1e-12 * xs


def detect_linear(knots, values, dl, dr, rtol: float = LINEAR_RTOL) -> np.ndarray:
    """An interval is linear when both end slopes equal its chord."""
    h = np.diff(knots)
    chord = np.diff(values) / h
    atol = 1e-14 * np.maximum(np.abs(values[:-1]), np.abs(values[1:])) / h
    with np.errstate(invalid="ignore"):
        tol = rtol * np.abs(chord) + atol
        ok = (np.abs(dr[:-1] - chord) <= tol) & (np.abs(dl[1:] - chord) <= tol)
    return ok


def _piece_grid(a: float, b: float, per_decade: int, zero_floor: float) -> np.ndarray:
    if a > 0:
        m = max(2, int(math.ceil(per_decade * math.log10(b / a))) + 1)
        g = np.geomspace(a, b, m)
    else:
        start = b * zero_floor
        m = max(2, int(math.ceil(per_decade * math.log10(b / start))) + 1)
        g = np.concatenate([[a], np.geomspace(start, b, m)])
    g[0], g[-1] = a, b
    return g


def _call(func, x: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(func(x), float)
        if out.shape == x.shape:
            return out.copy()
    except (TypeError, ValueError):
        pass
    return np.array([float(func(float(t))) for t in x])


def eval_with_derivatives(curve: ConvexCurve, x: float) -> tuple[float, float, float]:
    """Value and one-sided slopes at an interior point of the domain."""
    lo, hi = curve.domain
    if not lo < x < hi:
        raise DomainError(f"x = {x!r} not in the interior of ({lo!r}, {hi!r})")
    left, right = curve.slopes(x)
    return curve(x), left, right


def node_second_derivative(curve: ConvexCurve, *, stride_check: bool = True,
                           rtol: float = 1e-4) -> tuple[np.ndarray, np.ndarray]:
    """Second derivative at knots of smooth runs, from differences of the slopes.

    A five-point stencil on the knot slopes gives the estimate; a second
    five-point stencil on every other knot verifies it (Richardson-style).
    Returns ``(d2, smooth)``; ``smooth`` is False where the two estimates
    disagree by more than ``rtol`` relative, or the knot is on no smooth run.
    """
    d2 = np.full(curve.n, np.nan)
    smooth = np.zeros(curve.n, bool)
    for a, b in curve.smooth_runs():
        x = curve.knots[a:b + 1]
        # slopes inside the run: right slope at its first knot, left slope at its last
        s = curve.left_slopes[a:b + 1].copy()
        s[0] = curve.right_slopes[a]
        m = len(x)
        for j in range(m):
            idx = stencil(j, m, min(5, m))
            if idx is None or m < 3:
                continue
            with np.errstate(invalid="ignore"):
                est = fd_weights(x[j], x[idx], 1) @ s[idx]
            if not np.isfinite(est):
                continue
            d2[a + j] = est
            if not stride_check:
                smooth[a + j] = True
                continue
            idx2 = stencil(j, m, 5, 2)
            if idx2 is None:
                idx2 = stencil(j, m, 3, 1)
                if idx2 is None:
                    continue
            with np.errstate(invalid="ignore"):
                est2 = fd_weights(x[j], x[idx2], 1) @ s[idx2]
            smooth[a + j] = bool(abs(est - est2) <= rtol * max(abs(est), 1e-300))
    return d2, smooth


# ---------------------------------------------------------------------- put curves


@dataclass(frozen=True)
class Violation:
    rule: str
    location: float
    magnitude: float


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[Violation, ...]
    kstar: float
    k_under: float
    degenerate: bool

    def lines(self) -> list[str]:
        out = [f"passed: {self.passed}",
               f"K*: {'infinite' if math.isinf(self.kstar) else repr(self.kstar)}",
               f"K_under: {self.k_under!r}",
               f"degenerate (P(x0)=0): {self.degenerate}"]
        for v in self.violations:
            out.append(f"violation {v.rule} at K={v.location!r} magnitude={v.magnitude:.3e}")
        return out


def validate_put_curve(curve: ConvexCurve, x0: float, r: float) -> ValidationReport:
    """Check no-arbitrage bounds, monotone convexity and a finite K*.

    Raises :class:`CurveStructureError` only for malformed curves; everything
    else is reported as a violation.
    """
    lo, hi = curve.domain
    if lo > 0 or hi <= x0:
        raise CurveStructureError(f"put curve must cover [0, K_max] with K_max > x0; got [{lo!r}, {hi!r}]")
    eps = STRUCT_RTOL * x0
    viol: list[Violation] = []
    if not r > 0:
        viol.append(Violation("rate", math.nan, float(r)))

    mids = 0.5 * (curve.knots[:-1] + curve.knots[1:])
    pts = np.concatenate([curve.knots, mids])
    vals = np.concatenate([curve.values, curve(mids)])
    lower = np.maximum(pts - x0, 0.0) - vals
    upper = vals - pts
    tol_b = eps + 1e-12 * np.abs(pts)
    for rule, excess in (("lower_bound", lower), ("upper_bound", upper)):
        bad = np.flatnonzero(excess > tol_b)
        if bad.size:
            j = bad[np.argmax(excess[bad])]
            viol.append(Violation(rule, float(pts[j]), float(excess[j])))

    ch = curve.chords()
    slope_scale = max(1.0, float(np.max(np.abs(ch))))
    neg = np.flatnonzero(ch < -CONVEX_TOL * slope_scale)
    if neg.size:
        viol.append(Violation("monotone", float(curve.knots[neg[0]]), float(-ch[neg[0]])))
    drop = ch[:-1] - ch[1:]
    bad = np.flatnonzero(drop > CONVEX_TOL * slope_scale)
    if bad.size:
        j = bad[np.argmax(drop[bad])]
        viol.append(Violation("convexity", float(curve.knots[j + 1]), float(drop[j])))
    with np.errstate(invalid="ignore"):
        kinkrev = curve.left_slopes[1:-1] - curve.right_slopes[1:-1]
    bad = np.flatnonzero(kinkrev > 1e-9 * slope_scale)
    if bad.size and not any(v.rule == "convexity" for v in viol):
        j = bad[0] + 1
        viol.append(Violation("convexity", float(curve.knots[j]), float(kinkrev[j - 1])))

    if ch[-1] > 1 + STRUCT_RTOL * slope_scale:
        viol.append(Violation("terminal_slope", float(curve.knots[-2]), float(ch[-1] - 1)))
    try:
        kstar = find_kstar(curve, x0)
    except KStarInfiniteError:
        kstar = math.inf
        viol.append(Violation("kstar_infinite", hi, float(curve.values[-1] - (hi - x0))))
    k_under = find_k_under(curve)
    degenerate = bool(curve(x0) <= eps)
    return ValidationReport(not viol, tuple(viol), kstar, k_under, degenerate)


def find_kstar(curve: ConvexCurve, x0: float) -> float:
    """Smallest strike with P(K) - (K - x0) <= 1e-10 x0 (immediate exercise)."""
    eps = STRUCT_RTOL * x0
    excess = curve.values - (curve.knots - x0)
    ok = excess <= eps
    if not ok[-1]:
        raise KStarInfiniteError(f"P(K_max) - (K_max - x0) = {excess[-1]:.3e} at K_max = {curve.knots[-1]:g}")
    # first knot of the terminal run where the excess stays below eps
    j = curve.n - 1
    while j > 0 and ok[j - 1]:
        j -= 1
    return float(curve.knots[j])


def find_k_under(curve: ConvexCurve) -> float:
    """sup{K : P(K) = 0}; 0 when P is positive for every K > 0."""
    tiny = 1e-300
    zero = curve.values <= tiny
    if not zero[0]:
        return float(curve.knots[0]) if curve.values[0] <= tiny else 0.0
    j = 0
    while j + 1 < curve.n and zero[j + 1]:
        j += 1
    return float(curve.knots[j])


@dataclass(frozen=True)
class PutCurveInput:
    """Observed (strike, price) quotes with spot, rate and interpolation policy."""

    strikes: tuple[float, ...]
    prices: tuple[float, ...]
    x0: float
    r: float
    interpolation: str = "linear"

    def __post_init__(self):
        k = np.asarray(self.strikes, float)
        p = np.asarray(self.prices, float)
        if k.size == 0:
            raise CurveParseError("no quotes")
        if k.shape != p.shape:
            raise CurveStructureError("strikes and prices differ in length")
        if np.any(np.diff(k) <= 0):
            raise CurveStructureError("strikes must be strictly increasing")
        if np.any(p < 0) or np.any(k < 0):
            raise CurveStructureError("strikes and prices must be non-negative")
        if self.interpolation not in ("linear", "spline"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")

    @classmethod
    def from_csv(cls, path: str | Path, x0: float, r: float, interpolation: str = "linear") -> "PutCurveInput":
        strikes, prices = read_quotes(path)
        return cls(tuple(strikes), tuple(prices), x0, r, interpolation)

    def quote_kstar(self) -> float | None:
        k = np.asarray(self.strikes)
        p = np.asarray(self.prices)
        hit = np.flatnonzero(p - (k - self.x0) <= STRUCT_RTOL * self.x0 + 1e-12 * k)
        hit = hit[k[hit] > self.x0]
        return float(k[hit[0]]) if hit.size else None

    def to_curve(self, per_decade: int = 512) -> ConvexCurve:
        if self.interpolation == "spline":
            return self._spline_curve(per_decade)
        return self._linear_curve()

    def _linear_curve(self) -> ConvexCurve:
        k = list(self.strikes)
        p = list(self.prices)
        if k[0] > 0:
            k.insert(0, 0.0)
            p.insert(0, 0.0)
        x0 = self.x0
        excess = p[-1] - (k[-1] - x0)
        if excess > STRUCT_RTOL * x0:
            slope = (p[-1] - p[-2]) / (k[-1] - k[-2])
            if slope < 1:
                kstar = k[-1] + excess / (1 - slope)
                k.append(kstar)
                p.append(kstar - x0)
            # slope >= 1 leaves the curve short of K - x0; validation reports it
        last = k[-1]
        k.append(last + max(x0, last))
        p.append(p[-1] + (k[-1] - last) * (1.0 if p[-1] - (last - x0) <= STRUCT_RTOL * x0 else
                                           (p[-1] - p[-2]) / (last - k[-3])))
        return ConvexCurve.from_points(k, p, meta={"source": "quotes", "interpolation": "linear"})

    def _spline_curve(self, per_decade: int) -> ConvexCurve:
        from scipy.interpolate import CubicSpline

        first = self.quote_kstar()
        if first is None:
            raise CurveStructureError("spline interpolation needs a quote at or beyond K*")
        k = np.asarray(self.strikes)
        p = np.asarray(self.prices)
        x0 = self.x0
        below = np.flatnonzero(k < first)
        kstar = first
        if below.size >= 2:
            # smooth fit: the excess P - (K - x0) vanishes quadratically at K*,
            # so its square root is linear through the last two quotes
            i, j = below[-2], below[-1]
            ei, ej = p[i] - (k[i] - x0), p[j] - (k[j] - x0)
            if ei > ej > 0:
                est = k[j] + math.sqrt(ej) * (k[j] - k[i]) / (math.sqrt(ei) - math.sqrt(ej))
                if k[j] < est < first:
                    kstar = float(est)
        sel = k < kstar
        ks = np.concatenate([k[sel], [kstar]])
        ps = np.concatenate([p[sel], [kstar - x0]])
        if ks[0] > 0:
            ks = np.concatenate([[0.0], ks])
            ps = np.concatenate([[0.0], ps])
        if ks.size < 4:
            raise CurveStructureError("spline interpolation needs at least three quotes below K*")
        spl = CubicSpline(ks, ps, bc_type=("not-a-knot", (1, 1.0)))
        dspl = spl.derivative()
        test = np.linspace(0, kstar, 4001)[1:-1]
        if np.any(spl(test, 2) <= 0) or np.any(dspl(test) < 0):
            raise CurveStructureError("cubic spline through the quotes is not increasing and "
                                      "strictly convex; use linear interpolation")
        kmax = max(2 * kstar, float(k[-1]))
        func = lambda t: np.where(t <= kstar, spl(np.minimum(t, kstar)), t - x0)
        der = lambda t: np.where(t < kstar, dspl(np.minimum(t, kstar)), 1.0)
        # spline knots are breaks so that no sampled interval straddles a jump in P'''
        return ConvexCurve.from_function(func, 0.0, kmax, deriv=der, breaks=list(ks[1:]),
                                         per_decade=per_decade,
                                         meta={"source": "quotes", "interpolation": "spline",
                                               "kstar_estimate": kstar})


def read_quotes(path: str | Path, header: Sequence[str] = ("strike", "price")) -> tuple[list[float], list[float]]:
    """Read a two-column CSV with the given header; '#' lines are comments."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CurveParseError(f"cannot read {path}: {exc}") from exc
    rows = [(i + 1, line) for i, line in enumerate(text.splitlines())
            if line.strip() and not line.lstrip().startswith("#")]
    if not rows:
        raise CurveParseError(f"{path} is empty", line=1)
    lineno, head = rows[0]
    cols = [c.strip().lower() for c in next(csv.reader([head]))]
    if cols != list(header):
        raise CurveParseError(f"expected header {','.join(header)!r}, got {head!r}", line=lineno)
    a, b = [], []
    for lineno, line in rows[1:]:
        cells = next(csv.reader([line]))
        if len(cells) != 2:
            raise CurveParseError(f"expected 2 fields, got {len(cells)}", line=lineno)
        try:
            u, v = float(cells[0]), float(cells[1])
        except ValueError:
            raise CurveParseError(f"not a number: {line!r}", line=lineno) from None
        if not (math.isfinite(u) and math.isfinite(v)):
            raise CurveParseError(f"non-finite value: {line!r}", line=lineno)
        a.append(u)
        b.append(v)
    if not a:
        raise CurveParseError(f"{path} has a header but no quotes", line=lineno)
    return a, b
