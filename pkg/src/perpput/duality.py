"""Ratio-form duality between put curves P and decreasing functions phi.

    phi(z) = sup_{K >= z} (K - z) / P(K),      P(K) = sup_{z <= x0} (K - z) / phi(z).

Both directions are computed by the same tangent construction. The line
tangent to a convex curve at a point (x, y) with slope m has root x - y/m; the
dual curve passes through (x - y/m, +-1/m) with slope -+1/y there. A vertex of
the source (a slope jump) therefore becomes a straight piece of the dual and a
straight piece of the source collapses to a single dual vertex. On
piecewise-linear input the construction is exact.
"""

from __future__ import annotations

import math

import numpy as np

from ._numerics import hermite_eval
from .curves import ConvexCurve, find_kstar, validate_put_curve
from .errors import CurveStructureError, DegenerateCurveError, DomainError, KStarInfiniteError

_MERGE_RTOL = 1e-11


def _tangent_walk(curve: ConvexCurve, sig1: float, sig2: float, *, first_left: bool,
                  last_right: bool):
    """Map every (knot, one-sided slope) pair of ``curve`` to its dual point.

    Returns node arrays (x, y, left slope, right slope, linear flags, pieces).
    Images with an infinite coordinate (zero slope, or zero value with zero
    slope) are dropped; they may only occur before the first finite image.
    """
    xs, ys = curve.knots, curve.values
    dl, dr = curve.left_slopes, curve.right_slopes
    lin, pcs = curve.linear, curve.pieces
    n = curve.n

    # (x, y, slope, kind, piece); kind links the point to the previous one
    pts: list[list] = []
    broken = False

    def push(x0, y0, m, kind, piece):
        nonlocal broken
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x0 - y0 / m if y0 != 0 else x0
            yi = sig1 / m
            si = sig2 / y0 if y0 != 0 else math.copysign(math.inf, sig2)
        if not (math.isfinite(xi) and math.isfinite(yi)):
            if pts:
                raise CurveStructureError(f"dual point at x={x0!r} is infinite after finite points")
            broken = True
            return
        if not pts or broken:
            kind = "start"
            broken = False
        pts.append([xi, yi, si, kind, piece])

    for i in range(n):
        first, last = i == 0, i == n - 1
        pushed_a = False
        if not first or first_left:
            kind = "start" if first else ("merge" if lin[i - 1] else "smooth")
            piece = -1 if first else int(pcs[i - 1])
            push(xs[i], ys[i], dl[i], kind, piece)
            pushed_a = True
        if not last or last_right:
            if pushed_a and dl[i] == dr[i]:
                continue
            push(xs[i], ys[i], dr[i], "linear", -1)

    if not pts:
        raise CurveStructureError("dual curve is empty")

    # assemble nodes, merging coincident points
    scale = max(1.0, max(abs(p[0]) for p in pts))
    nx, ny, nl, nr, nlin, npc = [], [], [], [], [], []
    for x, y, s, kind, piece in pts:
        if nx and (kind == "merge" or abs(x - nx[-1]) <= _MERGE_RTOL * scale):
            if abs(x - nx[-1]) <= 1e-9 * scale and abs(y - ny[-1]) <= 1e-9 * max(1.0, abs(y)):
                nr[-1] = s
                continue
            if abs(x - nx[-1]) <= _MERGE_RTOL * scale:
                # vertical jump: only a leading edge is admissible
                if len(nx) > 1:
                    raise CurveStructureError(f"dual curve has a vertical piece at x={x!r}")
                nx[-1], ny[-1], nl[-1], nr[-1] = x, y, -sig1 * math.inf, s
                continue
            raise CurveStructureError(f"collapsed source segment maps to distinct points near x={x!r}")
        if nx:
            if x < nx[-1]:
                raise CurveStructureError(f"dual abscissae decrease near x={x!r}; source is not convex")
            nlin.append(kind == "linear")
            npc.append(piece)
        nx.append(x)
        ny.append(y)
        nl.append(s)
        nr.append(s)
    return (np.array(nx), np.array(ny), np.array(nl), np.array(nr),
            np.array(nlin, bool), np.array(npc, int))


def _with_pieces(lin: np.ndarray, pcs: np.ndarray) -> np.ndarray:
    """Renumber pieces so every straight piece and smooth run has its own id."""
    out = np.zeros(len(lin), int)
    cur, prev = 0, None
    for k, (l, p) in enumerate(zip(lin, pcs)):
        key = ("L", k) if l else ("S", int(p))
        if key != prev:
            cur += 1
            prev = key
        out[k] = cur
    return out


def put_to_phi(P: ConvexCurve, x0: float, *, check: bool = True) -> ConvexCurve:
    """phi(z) = sup_{K >= z} (K - z)/P(K) on (x_under, x0], with phi(x0) = 1.

    phi is +inf below ``x_under = K_under`` (recorded as ``inf_below``); when
    P leaves zero with a positive slope the left end is closed with a vertical
    edge (left slope -inf).
    """
    if check:
        rep = validate_put_curve(P, x0, 1.0)
        if rep.degenerate:
            raise DegenerateCurveError(x0)
        if not rep.passed:
            bad = ", ".join(f"{v.rule}@{v.location:g}" for v in rep.violations if v.rule != "rate")
            if bad:
                raise CurveStructureError(f"put curve fails validation: {bad}")
    elif P(x0) <= 1e-10 * x0:
        raise DegenerateCurveError(x0)
    kstar = find_kstar(P, x0)
    # leading zero run: start the walk at its last knot
    zero = np.flatnonzero(P.values <= 0.0)
    i0 = 0
    if zero.size and zero[0] == 0:
        i0 = 0
        while i0 + 1 < P.n and P.values[i0 + 1] <= 0.0:
            i0 += 1
    k_under = float(P.knots[i0]) if P.values[i0] <= 0.0 else None
    src = P if i0 == 0 else P.restricted(P.knots[i0], P.knots[-1])
    if k_under is not None:
        # slopes at the zero corner: left slope 0 (zero region), right slope as stored
        dl = src.left_slopes.copy()
        dl[0] = 0.0
        src = ConvexCurve(src.knots, src.values, dl, src.right_slopes, src.linear, src.pieces)
    # cut the walk at K*: everything beyond maps to x0
    j = int(np.searchsorted(src.knots, kstar))
    if j < src.n - 1:
        src = src.restricted(src.knots[0], src.knots[j])
    x, y, sl, sr, lin, pcs = _tangent_walk(src, 1.0, -1.0, first_left=False, last_right=True)
    # snap the top to (x0, 1)
    if abs(x[-1] - x0) > 1e-8 * x0 or abs(y[-1] - 1.0) > 1e-8:
        raise CurveStructureError(f"dual curve ends at ({x[-1]!r}, {y[-1]!r}), expected ({x0!r}, 1)")
    x[-1], y[-1] = x0, 1.0
    sr[-1] = sl[-1]
    if x.size < 2:
        raise CurveStructureError("dual curve has a single point")
    inf_below = k_under
    return ConvexCurve(x, y, sl, sr, lin, _with_pieces(lin, pcs), True, inf_below,
                       {"kind": "phi", "x0": x0, "kstar": kstar}).simplified()


def phi_to_put(phi: ConvexCurve, x0: float, *, kmax: float | None = None) -> ConvexCurve:
    """P(K) = sup_{z <= x0} (K - z)/phi(z) on [0, K_max].

    Above K* = x0 - 1/phi'(x0-) the curve is K - x0. ``kmax`` defaults to
    max(2 K*, K* + x0).
    """
    lo, hi = phi.domain
    if hi < x0 - 1e-12 * x0:
        raise DomainError(f"phi must be defined up to x0={x0!r}; domain ends at {hi!r}")
    if hi > x0:
        phi = phi.restricted(lo, x0)
    if abs(phi.values[-1] - 1.0) > 1e-9:
        raise CurveStructureError(f"phi(x0) = {phi.values[-1]!r}, expected 1")
    if phi.left_slopes[-1] >= 0:
        raise KStarInfiniteError("phi'(x0-) = 0; reflected model required (not constructed)")
    first_left = phi.left_closed or not math.isfinite(phi.left_slopes[0])
    x, y, sl, sr, lin, pcs = _tangent_walk(phi, -1.0, 1.0, first_left=first_left, last_right=False)
    kstar = float(x[-1])
    kmax = kmax if kmax is not None else max(2 * kstar, kstar + x0)
    if kmax <= kstar:
        raise DomainError(f"kmax={kmax!r} must exceed K*={kstar!r}")
    # terminal straight piece K - x0
    x = np.append(x, kmax)
    y = np.append(y, kmax - x0)
    y[-2] = kstar - x0
    sl = np.append(sl, 1.0)
    sr[-1] = 1.0
    sr = np.append(sr, 1.0)
    lin = np.append(lin, True)
    pcs = np.append(pcs, -1)
    if x[0] > 0:
        if y[0] <= 0.0:
            # vertical edge of phi: P vanishes below x_under
            x = np.insert(x, 0, 0.0)
            y = np.insert(y, 0, 0.0)
            sl = np.insert(sl, 0, 0.0)
            sr = np.insert(sr, 0, 0.0)
            sl[1] = 0.0
            lin = np.insert(lin, 0, True)
            pcs = np.insert(pcs, 0, -1)
        else:
            chord = y[0] / x[0]
            if chord <= sr[0] * (1 + 1e-12):
                x = np.insert(x, 0, 0.0)
                y = np.insert(y, 0, 0.0)
                sl = np.insert(sl, 0, chord)
                sr = np.insert(sr, 0, chord)
                sl[1] = chord
                lin = np.insert(lin, 0, True)
                pcs = np.insert(pcs, 0, -1)
    return ConvexCurve(x, y, sl, sr, lin, _with_pieces(lin, pcs), True, None,
                       {"kind": "put", "x0": x0, "kstar": kstar}).simplified()


def check_self_duality(curve: ConvexCurve, pivot: float) -> float:
    """Apply the transform twice and return the largest deviation at the knots."""
    decreasing = curve.values[0] > curve.values[-1]
    if decreasing:
        back = put_to_phi(phi_to_put(curve, pivot), pivot, check=False)
        lo = max(curve.knots[0], back.knots[0])
        k = curve.knots[curve.knots >= lo]
        return float(np.max(np.abs(back(k) - curve(k))))
    back = phi_to_put(put_to_phi(curve, pivot, check=False), pivot, kmax=float(curve.knots[-1]))
    lo = max(curve.knots[0], back.knots[0])
    k = curve.knots[curve.knots >= lo]
    return float(np.max(np.abs(back(k) - curve(k))))


def phi_at(P: ConvexCurve, z: float) -> float:
    """Pointwise phi(z) = sup_{K >= z} (K - z)/P(K) by locating the tangent point.

    h(K) = (K - z) P'(K) - P(K) is non-decreasing; its sign change is found on
    the knots and refined by bisection (tolerance 1e-12 in K) on smooth pieces.
    A straight piece through the tangent point returns its left end.
    """
    k, p = P.knots, P.values
    if z < k[0] or z > k[-1]:
        raise DomainError(f"z={z!r} outside [{k[0]!r}, {k[-1]!r}]")
    if np.any(k[p <= 0.0] > z):
        return math.inf
    cand = np.flatnonzero(k >= z)
    hr = (k - z) * P.right_slopes - p
    hl = (k - z) * P.left_slopes - p
    hit = cand[hr[cand] >= 0]
    i = int(hit[0]) if hit.size else int(cand[-1])
    if i == 0 or hl[i] <= 0 or P.linear[i - 1]:
        return float((k[i] - z) / p[i])
    a, b = max(z, float(k[i - 1])), float(k[i])
    args = (k[i - 1], k[i], p[i - 1], p[i], P.right_slopes[i - 1], P.left_slopes[i])
    while b - a > 1e-12:
        m = 0.5 * (a + b)
        val, der = hermite_eval(*args, m)
        if (m - z) * der - val < 0:
            a = m
        else:
            b = m
    m = 0.5 * (a + b)
    val, _ = hermite_eval(*args, m)
    return float((m - z) / val)


def brute_force_phi(P: ConvexCurve, z: float) -> float:
    """Reference value for piecewise-linear P: maximum ratio over knots K >= z."""
    k = P.knots[P.knots >= z]
    p = P.values[P.knots >= z]
    if np.any(p <= 0.0):
        return math.inf
    return float(np.max((k - z) / p))
