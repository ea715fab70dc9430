"""Recovery of a local volatility from a smooth, strictly convex put curve.

For K below K*, the exercise level is z = K - P/P' and

    sigma(z)^2 z^2 = 2 r K P(K)^2 P''(K) / P'(K)^3.

Above the spot only an integral condition on sigma is identified; the
constant sigma^2 = 2 r (K* - x0)/x0 satisfies it.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .curves import ConvexCurve, find_k_under, find_kstar, node_second_derivative
from .errors import SmoothnessError
from .forward import VolCurve

IRREGULAR_HINT = "use the irregular (scale/speed) pipeline"


def _check_regular(P: ConvexCurve, x0: float) -> tuple[float, float]:
    kstar = find_kstar(P, x0)
    k_under = find_k_under(P)
    inside = (P.knots > k_under) & (P.knots <= kstar)
    kinks = [i for i in P.kinks() if inside[i]]
    if kinks:
        raise SmoothnessError(f"put curve has a kink at K={P.knots[kinks[0]]:g}; {IRREGULAR_HINT}")
    mids = (P.knots[:-1] > k_under - 1e-15) & (P.knots[1:] <= kstar)
    lin = np.flatnonzero(P.linear & mids)
    if lin.size:
        i = lin[0]
        raise SmoothnessError(f"put curve is linear on [{P.knots[i]:g}, {P.knots[i + 1]:g}]; {IRREGULAR_HINT}")
    return kstar, k_under


def exercise_boundary(P: ConvexCurve, K: float, x0: float | None = None) -> float:
    """z(K) = K - P(K)/P'(K) on a smooth, strictly convex part of P."""
    lo, hi = P.domain
    if not lo < K < hi:
        raise SmoothnessError(f"K={K!r} outside the interior of the curve domain")
    if x0 is not None and K >= find_kstar(P, x0):
        return float(x0)
    i = int(np.clip(np.searchsorted(P.knots, K, side="right") - 1, 0, P.n - 2))
    at_knot = P.knots[i] == K
    if at_knot and i in set(P.kinks().tolist()):
        raise SmoothnessError(f"P has a kink at K={K!r}; {IRREGULAR_HINT}")
    if P.linear[i] or (at_knot and i > 0 and P.linear[i - 1]):
        raise SmoothnessError(f"P is linear around K={K!r}; {IRREGULAR_HINT}")
    val = P(K)
    slope = P.derivative(K)
    return float(K - val / slope)


def recover_volatility(P: ConvexCurve, r: float, x0: float, *, n_points: int = 1024,
                       floor: float = 1e-8, rtol: float = 1e-4) -> VolCurve:
    """Local volatility on (x_under, x0] from P, constant above x0.

    The curve is evaluated at its own knots strictly between K_under and K*
    (thinned to about ``n_points``), skipping strikes with P < floor*x0.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    kstar, k_under = _check_regular(P, x0)
    d2, smooth = node_second_derivative(P, rtol=rtol)
    K = P.knots
    sel = np.flatnonzero((K > k_under) & (K <= kstar) & (P.values >= floor * x0))
    if sel.size < 4:
        raise SmoothnessError("too few smooth knots below K*; " + IRREGULAR_HINT)
    bad = sel[~smooth[sel]]
    if bad.size:
        raise SmoothnessError(f"second derivative unstable at K={K[bad[0]]:g} "
                              f"(finite-difference check > {rtol:g}); {IRREGULAR_HINT}")
    if np.any(d2[sel] <= 0):
        j = sel[d2[sel] <= 0][0]
        raise SmoothnessError(f"P'' <= 0 at K={K[j]:g}; {IRREGULAR_HINT}")
    if sel.size > n_points:
        sel = sel[np.unique(np.round(np.linspace(0, sel.size - 1, n_points)).astype(int))]
    k = K[sel]
    p = P.values[sel]
    dp = P.left_slopes[sel]
    z = k - p / dp
    if np.any(np.diff(z) <= 0):
        raise SmoothnessError("exercise boundary is not increasing; " + IRREGULAR_HINT)
    sig2 = 2 * r * k * p ** 2 * d2[sel] / (dp ** 3 * z ** 2)
    sigma = np.sqrt(sig2)
    above = math.sqrt(2 * r * (kstar - x0) / x0)
    meta = {"kstar": kstar, "k_under": k_under, "sigma_above": above,
            "sigma_below_x0": float(sigma[-1]), "jump_at_x0": float(above - sigma[-1]),
            "strikes": k, "z": z}
    return VolCurve(z, sigma, tag="recovered", split=float(x0), sigma_above=above, meta=meta)


def volatility_from_phi(phi: ConvexCurve, r: float, *, rtol: float = 1e-4):
    """sigma^2 = 2 r (phi - x phi') / (x^2 phi'') at the smooth knots of phi."""
    d2, smooth = node_second_derivative(phi, rtol=rtol)
    ok = smooth & (d2 > 0)
    x = phi.knots[ok]
    v = phi.values[ok]
    d1 = phi.left_slopes[ok]
    sig2 = 2 * r * (v - x * d1) / (x ** 2 * d2[ok])
    return x, np.sqrt(sig2)


def alternative_upper_vol(vol: VolCurve, r: float, x0: float, kstar: float,
                          shape=lambda x: 1.0 + 0.5 * np.sin(np.log(x))) -> VolCurve:
    """A different sigma above x0 that leaves every put price unchanged.

    sigma_alt(x) = a * shape(x) for x > x0, with ``a`` solved so that the
    upper tail integral (equivalently phi'(x0-) = -1/(K* - x0)) is preserved;
    below x0 sigma is unchanged.
    """
    from .forward import fundamental_phi

    target = -1.0 / (kstar - x0)

    def make(a):
        return VolCurve(func=lambda x: np.where(np.asarray(x) > x0, a * shape(np.asarray(x, float)),
                                                vol(np.minimum(x, x0))), tag=f"alternative:{a!r}")

    f = lambda a: fundamental_phi(make(a), r, x0).dphi_x0 - target
    a = optimize.brentq(f, 1e-2, 1e1, xtol=1e-15, rtol=1e-14)
    return make(a)
