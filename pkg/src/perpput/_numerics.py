"""Small numerical kernels: cubic Hermite pieces, finite-difference weights."""

from __future__ import annotations

import numpy as np


def hermite_eval(x0, x1, y0, y1, d0, d1, x):
    """Value and derivative of the cubic Hermite piece on [x0, x1] at ``x``."""
    h = x1 - x0
    t = (x - x0) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2 * t3 - 3 * t2 + 1
    h10 = t3 - 2 * t2 + t
    h01 = -2 * t3 + 3 * t2
    h11 = t3 - t2
    val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    dh00 = (6 * t2 - 6 * t) / h
    dh10 = 3 * t2 - 4 * t + 1
    dh01 = (-6 * t2 + 6 * t) / h
    dh11 = 3 * t2 - 2 * t
    der = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1
    return val, der


def hermite_integral(x0, x1, y0, y1, d0, d1):
    """Exact integral of the cubic Hermite piece (corrected trapezoid)."""
    h = x1 - x0
    return h * (y0 + y1) / 2 + h * h * (d0 - d1) / 12


def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights for the ``m``-th derivative at ``z``.

    Fornberg's recursion; ``x`` may be non-uniform. Returns weights for
    derivative order ``m`` only.
    """
    n = len(x)
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def stencil(i: int, n: int, width: int, stride: int = 1) -> np.ndarray | None:
    """Indices of a ``width``-point stencil through node ``i`` of an ``n``-node run.

    Uses every ``stride``-th node, centred when possible and shifted one-sided
    near the ends. ``None`` when the run is too short.
    """
    lattice = np.arange(i % stride, n, stride)
    if len(lattice) < width:
        return None
    pos = i // stride
    start = min(max(pos - width // 2, 0), len(lattice) - width)
    return lattice[start:start + width]


def run_derivative(x: np.ndarray, y: np.ndarray, width: int = 5, stride: int = 1) -> np.ndarray:
    """First derivative of samples ``y(x)`` on one smooth run, node by node."""
    n = len(x)
    out = np.full(n, np.nan)
    for i in range(n):
        idx = stencil(i, n, width, stride)
        if idx is None:
            continue
        w = fd_weights(x[i], x[idx], 1)
        out[i] = w @ y[idx]
    return out


def numeric_slope(func, x: float, a: float, b: float) -> float:
    """Fourth-order derivative of ``func`` at ``x`` without leaving [a, b]."""
    scale = max(abs(x), 1e-12 * max(abs(a), abs(b), 1.0))
    h = min(1e-3 * scale, (b - a) / 8)
    if x - 2 * h >= a and x + 2 * h <= b:
        f = [func(x + k * h) for k in (-2, -1, 1, 2)]
        return (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h)
    sgn = 1.0 if x - 2 * h < a else -1.0
    f = [func(x + sgn * k * h) for k in range(5)]
    return sgn * (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
