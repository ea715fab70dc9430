"""Exception hierarchy shared by every pipeline stage."""

from __future__ import annotations


class PerpputError(Exception):
    """Base class for all library errors."""


class CurveStructureError(PerpputError, ValueError):
    """Malformed curve data (unsorted knots, mismatched lengths, NaNs)."""


class CurveParseError(PerpputError, ValueError):
    """A quote file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(PerpputError, ValueError):
    """Evaluation point outside the curve's domain."""


class DegenerateCurveError(PerpputError):
    """P(x0) = 0: every put is exercised at once and the model is forced."""

    def __init__(self, x0: float):
        super().__init__(
            "P(x0) = 0: prices are (K - x0)^+ and the only consistent model is "
            f"the deterministic X_t = {x0:g} * exp(r t); tau = 0 is optimal for every K"
        )


class KStarInfiniteError(PerpputError):
    """No strike is exercised immediately; a reflected model would be required."""

    def __init__(self, detail: str = ""):
        msg = "K* not identified (phi'(x0-) = 0); extend the strike domain, or this is the " \
              "K* = infinity case which needs a reflected model (not supported)"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class SmoothnessError(PerpputError):
    """Regular inversion requested on a curve that is not C^2 / strictly convex."""


class ForwardError(PerpputError):
    """Quadrature for the fundamental solution did not converge."""

    def __init__(self, message: str, partial=None):
        self.partial = partial
        super().__init__(message)


class ModelError(PerpputError):
    """Degenerate or unsupported model (too few reachable chain states, ...)."""


class NumericalError(PerpputError):
    """Singular linear system or other numerical failure."""
