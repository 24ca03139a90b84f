"""Small numerical kernels: golden-section search and guarded quadrature."""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

from scipy import integrate

from .errors import NumericalError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# Tolerances requested from QUADPACK. The documented contract is 1e-10
# absolute; asking for more keeps refinement sums consistent to ~1e-13.
QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-13
QUAD_CONTRACT = 1e-10
QUAD_LIMIT = 400


class ScalarMin(NamedTuple):
    x: float
    fx: float
    iterations: int


def golden_section(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> ScalarMin:
    """Minimize a unimodal ``f`` on ``[lo, hi]`` until the bracket is narrower than ``tol``.

    The endpoints are evaluated too, so a monotone ``f`` returns the better
    endpoint instead of a point one bracket-width inside it.
    """
    if hi < lo:
        lo, hi = hi, lo
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
        it += 1
    best = (fc, c) if fc <= fd else (fd, d)
    for x in (lo, hi):
        fx = f(x)
        if fx < best[0]:
            best = (fx, x)
    return ScalarMin(x=best[1], fx=best[0], iterations=it)


def quad(func, a: float, b: float, points=None, what: str = "integral") -> float:
    """``scipy.integrate.quad`` with a hard failure when the error estimate misses the contract."""
    if a == b:
        return 0.0
    if points is not None:
        points = [p for p in points if a < p < b] or None
    val, err, info, *rest = integrate.quad(
        func,
        a,
        b,
        points=points,
        epsabs=QUAD_EPSABS,
        epsrel=QUAD_EPSREL,
        limit=QUAD_LIMIT,
        full_output=1,
    )
    if not math.isfinite(val) or err > max(QUAD_CONTRACT, 1e-9 * abs(val)):
        raise NumericalError(
            f"quadrature of {what} did not converge",
            {"interval": (a, b), "estimate": val, "abserr": err,
             "message": rest[0] if rest else "", "neval": info.get("neval")},
        )
    return val
