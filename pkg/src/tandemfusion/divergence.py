"""Chernoff information and KL divergence between class-conditional laws.

All quantities are in nats.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _numerics
from .errors import ModelError
from .models import ConditionalModel, interval_masses, scalar_logpdf
from .quantize import DiscreteCondPMF, QuantizerSpec, cell_probabilities

LAMBDA_LO = 1e-9
LAMBDA_HI = 1.0 - 1e-9
LAMBDA_TOL = 1e-12
GRID_STEP = 1e-6


@dataclass(frozen=True)
class ChernoffResult:
    value: float
    lambda_star: float
    inner_min: float
    iterations: int

    def to_dict(self) -> dict:
        return {"value": self.value, "lambda_star": self.lambda_star,
                "inner_min": self.inner_min, "iterations": self.iterations}


def _package(g_min: float, lam: float, iterations: int) -> ChernoffResult:
    inner = min(max(g_min, 0.0), 1.0)
    value = math.inf if inner == 0.0 else -math.log(inner)
    return ChernoffResult(value=max(value, 0.0), lambda_star=lam, inner_min=inner, iterations=iterations)


def chernoff_curve(pmf: DiscreteCondPMF):
    """``g(lam) = sum_j p_j^(1-lam) q_j^lam`` as a vectorised callable.

    Cells where either probability is zero contribute nothing on the open
    interval and are dropped up front.
    """
    mask = (pmf.p > 0) & (pmf.q > 0)
    lp, lq = np.log(pmf.p[mask]), np.log(pmf.q[mask])
    diff = lq - lp

    def g(lam):
        lam = np.asarray(lam, dtype=float)
        out = np.exp(lp + lam[..., None] * diff).sum(axis=-1)
        return out[()] if out.ndim == 0 else out

    return g, bool(mask.any())


def chernoff_discrete(pmf: DiscreteCondPMF, solver: str = "golden") -> ChernoffResult:
    """``-log min_lam sum_j p_j^(1-lam) q_j^lam`` over ``lam`` in ``[1e-9, 1-1e-9]``.

    ``g`` is convex in ``lam`` (a sum of log-convex terms), so golden-section
    search is exact up to its bracket width. ``solver="grid"`` scans a
    1e-6-spaced grid instead and exists for cross-checking.
    """
    g, overlapping = chernoff_curve(pmf)
    if not overlapping:
        return ChernoffResult(math.inf, 0.5, 0.0, 0)
    if solver == "grid":
        lam = np.arange(LAMBDA_LO, LAMBDA_HI, GRID_STEP)
        vals = np.concatenate([g(chunk) for chunk in np.array_split(lam, max(1, lam.size // 100_000))])
        i = int(np.argmin(vals))
        return _package(float(vals[i]), float(lam[i]), lam.size)
    if solver != "golden":
        raise ModelError(f"unknown solver {solver!r}")
    res = _numerics.golden_section(lambda x: float(g(x)), LAMBDA_LO, LAMBDA_HI, tol=LAMBDA_TOL)
    return _package(res.fx, res.x, res.iterations)


def _bhattacharyya_type_integral(model: ConditionalModel, lam: float) -> float:
    lp0, lp1 = scalar_logpdf(model, 0), scalar_logpdf(model, 1)
    lo, hi = model.support
    return _numerics.quad(lambda x: math.exp((1.0 - lam) * lp1(x) + lam * lp0(x)),
                          lo, hi, model.peaks, f"Chernoff integrand at lambda={lam}")


def chernoff_continuous(model: ConditionalModel, tol: float = 1e-10) -> ChernoffResult:
    """Chernoff information between the two class densities of ``model``."""
    if not model.is_informative:
        return ChernoffResult(0.0, 0.5, 1.0, 0)
    res = _numerics.golden_section(lambda lam: _bhattacharyya_type_integral(model, lam),
                                   LAMBDA_LO, LAMBDA_HI, tol=tol)
    return _package(res.fx, res.x, res.iterations)


class KLDirection(str, enum.Enum):
    P_Q = "p||q"  # D(class 1 || class 0)
    Q_P = "q||p"


def kl_discrete(pmf: DiscreteCondPMF, direction: KLDirection | str = KLDirection.P_Q) -> float:
    a, b = (pmf.p, pmf.q) if KLDirection(direction) is KLDirection.P_Q else (pmf.q, pmf.p)
    terms = special.rel_entr(a, b)
    if np.isinf(terms).any():
        return math.inf
    return max(math.fsum(terms), 0.0)


def kl_continuous(model: ConditionalModel, direction: KLDirection | str = KLDirection.P_Q) -> float:
    if not model.is_informative:
        return 0.0
    lp0, lp1 = scalar_logpdf(model, 0), scalar_logpdf(model, 1)
    la, lb = (lp1, lp0) if KLDirection(direction) is KLDirection.P_Q else (lp0, lp1)
    lo, hi = model.support
    val = _numerics.quad(lambda x: math.exp(la(x)) * (la(x) - lb(x)), lo, hi, model.peaks, "KL integrand")
    return max(val, 0.0)


def posynomial(coeffs, exponents, x) -> float:
    """``sum_m c_m prod_i x_i^a_mi`` for positive ``x``."""
    coeffs = np.asarray(coeffs, dtype=float)
    exponents = np.atleast_2d(np.asarray(exponents, dtype=float))
    x = np.asarray(x, dtype=float)
    return math.fsum(coeffs * np.exp(exponents @ np.log(x)))


def geometric_convexity_gap(coeffs, exponents, p_vec, q_vec, lam: float) -> float:
    """``f(p)^(1-lam) f(q)^lam - f(p^(1-lam) q^lam)`` for a posynomial ``f``.

    Nonnegative, and zero exactly when ``p == q``. Both sides are written
    as ``a * (b/a)^lam`` so equal arguments cancel without rounding.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    exponents = np.atleast_2d(np.asarray(exponents, dtype=float))
    p = np.asarray(p_vec, dtype=float)
    q = np.asarray(q_vec, dtype=float)
    if not 0.0 < lam < 1.0:
        raise ModelError("lambda must lie in (0, 1)")
    if coeffs.ndim != 1 or coeffs.size == 0 or np.any(coeffs <= 0):
        raise ModelError("posynomial coefficients must be positive")
    if exponents.shape != (coeffs.size, p.size) or p.shape != q.shape:
        raise ModelError("shape mismatch between exponents and variables")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ModelError("posynomial arguments must be positive")
    fp, fq = posynomial(coeffs, exponents, p), posynomial(coeffs, exponents, q)
    mixed = p * (q / p) ** lam
    return fp * (fq / fp) ** lam - posynomial(coeffs, exponents, mixed)


@dataclass(frozen=True)
class SystemChernoff:
    """Additive Chernoff information of the fused pair ``(U, X2)``.

    The two terms are minimised over ``lam`` separately, so ``lambda_star``
    belongs to the quantized term only; no shared ``lam`` is implied.
    """

    value: float
    quantized: ChernoffResult
    observed: ChernoffResult

    @property
    def lambda_star(self) -> float:
        return self.quantized.lambda_star

    @property
    def inner_min(self) -> float:
        return math.exp(-self.value)

    @property
    def iterations(self) -> int:
        return self.quantized.iterations + self.observed.iterations


def system_chernoff(system, spec: QuantizerSpec | None = None) -> SystemChernoff:
    spec = system.quantizer if spec is None else spec
    cu = chernoff_discrete(cell_probabilities(system.node1, spec))
    cx = chernoff_continuous(system.node2)
    return SystemChernoff(cu.value + cx.value, cu, cx)


def discretize(model: ConditionalModel, cells: int = 10_000) -> DiscreteCondPMF:
    """Equal-width cells on the truncated support; the end cells absorb the tails."""
    lo, hi = model.support
    edges = np.linspace(lo, hi, cells + 1)
    edges[0], edges[-1] = -np.inf, np.inf
    p, q = interval_masses(model, 1, edges), interval_masses(model, 0, edges)
    return DiscreteCondPMF(p / math.fsum(p), q / math.fsum(q))


def product_pmf(a: DiscreteCondPMF, b: DiscreteCondPMF) -> DiscreteCondPMF:
    """Joint law of two conditionally independent discrete messages."""
    p = np.outer(a.p, b.p).ravel()
    q = np.outer(a.q, b.q).ravel()
    return DiscreteCondPMF(p / math.fsum(p), q / math.fsum(q))


def joint_chernoff(system, spec: QuantizerSpec | None = None, cells: int = 10_000) -> ChernoffResult:
    """Chernoff information of ``(U, X2)`` with one shared ``lam``, X2 discretised into ``cells`` bins.

    This is the literal joint quantity; it never exceeds the additive value
    from :func:`system_chernoff` and matches it when both terms share a
    minimiser.
    """
    spec = system.quantizer if spec is None else spec
    return chernoff_discrete(product_pmf(cell_probabilities(system.node1, spec), discretize(system.node2, cells)))
