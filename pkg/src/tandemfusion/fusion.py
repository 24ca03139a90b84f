"""The two-node tandem system: fusion rule, error probabilities, and the k-sweep experiment."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy import special

from . import _numerics
from .divergence import ChernoffResult, SystemChernoff, chernoff_discrete, system_chernoff
from .errors import ModelError, NumericalError
from .models import (
    ConditionalModel,
    DegenerateRatioWarning,
    level_set_pieces,
    log_likelihood_ratio,
    pdf,
    sample_labeled,
    scalar_logpdf,
    sf,
    cdf,
)
from .quantize import (
    DiscreteCondPMF,
    Objective,
    QuantizerSpec,
    cell_probabilities,
    optimize_thresholds,
    quantize,
    refine,
    uniform_posterior_quantizer,
)

MC_CHUNK = 1 << 20
ATOM_MERGE_TOL = 1e-12
STATE_GUARD = 10**7
EQUALITY_TOL = 1e-12


@dataclass(frozen=True)
class TandemSystem:
    """Node 1 quantizes its likelihood ratio and sends the symbol to node 2, which decides."""

    node1: ConditionalModel
    node2: ConditionalModel
    quantizer: QuantizerSpec
    prior1: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.prior1 < 1.0:
            raise ModelError(f"prior1 must lie in (0, 1), got {self.prior1!r}")

    @property
    def prior0(self) -> float:
        return 1.0 - self.prior1

    @cached_property
    def symbol_pmf(self) -> DiscreteCondPMF:
        return cell_probabilities(self.node1, self.quantizer)

    @property
    def log_threshold(self) -> float:
        """Decide 1 when the fused log-likelihood ratio reaches this value."""
        return math.log(self.prior0) - math.log(self.prior1)


@dataclass(frozen=True)
class ErrorReport:
    pe_exact: float
    pfa: float
    pmd: float
    pe_mc: float = math.nan
    mc_stderr: float = math.nan
    mc_n: int = 0
    mc_pfa: float = math.nan
    mc_pmd: float = math.nan


def _symbol_log_ratio(system: TandemSystem, u):
    pmf = system.symbol_pmf
    u = np.asarray(u)
    if not np.issubdtype(u.dtype, np.integer) or np.any((u < 1) | (u > pmf.p.size)):
        raise ModelError(f"symbol out of range 1..{pmf.p.size}: {u!r}")
    p, q = pmf.p, pmf.q
    with np.errstate(divide="ignore"):
        ratio = np.select(
            [(p > 0) & (q > 0), p > 0, q > 0],
            [np.log(p) - np.log(q), np.inf, -np.inf],
            default=0.0,
        )
    if ((p[u - 1] == 0) & (q[u - 1] == 0)).any():
        warnings.warn("symbol has zero probability under both classes; its ratio is taken as 1",
                      DegenerateRatioWarning, stacklevel=3)
    return ratio[u - 1]


def fused_log_llr(system: TandemSystem, u, x2):
    """``log(p_u / q_u) + log Λ2(x2)``: the fused statistic factorises under conditional independence."""
    out = _symbol_log_ratio(system, u) + log_likelihood_ratio(system.node2, x2)
    return out[()] if np.ndim(out) == 0 else out


def fused_llr(system: TandemSystem, u, x2):
    with np.errstate(over="ignore"):
        return np.exp(fused_log_llr(system, u, x2))


def decide(system: TandemSystem, u, x2):
    """Bayes rule on ``(u, x2)``: 1 iff the fused ratio is at least ``prior0 / prior1`` (ties go to 1)."""
    out = (fused_log_llr(system, u, x2) >= system.log_threshold).astype(np.int8)
    return int(out) if np.ndim(out) == 0 else out


def _decision_masses(node2: ConditionalModel, tau: float, method: str = "auto") -> tuple[float, float]:
    """``(P(llr2 >= tau | Y=0), P(llr2 < tau | Y=1))`` for node 2 alone."""
    if tau == -math.inf:
        return 1.0, 0.0
    if tau == math.inf:
        return 0.0, 1.0
    if not node2.is_informative:
        return (1.0, 0.0) if 0.0 >= tau else (0.0, 1.0)
    if method == "auto" and node2.monotone_lr:
        slope = node2.llr_slope
        t = 0.5 * (node2.params0[0] + node2.params1[0]) + tau / slope
        if slope > 0:
            return float(sf(node2, 0, t)), float(cdf(node2, 1, t))
        return float(cdf(node2, 0, t)), float(sf(node2, 1, t))
    lp0, lp1 = scalar_logpdf(node2, 0), scalar_logpdf(node2, 1)
    fa, md = [], []
    for piece in level_set_pieces(node2, [tau]):
        if piece.index == 1:
            fa.append(_numerics.quad(lambda x: math.exp(lp0(x)), piece.lo, piece.hi, node2.peaks, "false-alarm mass"))
        else:
            md.append(_numerics.quad(lambda x: math.exp(lp1(x)), piece.lo, piece.hi, node2.peaks, "miss mass"))
    return math.fsum(fa), math.fsum(md)


def exact_error(system: TandemSystem, method: str = "auto") -> ErrorReport:
    """Bayes error of the fused decision on ``(U, X2)``.

    Per symbol ``u`` the fusion rule reduces to thresholding node 2's llr at
    ``log(prior0 q_u) - log(prior1 p_u)``. Equal-variance Gaussian node 2
    uses the normal CDF at the matching x; other families integrate the
    densities over the decision regions, whose edges are found by root
    finding on the llr. ``method="quadrature"`` forces the latter.
    """
    if method not in ("auto", "quadrature"):
        raise ModelError(f"unknown method {method!r}")
    pmf = system.symbol_pmf
    pi0, pi1 = system.prior0, system.prior1
    pfa_terms, pmd_terms = [], []
    for u, (pu, qu) in enumerate(zip(pmf.p, pmf.q), start=1):
        if pu == 0.0 and qu == 0.0:
            continue
        a = math.log(pi0 * qu) if qu > 0 else -math.inf
        b = math.log(pi1 * pu) if pu > 0 else -math.inf
        tau = a - b
        try:
            fa, md = _decision_masses(system.node2, tau, method)
        except NumericalError as exc:
            exc.diagnostics.update(symbol=u, p_u=float(pu), q_u=float(qu), tau=tau)
            raise
        pfa_terms.append(qu * fa)
        pmd_terms.append(pu * md)
    pfa, pmd = math.fsum(pfa_terms), math.fsum(pmd_terms)
    return ErrorReport(pe_exact=pi0 * pfa + pi1 * pmd, pfa=pfa, pmd=pmd)


def unquantized_error(node1: ConditionalModel, node2: ConditionalModel, prior1: float = 0.5) -> ErrorReport:
    """Bayes error when node 2 sees ``x1`` itself; the floor for every quantizer."""
    pi0, pi1 = 1.0 - prior1, prior1
    tau = math.log(pi0) - math.log(pi1)
    if node1.monotone_lr and node2.monotone_lr:
        # Under Y=y the total llr is Gaussian with mean +-D^2/2 and variance D^2.
        d2 = sum((m.params1[0] - m.params0[0]) ** 2 / m.params0[1] ** 2
                 for m in (node1, node2) if m.is_informative)
        if d2 == 0.0:
            pfa, pmd = (1.0, 0.0) if 0.0 >= tau else (0.0, 1.0)
        else:
            d = math.sqrt(d2)
            pfa = float(special.ndtr(-(tau + 0.5 * d2) / d))
            pmd = float(special.ndtr((tau - 0.5 * d2) / d))
        return ErrorReport(pe_exact=pi0 * pfa + pi1 * pmd, pfa=pfa, pmd=pmd)

    lo, hi = node1.support

    def masses(x1, which):
        t = tau - float(log_likelihood_ratio(node1, x1))
        fa, md = _decision_masses(node2, t)
        return float(pdf(node1, 0, x1)) * fa if which == 0 else float(pdf(node1, 1, x1)) * md

    pfa = _numerics.quad(lambda x: masses(x, 0), lo, hi, node1.peaks, "unquantized false alarm")
    pmd = _numerics.quad(lambda x: masses(x, 1), lo, hi, node1.peaks, "unquantized miss")
    return ErrorReport(pe_exact=pi0 * pfa + pi1 * pmd, pfa=pfa, pmd=pmd)


def monte_carlo_error(system: TandemSystem, n: int, seed=0, exact=None) -> ErrorReport:
    """Simulate ``n`` labelled draws through the full pipeline and count fusion errors.

    ``seed`` is anything ``numpy.random.default_rng`` accepts. Draws are made
    in fixed-size chunks, so the result depends only on ``(n, seed)``.
    ``exact`` supplies the exact fields; ``None`` computes them and ``False``
    leaves them as nan.
    """
    if int(n) != n or n < 1:
        raise ModelError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    rng = np.random.default_rng(seed)
    errors = errors0 = errors1 = n0 = 0
    done = 0
    while done < n:
        m = min(MC_CHUNK, n - done)
        batch = sample_labeled(system.node1, system.node2, system.prior1, m, rng)
        u = quantize(system.node1, system.quantizer, batch.x1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateRatioWarning)
            yhat = decide(system, np.asarray(u), batch.x2)
        wrong = np.asarray(yhat) != batch.y
        errors += int(wrong.sum())
        errors0 += int((wrong & (batch.y == 0)).sum())
        errors1 += int((wrong & (batch.y == 1)).sum())
        n0 += int((batch.y == 0).sum())
        done += m
    n1 = n - n0
    pe = errors / n
    if exact is None:
        exact = exact_error(system)
    elif exact is False:
        exact = ErrorReport(math.nan, math.nan, math.nan)
    return ErrorReport(
        pe_exact=exact.pe_exact, pfa=exact.pfa, pmd=exact.pmd,
        pe_mc=pe, mc_stderr=math.sqrt(pe * (1.0 - pe) / n), mc_n=n,
        mc_pfa=errors0 / n0 if n0 else math.nan,
        mc_pmd=errors1 / n1 if n1 else math.nan,
    )


class ExponentRow(NamedTuple):
    n: int
    pe: float
    exponent: float


def _merge_atoms(llr, m0, m1):
    order = np.argsort(llr, kind="stable")
    llr, m0, m1 = llr[order], m0[order], m1[order]
    with np.errstate(invalid="ignore"):
        same = (np.diff(llr) <= ATOM_MERGE_TOL) | (llr[1:] == llr[:-1])
    starts = np.flatnonzero(np.concatenate([[True], ~same]))
    return llr[starts], np.add.reduceat(m0, starts), np.add.reduceat(m1, starts)


def iid_error_exponent(pmf: DiscreteCondPMF, prior1: float, n_max: int) -> list[ExponentRow]:
    """Exact Bayes error of ``n`` iid symbols, ``n = 1..n_max``, and ``-log(Pe)/n``.

    Dynamic programming over the distribution of the accumulated llr; atoms
    closer than 1e-12 are merged.
    """
    if not 0.0 < prior1 < 1.0:
        raise ModelError(f"prior1 must lie in (0, 1), got {prior1!r}")
    if int(n_max) != n_max or n_max < 1:
        raise ModelError(f"n_max must be a positive integer, got {n_max!r}")
    keep = (pmf.p > 0) | (pmf.q > 0)
    p, q = pmf.p[keep], pmf.q[keep]
    k = p.size
    if math.comb(int(n_max) + k - 1, k - 1) > STATE_GUARD and k ** n_max > STATE_GUARD:
        raise ModelError(f"state space too large for k={k}, n_max={n_max}")
    with np.errstate(divide="ignore"):
        sym = np.log(p) - np.log(q)
    sym = np.where((p > 0) & (q == 0), np.inf, np.where((p == 0) & (q > 0), -np.inf, sym))
    pi0, pi1 = 1.0 - prior1, prior1

    llr, m0, m1 = np.zeros(1), np.ones(1), np.ones(1)
    rows = []
    for n in range(1, int(n_max) + 1):
        with np.errstate(invalid="ignore"):
            llr = (llr[:, None] + sym[None, :]).ravel()
        m0 = (m0[:, None] * q[None, :]).ravel()
        m1 = (m1[:, None] * p[None, :]).ravel()
        live = (m0 > 0) | (m1 > 0)
        llr, m0, m1 = _merge_atoms(llr[live], m0[live], m1[live])
        pe = math.fsum(np.minimum(pi0 * m0, pi1 * m1))
        rows.append(ExponentRow(n, pe, math.inf if pe == 0 else -math.log(pe) / n))
    return rows


class QuantizerMode(str, enum.Enum):
    UNIFORM_NESTED = "uniform_nested"
    OPTIMIZED = "optimized"


@dataclass
class ExperimentRow:
    k: int
    spec: QuantizerSpec | None
    chernoff: ChernoffResult | None = None
    system: SystemChernoff | None = None
    error: ErrorReport | None = None
    failure: str | None = None


@dataclass
class ExperimentResult:
    rows: list = field(default_factory=list)
    mode: QuantizerMode = QuantizerMode.UNIFORM_NESTED
    learnable: bool = True
    chernoff_monotone: bool = True
    pe_monotone: bool = True


def nested_uniform_specs(k_list) -> list[QuantizerSpec]:
    """Uniform posterior quantizer at ``k_list[0]``, refined by ``k[i+1] / k[i]`` at each step."""
    specs = [uniform_posterior_quantizer(k_list[0])]
    for a, b in zip(k_list, k_list[1:]):
        if b % a:
            raise ModelError(f"nested mode needs each k to divide the next; {a} does not divide {b}")
        specs.append(refine(specs[-1], b // a))
    return specs


def _monotone(values, increasing: bool, strict: bool) -> bool:
    pairs = list(zip(values, values[1:]))
    if strict:
        return all((b > a) if increasing else (b < a) for a, b in pairs)
    return all(abs(b - a) <= EQUALITY_TOL for a, b in pairs)


def theorem3_experiment(
    node1: ConditionalModel,
    node2: ConditionalModel,
    prior1: float,
    k_list,
    quantizer_mode: QuantizerMode | str = QuantizerMode.UNIFORM_NESTED,
    mc_samples: int = 0,
    seed: int = 0,
    record_failures: bool = False,
) -> ExperimentResult:
    """Sweep ``k`` and tabulate Chernoff information and error probability per level count.

    With a learnable node 1 the flags require strict monotonicity (C up,
    Pe down). With a non-informative node 1 they require every row to be
    equal within 1e-12, since no quantizer can change anything.

    ``record_failures`` turns a :class:`NumericalError` at one ``k`` into a
    row carrying the message (and false flags) instead of raising.
    """
    mode = QuantizerMode(quantizer_mode)
    k_list = [int(k) for k in k_list]
    if not k_list:
        raise ModelError("k_list must be non-empty")
    if any(b <= a for a, b in zip(k_list, k_list[1:])) or k_list[0] < 1:
        raise ModelError("k_list must be strictly ascending positive integers")
    if not 0.0 < prior1 < 1.0:
        raise ModelError(f"prior1 must lie in (0, 1), got {prior1!r}")

    if mode is QuantizerMode.UNIFORM_NESTED:
        specs = nested_uniform_specs(k_list)
    else:
        specs = [None] * len(k_list)

    children = np.random.SeedSequence(seed).spawn(len(k_list))
    result = ExperimentResult(mode=mode, learnable=node1.is_informative)
    for k, spec, child in zip(k_list, specs, children):
        try:
            if spec is None:
                if k == 1:
                    spec = uniform_posterior_quantizer(1)
                else:
                    ctx = TandemSystem(node1, node2, uniform_posterior_quantizer(k), prior1)
                    spec = optimize_thresholds(node1, k, Objective.BAYES_ERROR, system=ctx).spec
            system = TandemSystem(node1, node2, spec, prior1)
            cu = chernoff_discrete(system.symbol_pmf)
            sc = system_chernoff(system)
            report = exact_error(system)
            if mc_samples:
                report = monte_carlo_error(system, mc_samples, child, exact=report)
        except NumericalError as exc:
            if not record_failures:
                raise
            result.rows.append(ExperimentRow(k, spec, failure=f"{exc} {exc.diagnostics}"))
            continue
        result.rows.append(ExperimentRow(k, spec, cu, sc, report))

    if any(r.failure for r in result.rows):
        result.chernoff_monotone = result.pe_monotone = False
        return result
    strict = result.learnable
    result.chernoff_monotone = _monotone([r.system.value for r in result.rows], True, strict)
    result.pe_monotone = _monotone([r.error.pe_exact for r in result.rows], False, strict)
    return result
