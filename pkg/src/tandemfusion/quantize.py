"""k-level quantization of the node-1 likelihood-ratio statistic."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import _numerics
from .errors import ModelError
from .models import (
    ConditionalModel,
    interval_masses,
    level_set_pieces,
    likelihood_ratio,
    posterior_stat,
    scalar_logpdf,
)

PMF_SUM_TOL = 1e-10


class Domain(str, enum.Enum):
    LIKELIHOOD_RATIO = "likelihood_ratio"
    POSTERIOR = "posterior"


@dataclass(frozen=True)
class QuantizerSpec:
    """Ascending thresholds ``b_1 < ... < b_{k-1}`` cutting a scalar statistic into ``k`` cells.

    Cell ``j`` (1-based) is ``[b_{j-1}, b_j)`` with ``b_0 = -inf`` and ``b_k = +inf``.
    """

    k: int
    domain: Domain
    thresholds: tuple = ()

    def __post_init__(self):
        try:
            domain = Domain(self.domain)
        except ValueError:
            raise ModelError(f"unknown quantizer domain {self.domain!r}") from None
        object.__setattr__(self, "domain", domain)
        if int(self.k) != self.k or self.k < 1:
            raise ModelError(f"k must be an integer >= 1, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        t = tuple(float(v) for v in self.thresholds)
        object.__setattr__(self, "thresholds", t)
        if len(t) != self.k - 1:
            raise ModelError(f"expected {self.k - 1} thresholds for k={self.k}, got {len(t)}")
        if not all(math.isfinite(v) for v in t):
            raise ModelError("thresholds must be finite")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ModelError("thresholds must be strictly increasing")
        if domain is Domain.POSTERIOR and any(not 0.0 < v < 1.0 for v in t):
            raise ModelError("posterior thresholds must lie in (0, 1)")

    @property
    def llr_cuts(self) -> np.ndarray:
        """The thresholds expressed on the log-likelihood-ratio axis."""
        t = np.asarray(self.thresholds, dtype=float)
        if self.domain is Domain.POSTERIOR:
            return special.logit(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(t > 0, np.log(np.where(t > 0, t, 1.0)), -np.inf)

    def to_dict(self) -> dict:
        return {"k": self.k, "domain": self.domain.value, "thresholds": list(self.thresholds)}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizerSpec":
        try:
            return cls(int(d["k"]), d["domain"], tuple(d.get("thresholds", ())))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed quantizer description: {exc}") from None


@dataclass(frozen=True)
class DiscreteCondPMF:
    """``p[j] = P(U=j+1 | Y=1)`` and ``q[j] = P(U=j+1 | Y=0)``."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 1 or p.shape != q.shape or p.size == 0:
            raise ModelError("p and q must be non-empty vectors of equal length")
        for name, v in (("p", p), ("q", q)):
            if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
                raise ModelError(f"{name} entries must lie in [0, 1]")
            if abs(math.fsum(v) - 1.0) > PMF_SUM_TOL:
                raise ModelError(f"{name} sums to {math.fsum(v)!r}, not 1")
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    def __len__(self):
        return self.p.size

    def __eq__(self, other):
        if not isinstance(other, DiscreteCondPMF):
            return NotImplemented
        return np.array_equal(self.p, other.p) and np.array_equal(self.q, other.q)

    __hash__ = None


def statistic(model: ConditionalModel, x, domain: Domain):
    if Domain(domain) is Domain.POSTERIOR:
        return posterior_stat(model, x)
    return likelihood_ratio(model, x)


def apply(spec: QuantizerSpec, stat):
    """Symbol in ``1..k`` for each statistic value (lower-closed, upper-open cells)."""
    idx = np.searchsorted(np.asarray(spec.thresholds, dtype=float), stat, side="right") + 1
    return int(idx) if np.ndim(idx) == 0 else idx


def quantize(model: ConditionalModel, spec: QuantizerSpec, x):
    """Node-1 message: ``apply`` composed with the statistic computed from raw ``x``."""
    return apply(spec, statistic(model, x, spec.domain))


def uniform_posterior_quantizer(k: int) -> QuantizerSpec:
    if int(k) != k or k < 1:
        raise ModelError(f"k must be an integer >= 1, got {k!r}")
    k = int(k)
    return QuantizerSpec(k, Domain.POSTERIOR, tuple(j / k for j in range(1, k)))


def cell_probabilities(model: ConditionalModel, spec: QuantizerSpec, method: str = "auto") -> DiscreteCondPMF:
    """Symbol distributions induced on node 1's message by ``spec``.

    ``method``:

    * ``"auto"``: closed form through the CDF for monotone likelihood
      ratios, adaptive quadrature over the llr level sets otherwise.
    * ``"quadrature"``: always integrate densities over level-set pieces.
    * ``"pieces-cdf"``: level-set pieces measured with the CDF; an
      independent cross-check for the quadrature path.
    """
    cuts = spec.llr_cuts
    k = spec.k
    if not model.is_informative:
        j = int(np.searchsorted(cuts, 0.0, side="right"))
        e = np.zeros(k)
        e[j] = 1.0
        return DiscreteCondPMF(e, e.copy())
    if method == "auto" and model.monotone_lr:
        return _monotone_cell_probabilities(model, cuts)
    if method not in ("auto", "quadrature", "pieces-cdf"):
        raise ModelError(f"unknown method {method!r}")

    p, q = [[] for _ in range(k)], [[] for _ in range(k)]
    lp0, lp1 = scalar_logpdf(model, 0), scalar_logpdf(model, 1)
    for piece in level_set_pieces(model, cuts):
        if method == "pieces-cdf":
            m0 = interval_masses(model, 0, [piece.lo, piece.hi])[0]
            m1 = interval_masses(model, 1, [piece.lo, piece.hi])[0]
        else:
            m0 = _numerics.quad(lambda x: math.exp(lp0(x)), piece.lo, piece.hi, model.peaks, "f0 over cell")
            m1 = _numerics.quad(lambda x: math.exp(lp1(x)), piece.lo, piece.hi, model.peaks, "f1 over cell")
        q[piece.index].append(m0)
        p[piece.index].append(m1)
    return DiscreteCondPMF(
        np.clip([math.fsum(v) for v in p], 0.0, 1.0),
        np.clip([math.fsum(v) for v in q], 0.0, 1.0),
    )


def _monotone_cell_probabilities(model, cuts) -> DiscreteCondPMF:
    slope = model.llr_slope
    mid = 0.5 * (model.params0[0] + model.params1[0])
    xcuts = mid + cuts / slope
    edges = np.concatenate([[-np.inf], xcuts, [np.inf]])
    if slope > 0:
        return DiscreteCondPMF(interval_masses(model, 1, edges), interval_masses(model, 0, edges))
    # Decreasing llr: symbol order runs against x.
    edges = np.concatenate([[-np.inf], xcuts[::-1], [np.inf]])
    return DiscreteCondPMF(interval_masses(model, 1, edges)[::-1], interval_masses(model, 0, edges)[::-1])


def _cell_edges(spec: QuantizerSpec) -> list[float]:
    hi = 1.0 if spec.domain is Domain.POSTERIOR else math.inf
    return [0.0, *spec.thresholds, hi]


def refine(spec: QuantizerSpec, rho: int) -> QuantizerSpec:
    """Split every cell into ``rho`` equal subcells; original thresholds are kept verbatim.

    A cell unbounded above (likelihood-ratio domain) is split evenly in the
    posterior coordinate ``b / (1 + b)`` instead.
    """
    if int(rho) != rho or rho < 2:
        raise ModelError(f"rho must be an integer >= 2, got {rho!r}")
    rho = int(rho)
    edges = _cell_edges(spec)
    out: list[float] = []
    for j, (a, b) in enumerate(zip(edges, edges[1:])):
        if j > 0:
            out.append(a)
        if math.isinf(b):
            sa = a / (1.0 + a)
            for i in range(1, rho):
                s = sa + (1.0 - sa) * i / rho
                out.append(s / (1.0 - s))
        else:
            out.extend(a + (b - a) * i / rho for i in range(1, rho))
    return QuantizerSpec(spec.k * rho, spec.domain, tuple(out))


def coarse_symbol(i, rho: int):
    """Coarse cell containing refined symbol ``i`` (both 1-based)."""
    return (np.asarray(i) - 1) // rho + 1


def coarsen_pmf(fine: DiscreteCondPMF, rho: int) -> DiscreteCondPMF:
    """Sum consecutive blocks of ``rho`` symbols."""
    if int(rho) != rho or rho < 1:
        raise ModelError(f"rho must be a positive integer, got {rho!r}")
    if len(fine) % rho:
        raise ModelError(f"length {len(fine)} is not divisible by rho={rho}")
    blocks = len(fine) // rho
    p = fine.p.reshape(blocks, rho).sum(axis=1)
    q = fine.q.reshape(blocks, rho).sum(axis=1)
    return DiscreteCondPMF(np.minimum(p, 1.0), np.minimum(q, 1.0))


class Objective(str, enum.Enum):
    CHERNOFF = "chernoff"
    BAYES_ERROR = "bayes_error"


@dataclass
class ThresholdSearch:
    spec: QuantizerSpec
    objective: Objective
    value: float
    learnable: bool = True
    start: str = "uniform"
    # Objective after each sweep of the winning start; monotone by construction.
    history: list = field(default_factory=list)
    sweeps: int = 0


def _equiprobable_start(model, k, prior1):
    def mass_below(t):
        pmf = cell_probabilities(model, QuantizerSpec(2, Domain.POSTERIOR, (t,)))
        return prior1 * pmf.p[0] + (1 - prior1) * pmf.q[0]

    lo, hi = 1e-12, 1 - 1e-12
    out = []
    for j in range(1, k):
        target = j / k
        if mass_below(lo) >= target or mass_below(hi) <= target:
            return None
        out.append(optimize.brentq(lambda t: mass_below(t) - target, lo, hi, xtol=1e-13))
    if any(b <= a for a, b in zip(out, out[1:])):
        return None
    return tuple(out)


def optimize_thresholds(
    model: ConditionalModel,
    k: int,
    objective: Objective | str = Objective.CHERNOFF,
    system=None,
    seed: int = 0,
    max_sweeps: int = 100,
    sweep_tol: float = 1e-10,
) -> ThresholdSearch:
    """Local search for posterior-domain thresholds.

    Cyclic coordinate descent: each threshold in turn is placed by
    golden-section search between its neighbours, and the move is kept only
    if it improves the objective. Three starts (uniform, equiprobable cells
    of the statistic, seeded random) are run and the best kept.

    ``objective="bayes_error"`` needs ``system``, a ``TandemSystem`` whose
    node 2 and prior are used; its own quantizer is ignored.
    """
    objective = Objective(objective)
    if int(k) != k or k < 2:
        raise ModelError(f"optimize_thresholds needs k >= 2, got {k!r}")
    k = int(k)
    uniform = uniform_posterior_quantizer(k)

    if objective is Objective.CHERNOFF:
        from .divergence import chernoff_discrete

        def loss(t):
            return -chernoff_discrete(cell_probabilities(model, QuantizerSpec(k, Domain.POSTERIOR, t))).value
        prior1 = 0.5
    else:
        if system is None:
            raise ModelError("bayes_error objective requires a TandemSystem context")
        from .fusion import TandemSystem, exact_error

        def loss(t):
            s = TandemSystem(model, system.node2, QuantizerSpec(k, Domain.POSTERIOR, t), system.prior1)
            return exact_error(s).pe_exact
        prior1 = system.prior1

    sign = -1.0 if objective is Objective.CHERNOFF else 1.0
    if not model.is_informative:
        return ThresholdSearch(uniform, objective, sign * loss(uniform.thresholds), learnable=False)

    starts = [("uniform", uniform.thresholds)]
    eq = _equiprobable_start(model, k, prior1)
    if eq is not None:
        starts.append(("equiprobable", eq))
    rng = np.random.default_rng(seed)
    starts.append(("random", tuple(np.sort(rng.uniform(0.02, 0.98, k - 1)))))

    best = None
    gap = 1e-9
    for label, t0 in starts:
        t = list(t0)
        cur = loss(tuple(t))
        history = [sign * cur]
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            before = cur
            for i in range(k - 1):
                lo = (t[i - 1] if i > 0 else 0.0) + gap
                hi = (t[i + 1] if i < k - 2 else 1.0) - gap
                if hi <= lo:
                    continue

                def f(v, i=i):
                    trial = t.copy()
                    trial[i] = v
                    return loss(tuple(trial))

                res = _numerics.golden_section(f, lo, hi, tol=1e-10)
                if res.fx < cur:
                    t[i], cur = res.x, res.fx
            history.append(sign * cur)
            if before - cur < sweep_tol:
                break
        if best is None or cur < best[0]:
            best = (cur, label, tuple(t), history, sweeps)

    cur, label, t, history, sweeps = best
    return ThresholdSearch(QuantizerSpec(k, Domain.POSTERIOR, t), objective, sign * cur,
                           start=label, history=history, sweeps=sweeps)
