"""Class-conditional observation models for a single scalar sensor.

Every family is represented internally as a finite Gaussian mixture per
class, so densities, CDFs, and sampling share one code path. The likelihood
ratio is always computed in the log domain.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

from .errors import ModelError

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
TRUNCATION_SIGMAS = 12.0
CRITICAL_GRID = 4001


class Family(str, enum.Enum):
    GAUSSIAN_EQUAL_VARIANCE = "gaussian_equal_variance"
    GAUSSIAN_GENERAL = "gaussian_general"
    TWO_COMPONENT_MIXTURE = "two_component_mixture"


class DegenerateRatioWarning(RuntimeWarning):
    """Both class densities vanished; the likelihood ratio was set to 1."""


class Components(NamedTuple):
    weights: np.ndarray
    means: np.ndarray
    sigmas: np.ndarray


class LabeledSample(NamedTuple):
    y: np.ndarray
    x1: np.ndarray
    x2: np.ndarray


@dataclass(frozen=True)
class ConditionalModel:
    """Density pair ``f(x | Y=0)``, ``f(x | Y=1)`` for one scalar feature.

    Parameter layout per class:

    * Gaussian families: ``(mean, std)``.
    * Two-component mixture: ``(w, mean_a, std_a, mean_b, std_b)`` with
      component ``a`` drawn with probability ``w``.
    """

    family: Family
    params0: tuple
    params1: tuple

    def __post_init__(self):
        try:
            family = Family(self.family)
        except ValueError:
            raise ModelError(f"unknown family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        p0 = tuple(float(v) for v in self.params0)
        p1 = tuple(float(v) for v in self.params1)
        object.__setattr__(self, "params0", p0)
        object.__setattr__(self, "params1", p1)

        size = 5 if family is Family.TWO_COMPONENT_MIXTURE else 2
        for name, p in (("params0", p0), ("params1", p1)):
            if len(p) != size:
                raise ModelError(f"{name}: {family.value} expects {size} parameters, got {len(p)}")
            if not all(math.isfinite(v) for v in p):
                raise ModelError(f"{name}: parameters must be finite")
            if family is Family.TWO_COMPONENT_MIXTURE:
                w, _, sa, _, sb = p
                if not 0.0 <= w <= 1.0:
                    raise ModelError(f"{name}: mixture weight must lie in [0, 1]")
                if sa <= 0 or sb <= 0:
                    raise ModelError(f"{name}: component std must be > 0")
            elif p[1] <= 0:
                raise ModelError(f"{name}: std must be > 0")
        if family is Family.GAUSSIAN_EQUAL_VARIANCE and p0[1] != p1[1]:
            raise ModelError("gaussian_equal_variance requires equal std for both classes")

    @classmethod
    def gaussian(cls, mu0: float, mu1: float, sigma: float = 1.0) -> "ConditionalModel":
        return cls(Family.GAUSSIAN_EQUAL_VARIANCE, (mu0, sigma), (mu1, sigma))

    @classmethod
    def gaussian_general(cls, mu0, sigma0, mu1, sigma1) -> "ConditionalModel":
        return cls(Family.GAUSSIAN_GENERAL, (mu0, sigma0), (mu1, sigma1))

    @classmethod
    def mixture(cls, params0, params1) -> "ConditionalModel":
        return cls(Family.TWO_COMPONENT_MIXTURE, params0, params1)

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionalModel":
        try:
            return cls(d["family"], tuple(d["params0"]), tuple(d["params1"]))
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model description: {exc}") from None

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params0": list(self.params0), "params1": list(self.params1)}

    def components(self, y: int) -> Components:
        p = self.params1 if y else self.params0
        if self.family is Family.TWO_COMPONENT_MIXTURE:
            w, ma, sa, mb, sb = p
            return Components(np.array([w, 1.0 - w]), np.array([ma, mb]), np.array([sa, sb]))
        return Components(np.array([1.0]), np.array([p[0]]), np.array([p[1]]))

    @property
    def support(self) -> tuple[float, float]:
        """Truncated integration range used by every quadrature."""
        c0, c1 = self.components(0), self.components(1)
        means = np.concatenate([c0.means, c1.means])
        sig = max(c0.sigmas.max(), c1.sigmas.max())
        return float(means.min() - TRUNCATION_SIGMAS * sig), float(means.max() + TRUNCATION_SIGMAS * sig)

    @property
    def peaks(self) -> list[float]:
        """Component means; handed to quadrature as hint points."""
        return sorted({float(m) for y in (0, 1) for m in self.components(y).means})

    @property
    def is_gaussian(self) -> bool:
        return self.family is not Family.TWO_COMPONENT_MIXTURE

    @property
    def monotone_lr(self) -> bool:
        """True when the likelihood ratio is a monotone (or constant) function of x."""
        return self.is_gaussian and self.params0[1] == self.params1[1]

    @property
    def llr_slope(self) -> float:
        """d llr/dx for the monotone Gaussian case."""
        if not self.monotone_lr:
            raise ModelError("llr_slope is defined only for equal-variance Gaussian models")
        (mu0, s), (mu1, _) = self.params0, self.params1
        return (mu1 - mu0) / (s * s)

    @property
    def is_informative(self) -> bool:
        """False when both classes share the same distribution."""
        if self.family is Family.TWO_COMPONENT_MIXTURE:
            a, b = self.params0, self.params1
            if a == b:
                return False
            # Mixtures equal up to component relabelling.
            swapped = (1.0 - b[0], b[3], b[4], b[1], b[2])
            return a != swapped
        return self.params0 != self.params1


def _as_array(x):
    return np.asarray(x, dtype=float)


def logpdf(model: ConditionalModel, y: int, x):
    w, m, s = model.components(y)
    x = _as_array(x)
    z = (x[..., None] - m) / s
    terms = -0.5 * z * z - np.log(s) - LOG_SQRT_2PI
    with np.errstate(divide="ignore"):
        out = special.logsumexp(terms, axis=-1, b=w)
    return out[()] if out.ndim == 0 else out


def pdf(model: ConditionalModel, y: int, x):
    """Class-conditional density ``f(x | Y=y)``."""
    return np.exp(logpdf(model, y, x))


def cdf(model: ConditionalModel, y: int, x):
    """``P(X <= x | Y=y)``."""
    w, m, s = model.components(y)
    x = _as_array(x)
    out = (w * special.ndtr((x[..., None] - m) / s)).sum(axis=-1)
    return out[()] if out.ndim == 0 else out


def sf(model: ConditionalModel, y: int, x):
    w, m, s = model.components(y)
    x = _as_array(x)
    out = (w * special.ndtr(-(x[..., None] - m) / s)).sum(axis=-1)
    return out[()] if out.ndim == 0 else out


def interval_probability(model: ConditionalModel, y: int, a: float, b: float) -> float:
    """``P(a < X < b | Y=y)`` without catastrophic cancellation in either tail."""
    if not b > a:
        return 0.0
    total = 0.0
    for w, m, s in zip(*model.components(y)):
        za, zb = (a - m) / s, (b - m) / s
        if za > 0:
            total += w * (special.ndtr(-za) - special.ndtr(-zb))
        else:
            total += w * (special.ndtr(zb) - special.ndtr(za))
    return float(total)


def interval_masses(model: ConditionalModel, y: int, edges) -> np.ndarray:
    """Probabilities of the consecutive intervals between ascending ``edges``.

    Right-tail intervals are differenced on the survival function so tiny
    masses keep their relative precision.
    """
    edges = np.asarray(edges, dtype=float)
    total = np.zeros(len(edges) - 1)
    for w, m, s in zip(*model.components(y)):
        z = (edges - m) / s
        lower, upper = special.ndtr(z), special.ndtr(-z)
        total += w * np.where(z[:-1] > 0, upper[:-1] - upper[1:], lower[1:] - lower[:-1])
    return np.maximum(total, 0.0)


def scalar_logpdf(model: ConditionalModel, y: int):
    """Plain-float ``log f(x|y)`` closure; QUADPACK calls it one point at a time."""
    comps = [(math.log(w), m, s, math.log(s)) for w, m, s in zip(*model.components(y)) if w > 0]
    if len(comps) == 1:
        _, m, s, ls = comps[0]

        def f(x):
            z = (x - m) / s
            return -0.5 * z * z - ls - LOG_SQRT_2PI
        return f

    def f(x):
        t = [lw - 0.5 * ((x - m) / s) ** 2 - ls for lw, m, s, ls in comps]
        top = max(t)
        return top + math.log(sum(math.exp(v - top) for v in t)) - LOG_SQRT_2PI
    return f


def log_likelihood_ratio(model: ConditionalModel, x):
    """``log f(x|1) - log f(x|0)``; see :func:`likelihood_ratio` for edge conventions."""
    x = _as_array(x)
    if model.is_gaussian:
        (mu0, s0), (mu1, s1) = model.params0, model.params1
        with np.errstate(invalid="ignore"):
            if not model.is_informative:
                out = np.zeros_like(x)
            elif s0 == s1:
                out = (mu1 - mu0) / (s0 * s0) * (x - 0.5 * (mu0 + mu1))
            else:
                out = math.log(s0 / s1) - (x - mu1) ** 2 / (2 * s1 * s1) + (x - mu0) ** 2 / (2 * s0 * s0)
    else:
        with np.errstate(invalid="ignore"):
            out = logpdf(model, 1, x) - logpdf(model, 0, x)
    out = np.array(out, dtype=float)
    # Both densities vanish at +-inf (and 0/0 shows up as nan): ratio 1 by convention.
    degenerate = ~np.isfinite(x) | np.isnan(out)
    if degenerate.any():
        warnings.warn("both class densities are zero; likelihood ratio set to 1",
                      DegenerateRatioWarning, stacklevel=2)
        out[degenerate] = 0.0
    return out[()] if out.ndim == 0 else out


def likelihood_ratio(model: ConditionalModel, x):
    """``f(x|1) / f(x|0)``.

    Returns ``inf`` when only the denominator vanishes and ``1`` (with a
    :class:`DegenerateRatioWarning`) when both do.
    """
    with np.errstate(over="ignore"):
        return np.exp(log_likelihood_ratio(model, x))


def posterior_stat(model: ConditionalModel, x):
    """``Λ/(1+Λ)``, the equal-prior posterior of class 1; ``Λ = inf`` maps to 1."""
    return special.expit(log_likelihood_ratio(model, x))


def dllr_dx(model: ConditionalModel, x):
    x = _as_array(x)

    def score(y):
        w, m, s = model.components(y)
        z = (x[..., None] - m) / s
        logt = np.log(np.where(w > 0, w, 1.0)) - 0.5 * z * z - np.log(s)
        logt = np.where(w > 0, logt, -np.inf)
        r = np.exp(logt - special.logsumexp(logt, axis=-1, keepdims=True))
        return (r * (m - x[..., None]) / (s * s)).sum(axis=-1)

    return score(1) - score(0)


def llr_critical_points(model: ConditionalModel, lo: float | None = None, hi: float | None = None) -> list[float]:
    """Points in ``(lo, hi)`` where the log-likelihood ratio changes direction."""
    if lo is None or hi is None:
        lo, hi = model.support
    if model.monotone_lr or not model.is_informative:
        return []
    if model.is_gaussian:
        (mu0, s0), (mu1, s1) = model.params0, model.params1
        v0, v1 = s0 * s0, s1 * s1
        xc = (mu1 * v0 - mu0 * v1) / (v0 - v1)
        return [xc] if lo < xc < hi else []
    grid = np.linspace(lo, hi, CRITICAL_GRID)
    d = dllr_dx(model, grid)
    out = []
    for i in range(len(grid) - 1):
        if d[i] == 0.0 and 0 < i:
            out.append(float(grid[i]))
        elif d[i] * d[i + 1] < 0:
            out.append(optimize.brentq(lambda t: float(dllr_dx(model, t)), grid[i], grid[i + 1], xtol=1e-14))
    return out


class Piece(NamedTuple):
    lo: float
    hi: float
    index: int


def level_set_pieces(model: ConditionalModel, cuts, lo: float | None = None, hi: float | None = None) -> list[Piece]:
    """Partition ``[lo, hi]`` into intervals on which ``searchsorted(cuts, llr(x), 'right')`` is constant.

    ``cuts`` are ascending log-likelihood-ratio thresholds. Between
    consecutive critical points the llr is monotone, so each cut has at
    most one crossing per segment, located with Brent's method.
    """
    if lo is None or hi is None:
        lo, hi = model.support
    cuts = np.asarray(cuts, dtype=float)
    knots = [lo, *llr_critical_points(model, lo, hi), hi]
    breaks = set(knots)
    finite_cuts = cuts[np.isfinite(cuts)]
    for a, b in zip(knots, knots[1:]):
        va, vb = float(log_likelihood_ratio(model, a)), float(log_likelihood_ratio(model, b))
        for c in finite_cuts:
            if (va - c) * (vb - c) < 0:
                root = optimize.brentq(lambda t: float(log_likelihood_ratio(model, t)) - c, a, b,
                                       xtol=1e-14, rtol=8.9e-16)
                breaks.add(root)
    edges = sorted(breaks)
    pieces: list[Piece] = []
    for a, b in zip(edges, edges[1:]):
        if b <= a:
            continue
        idx = int(np.searchsorted(cuts, log_likelihood_ratio(model, 0.5 * (a + b)), side="right"))
        if pieces and pieces[-1].index == idx:
            pieces[-1] = Piece(pieces[-1].lo, b, idx)
        else:
            pieces.append(Piece(a, b, idx))
    return pieces


def sample(model: ConditionalModel, y: int, rng: np.random.Generator, size=None):
    """Draw from ``f(. | Y=y)`` using the caller's generator."""
    w, m, s = model.components(y)
    if len(w) == 1:
        return m[0] + s[0] * rng.standard_normal(size)
    pick_a = rng.random(size) < w[0]
    z = rng.standard_normal(size)
    return np.where(pick_a, m[0] + s[0] * z, m[1] + s[1] * z)


def sample_given_labels(model: ConditionalModel, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per label; classes are handled in a fixed order so results depend only on the seed."""
    y = np.asarray(y)
    x = np.empty(y.shape, dtype=float)
    for cls in (0, 1):
        mask = y == cls
        x[mask] = sample(model, cls, rng, int(mask.sum()))
    return x


def sample_labeled(node1: ConditionalModel, node2: ConditionalModel, prior1: float,
                   n: int, rng: np.random.Generator) -> LabeledSample:
    """Labels from the prior, then ``x1`` and ``x2`` drawn independently given the label."""
    y = (rng.random(n) < prior1).astype(np.int8)
    x1 = sample_given_labels(node1, y, rng)
    x2 = sample_given_labels(node2, y, rng)
    return LabeledSample(y, x1, x2)
