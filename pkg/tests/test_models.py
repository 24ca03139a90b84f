import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from tandemfusion.errors import ModelError
from tandemfusion.models import (
    ConditionalModel,
    DegenerateRatioWarning,
    Family,
    cdf,
    interval_masses,
    level_set_pieces,
    likelihood_ratio,
    log_likelihood_ratio,
    pdf,
    posterior_stat,
    sample,
    sample_labeled,
)


def phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def Phi(x):
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))


def test_pdf_standard_normal_mode(g01):
    assert pdf(g01, 0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
    assert pdf(g01, 1, 1.0) == pytest.approx(0.3989422804014327, rel=1e-14)


def test_pdf_mixture_formula():
    m = ConditionalModel.mixture((0.5, -1, 1, 1, 1), (0.5, -1, 1, 1, 1))
    assert pdf(m, 0, 0.0) == pytest.approx(0.5 * phi(1) + 0.5 * phi(-1), rel=1e-14)
    assert pdf(m, 0, 0.0) == pytest.approx(0.2420, abs=1e-4)


@pytest.mark.parametrize("x, expected", [(0.5, 1.0), (1.5, math.e), (-0.5, math.exp(-1))])
def test_likelihood_ratio_gaussian_closed_form(g01, x, expected):
    assert likelihood_ratio(g01, x) == pytest.approx(expected, rel=1e-14)


def test_likelihood_ratio_matches_density_ratio():
    models = [
        ConditionalModel.gaussian(-0.3, 1.2, 0.7),
        ConditionalModel.gaussian_general(0.0, 1.0, 0.5, 2.0),
        ConditionalModel.mixture((0.3, -1, 1, 2, 0.5), (0.6, 0, 1.2, 1, 0.8)),
    ]
    xs = np.linspace(-4, 4, 41)
    for m in models:
        direct = pdf(m, 1, xs) / pdf(m, 0, xs)
        np.testing.assert_allclose(likelihood_ratio(m, xs), direct, rtol=1e-11)


@pytest.mark.parametrize("x", [-3.0, 0.0, 0.25, 7.5])
def test_non_learnable_ratio_is_one(flat, x):
    assert likelihood_ratio(flat, x) == 1.0


def test_zero_over_zero_convention(g01):
    with pytest.warns(DegenerateRatioWarning):
        assert likelihood_ratio(g01, math.inf) == 1.0
    with pytest.warns(DegenerateRatioWarning):
        assert posterior_stat(g01, -math.inf) == 0.5


def test_posterior_stat_examples(g01):
    assert posterior_stat(g01, 0.5) == 0.5
    assert posterior_stat(g01, 0.5 + math.log(3)) == pytest.approx(0.75, rel=1e-14)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        # Λ overflows to inf; the posterior saturates at exactly 1.
        assert likelihood_ratio(g01, 2000.0) == math.inf
        assert posterior_stat(g01, 2000.0) == 1.0


def test_posterior_nondecreasing_in_ratio(bimodal):
    xs = np.linspace(-8, 8, 2001)
    lam = likelihood_ratio(bimodal, xs)
    post = posterior_stat(bimodal, xs)
    order = np.argsort(lam, kind="stable")
    assert np.all(np.diff(post[order]) >= 0)
    assert np.all((post >= 0) & (post <= 1)) and np.all(lam >= 0)


@pytest.mark.parametrize("mu0, mu1, sigma", [(0, 1, 1), (-2, 0.5, 0.3), (1, 4, 2.5)])
def test_monotone_likelihood_ratio(mu0, mu1, sigma):
    m = ConditionalModel.gaussian(mu0, mu1, sigma)
    xs = np.linspace(mu0 - 5 * sigma, mu1 + 5 * sigma, 5001)
    assert np.all(np.diff(log_likelihood_ratio(m, xs)) > 0)


@pytest.mark.parametrize("model", [
    ConditionalModel.gaussian(0, 1, 1),
    ConditionalModel.gaussian_general(-1, 0.4, 2, 3.0),
    ConditionalModel.mixture((0.2, -3, 0.5, 1, 2), (0.7, 0, 1, 4, 0.3)),
])
@pytest.mark.parametrize("y", [0, 1])
def test_density_integrates_to_one(model, y):
    w, m, s = model.components(y)
    lo = float((m - 12 * s).min())
    hi = float((m + 12 * s).max())
    val, _ = integrate.quad(lambda x: float(pdf(model, y, x)), lo, hi, points=list(m), epsabs=1e-13, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


def test_cdf_examples(g01):
    assert cdf(g01, 0, 0.0) == 0.5
    assert cdf(g01, 0, 1.959964) == pytest.approx(Phi(1.959964), abs=1e-15)
    assert cdf(g01, 0, 1.959964) == pytest.approx(0.975, abs=1e-6)
    assert cdf(g01, 0, -math.inf) == 0.0


@given(st.floats(-50, 50), st.floats(0, 10))
def test_cdf_monotone(x, dx):
    m = ConditionalModel.mixture((0.3, -1, 1, 2, 0.5), (0.6, 0, 1.2, 1, 0.8))
    for y in (0, 1):
        assert cdf(m, y, x) <= cdf(m, y, x + dx)


def test_interval_masses_tail_precision():
    m = ConditionalModel.gaussian(0, 1, 1)
    edges = [9.0, 10.0]
    # erfc oracle: P(9 < X < 10) is ~1e-19, far below cdf resolution near 1.
    want = 0.5 * (math.erfc(9 / math.sqrt(2)) - math.erfc(10 / math.sqrt(2)))
    assert interval_masses(m, 0, edges)[0] == pytest.approx(want, rel=1e-10)


def test_sample_deterministic(g01):
    a = sample(g01, 1, np.random.default_rng(7), 5)
    b = sample(g01, 1, np.random.default_rng(7), 5)
    np.testing.assert_array_equal(a, b)


def test_sample_mean_and_ks(g01):
    x = sample(g01, 0, np.random.default_rng(20261018), 10**6)
    assert abs(x.mean()) < 4 / math.sqrt(10**6)
    assert stats.kstest(x, lambda t: cdf(g01, 0, t)).statistic < 0.002


def test_mixture_sample_ks():
    m = ConditionalModel.mixture((0.3, -1, 1, 2, 0.5), (0.6, 0, 1.2, 1, 0.8))
    for y in (0, 1):
        x = sample(m, y, np.random.default_rng(11 + y), 10**6)
        assert stats.kstest(x, lambda t: cdf(m, y, t)).statistic < 0.002


def test_labeled_sample_conditionally_independent():
    m1 = ConditionalModel.gaussian(0, 1, 1)
    m2 = ConditionalModel.gaussian(0, 2, 1)
    s = sample_labeled(m1, m2, 0.3, 200_000, np.random.default_rng(5))
    assert abs(s.y.mean() - 0.3) < 4 * math.sqrt(0.21 / 200_000)
    for cls in (0, 1):
        mask = s.y == cls
        r = np.corrcoef(s.x1[mask], s.x2[mask])[0, 1]
        assert abs(r) < 4 / math.sqrt(mask.sum())


@pytest.mark.parametrize("family, p0, p1", [
    ("gaussian_equal_variance", (0, 1), (1, 2)),
    ("gaussian_equal_variance", (0, 0), (1, 0)),
    ("gaussian_general", (0, -1), (1, 1)),
    ("gaussian_general", (0, 1, 2), (1, 1)),
    ("two_component_mixture", (1.5, 0, 1, 1, 1), (0.5, 0, 1, 1, 1)),
    ("two_component_mixture", (0.5, 0, 1, 1, 0), (0.5, 0, 1, 1, 1)),
    ("gaussian_equal_variance", (0, math.nan), (1, 1)),
    ("cauchy", (0, 1), (1, 1)),
])
def test_invalid_models_rejected(family, p0, p1):
    with pytest.raises(ModelError):
        ConditionalModel(family, p0, p1)


def test_model_dict_roundtrip(bimodal):
    assert ConditionalModel.from_dict(bimodal.to_dict()) == bimodal
    assert bimodal.family is Family.TWO_COMPONENT_MIXTURE


def test_model_is_immutable(g01):
    with pytest.raises(AttributeError):
        g01.params0 = (1.0, 1.0)


@pytest.mark.parametrize("model", [
    ConditionalModel.gaussian_general(0, 1, 0, 2),
    ConditionalModel.gaussian_general(0.5, 2, -1, 0.7),
    ConditionalModel.mixture((0.5, -1, 1, 1, 1), (0.5, -2, 1, 2, 1.5)),
    ConditionalModel.gaussian(1, -1, 1),
])
def test_level_set_pieces_label_every_point(model):
    cuts = np.array([-1.0, -0.2, 0.0, 0.7, 2.0])
    pieces = level_set_pieces(model, cuts)
    lo, hi = model.support
    assert pieces[0].lo == lo and pieces[-1].hi == hi
    assert all(a.hi == b.lo for a, b in zip(pieces, pieces[1:]))
    xs = np.random.default_rng(0).uniform(lo, hi, 5000)
    for x in xs:
        piece = next(p for p in pieces if p.lo <= x <= p.hi)
        want = np.searchsorted(cuts, log_likelihood_ratio(model, x), side="right")
        if piece.lo < x < piece.hi:
            assert piece.index == want
