import numpy as np
import pytest

from tandemfusion.models import ConditionalModel

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def g01():
    return ConditionalModel.gaussian(0.0, 1.0, 1.0)


@pytest.fixture
def flat():
    return ConditionalModel.gaussian(0.0, 0.0, 1.0)


@pytest.fixture
def bimodal():
    # Class 0 is a symmetric pair of bumps, class 1 a wider pair: llr is non-monotone.
    return ConditionalModel.mixture((0.5, -1.0, 1.0, 1.0, 1.0), (0.5, -2.0, 1.0, 2.0, 1.5))


def random_model(rng: np.random.Generator, family: int) -> ConditionalModel:
    if family == 0:
        return ConditionalModel.gaussian(rng.normal(), rng.normal(), rng.uniform(0.5, 2.0))
    if family == 1:
        return ConditionalModel.gaussian_general(rng.normal(), rng.uniform(0.5, 2.0), rng.normal(), rng.uniform(0.5, 2.0))

    def side():
        return (rng.uniform(0.2, 0.8), rng.normal() - 1, rng.uniform(0.5, 1.5), rng.normal() + 1, rng.uniform(0.5, 1.5))
    return ConditionalModel.mixture(side(), side())
