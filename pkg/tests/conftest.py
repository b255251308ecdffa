import numpy as np
import pytest

from causalsurvey import nuisance, sim


@pytest.fixture(scope="session")
def dgp1_truth():
    return sim.enumerate_truth(sim.dgp1(), deltas=[0.5, 2.0])


@pytest.fixture(scope="session")
def dgp1_sample():
    return sim.generate_sample(sim.dgp1(), 50_000, seed=101)


@pytest.fixture(scope="session")
def dgp1_bundle(dgp1_sample):
    return nuisance.crossfit(dgp1_sample, nuisance.NuisanceSpec())


@pytest.fixture(scope="session")
def dgp2_sample():
    return sim.generate_sample(sim.dgp2(), 50_000, seed=202)


@pytest.fixture(scope="session")
def dgp2_bundle(dgp2_sample):
    return nuisance.crossfit(dgp2_sample, nuisance.NuisanceSpec(mediators=True))


def assert_close(actual, expected, atol, label=""):
    assert abs(actual - expected) < atol, \
        f"{label}: {actual} vs {expected} (atol {atol})"
