import numpy as np
import pytest

from seirpinn import DomainSpec, EpidemicParams, GridSpec, InitialConditionSpec
from seirpinn.network import NetworkConfig, PinnModel


@pytest.fixture
def params():
    """Baseline parameter set used across the experiments."""
    return EpidemicParams(Lambda=1.0, mu=0.01, beta=0.4, p=0.3, delta=0.3,
                          eta=0.1, gamma=0.2, lambda_diff=0.05)


@pytest.fixture
def domain_1d():
    return DomainSpec(dim=1, lengths=(1.0,), T=5.0)


@pytest.fixture
def domain_2d():
    return DomainSpec(dim=2, lengths=(1.0, 1.0), T=5.0)


@pytest.fixture
def grid_1d(domain_1d):
    return GridSpec.from_domain(domain_1d, M=101, k=0.005)


@pytest.fixture
def grid_2d(domain_2d):
    return GridSpec.from_domain(domain_2d, M=51, k=0.01)


@pytest.fixture
def ic_spec():
    return InitialConditionSpec()


def small_model(dim=1, seed=0, width=8, n_hidden=2, m=4, activation="tanh",
                T=5.0, L=1.0):
    domain = DomainSpec(dim=dim, lengths=(L,) * dim, T=T)
    config = NetworkConfig(dim=dim, n_hidden=n_hidden, width=width,
                           activation=activation, n_frequencies=m)
    return PinnModel.xavier_init(config, domain, seed=seed), domain


def random_params(rng):
    """Admissible parameter draw for property trials."""
    return EpidemicParams(
        Lambda=rng.uniform(0.0, 2.0), mu=rng.uniform(0.005, 0.5),
        beta=rng.uniform(0.0, 1.0), p=rng.uniform(0.0, 1.0),
        delta=rng.uniform(0.0, 1.0), eta=rng.uniform(0.0, 1.0),
        gamma=rng.uniform(0.0, 1.0), lambda_diff=rng.uniform(0.0, 0.5))
