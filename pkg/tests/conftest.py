import os

import hypothesis
import numpy as np
import pytest

from ntzone.errors import DegenerateRegion
from ntzone.io import load_config
from ntzone.solver import consumption_rate, merton_solution
from ntzone.types import MarketParams, Preferences

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=50, deadline=None)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "dev"))

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config")

# draws whose α is this ill-conditioned are redrawn
MAX_ALPHA_COND = 1e3


def config_path(name: str) -> str:
    return os.path.join(CONFIG_DIR, name)


def _draw_problem(rng: np.random.Generator, d: int):
    while True:
        r = rng.uniform(0.005, 0.05)
        vols = rng.uniform(0.1, 0.5, d)
        if d > 1:
            g = rng.normal(size=(d, d))
            cov = g @ g.T + d * np.eye(d)
            scale = 1.0 / np.sqrt(np.diag(cov))
            corr = scale[:, None] * cov * scale[None, :]
        else:
            corr = np.eye(1)
        sigma = np.diag(vols) @ np.linalg.cholesky(corr)
        excess = rng.uniform(0.01, 0.1, d)
        gamma = rng.uniform(0.5, 8.0)
        beta = rng.uniform(0.02, 0.2)
        market = MarketParams(r=r, mu=r + excess, sigma=sigma)
        prefs = Preferences(gamma=gamma, beta=beta)
        if consumption_rate(market, gamma, beta) <= 0.0:
            continue
        if consumption_rate(market, 2.0 * gamma, beta) <= 0.0:
            continue
        try:
            sol = merton_solution(market, prefs)
        except DegenerateRegion:
            continue
        if sol.alpha_cond > MAX_ALPHA_COND:
            continue
        return market, prefs, sol


@pytest.fixture
def draw_problem():
    """Draw admissible (market, prefs, sol) triples with finite value."""
    return _draw_problem


@pytest.fixture(scope="session")
def fig1():
    return load_config(config_path("fig1.json"))


@pytest.fixture(scope="session")
def fig2_uncorr():
    return load_config(config_path("fig2_uncorr.json"))


@pytest.fixture(scope="session")
def fig2_corr():
    return load_config(config_path("fig2_corr.json"))


@pytest.fixture(scope="session")
def fig3_gamma6():
    return load_config(config_path("fig3_gamma6.json"))


@pytest.fixture(scope="session")
def desk():
    return load_config(config_path("desk.yaml"))


@pytest.fixture(scope="session")
def desk_market():
    return MarketParams(r=0.01, mu=[0.05], sigma=[[0.2]])


@pytest.fixture(scope="session")
def desk_prefs():
    return Preferences(gamma=2.0, beta=0.1)


@pytest.fixture(scope="session")
def config_file():
    return config_path
