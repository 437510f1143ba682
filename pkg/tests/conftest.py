import numpy as np
import pytest

from config import RunConfig
from core import NUM_VIEWS, Panorama, SeededStream, ViewImage
from encoder import get_profile
from simenv import generate_env


def random_view(stream: SeededStream, side: int = 32) -> ViewImage:
    return ViewImage(stream.uniform(0.0, 1.0, (3, side, side)))


def random_panorama(seed: int, navigable, side: int = 32) -> Panorama:
    stream = SeededStream(seed).fork("panorama")
    return Panorama(tuple(random_view(stream.fork(j), side) for j in range(1, NUM_VIEWS + 1)),
                    frozenset(navigable))


def constant_view(value: float, side: int = 32) -> ViewImage:
    return ViewImage(np.full((3, side, side), value))


@pytest.fixture(scope="session")
def desk():
    return get_profile("desk")


@pytest.fixture(scope="session")
def small_env():
    return generate_env(nodes=16, branching=3, sigma_spatial=0.5, rho_temporal=0.8, seed=3)


@pytest.fixture(scope="session")
def default_env():
    return generate_env(seed=0)


@pytest.fixture
def quick_config():
    """A short suite on the small environment"""
    return RunConfig().with_overrides({
        'suite.episodes': 4,
        'suite.step_limit': 6,
        'suite.min_hops': 2,
        'suite.max_hops': 4,
    })
