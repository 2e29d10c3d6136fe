import numpy as np
import pytest

from aeroloc import sim
from aeroloc.descriptor import DescriptorParams, build_aerial_descriptors


@pytest.fixture(scope="session")
def small_world():
    spec = sim.WorldSpec(width=96, height=96, seed=7)
    return sim.generate_world(spec)


@pytest.fixture(scope="session")
def small_cache(small_world):
    amap, _ = small_world
    return build_aerial_descriptors(amap, DescriptorParams())


@pytest.fixture(scope="session")
def clean_dataset():
    """96x96 world, 30 steps, no noise of any kind."""
    spec = sim.WorldSpec(width=96, height=96, seed=7)
    return sim.make_dataset(spec, sim.NoiseSpec.clean(), 30)


@pytest.fixture(scope="session")
def noisy_dataset():
    spec = sim.WorldSpec(width=96, height=96, seed=11)
    return sim.make_dataset(spec, sim.NoiseSpec(), 30)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
