import numpy as np
import pytest

from cmlsync.lattice import LocalMap, MapSpec


@pytest.fixture(scope="session")
def tripling() -> LocalMap:
    return LocalMap.affine_mod1(3)


@pytest.fixture
def spec2(tripling) -> MapSpec:
    return MapSpec(tripling, 2, 0.1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
