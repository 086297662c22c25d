import numpy as np
import pytest

from quenchedlab.acim import solve_equivariant
from quenchedlab.driving import BaseSpec, sample_path
from quenchedlab.maps import MapFamily, doubling, quadratic_mod, sine_mod, tripling
from quenchedlab.stats import Observable
from quenchedlab.transfer import Cocycle


def grid_cos(n_bins, k=1):
    return Observable.from_function(lambda x: np.cos(2 * np.pi * k * x), n_bins, name=f"cos{k}")


def grid_identity(n_bins):
    return Observable.from_function(lambda x: x, n_bins, name="identity")


@pytest.fixture(scope="session")
def pair_family():
    return MapFamily([doubling(), tripling()])


@pytest.fixture(scope="session")
def smooth_family():
    return MapFamily([sine_mod(2, 0.5), quadratic_mod(2.6, 0.2)])


@pytest.fixture(scope="session")
def iid_half():
    return BaseSpec("iid", [0.5, 0.5])


@pytest.fixture(scope="session")
def pair_cocycle(pair_family, iid_half):
    path = sample_path(iid_half, 200, 2101, seed=11)
    return Cocycle(pair_family, path, 1024)


@pytest.fixture(scope="session")
def pair_density(pair_cocycle):
    return solve_equivariant(pair_cocycle, range(0, 2001), depth=40)


@pytest.fixture(scope="session")
def doubling_cocycle():
    path = sample_path(BaseSpec("iid", [1.0]), 100, 2101)
    return Cocycle(MapFamily([doubling()]), path, 4096)


@pytest.fixture(scope="session")
def doubling_density(doubling_cocycle):
    return solve_equivariant(doubling_cocycle, range(0, 2001), depth=40)


@pytest.fixture(scope="session")
def smooth_cocycle(smooth_family, iid_half):
    path = sample_path(iid_half, 200, 601, seed=5)
    return Cocycle(smooth_family, path, 1024)


@pytest.fixture(scope="session")
def smooth_density(smooth_cocycle):
    return solve_equivariant(smooth_cocycle, range(0, 501), depth=60)
