import os

import numpy as np
import pytest
from hypothesis import settings

from modalflow import density as D
from modalflow.cluster_tree import build_cluster_tree, build_grid

# reproducible property tests; HYPOTHESIS_PROFILE=explore for fresh examples
settings.register_profile("default", derandomize=True)
settings.register_profile("explore", derandomize=False)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def _seed_grid(model, name):
    return build_grid(model, D.DEFAULT_BOXES[name], 25 if model.dim == 2 else 200)


@pytest.fixture(scope="session")
def bimodal2d():
    return D.bimodal2d()


@pytest.fixture(scope="session")
def bimodal1d():
    return D.bimodal1d()


@pytest.fixture(scope="session")
def normal2d():
    return D.normal2d()


@pytest.fixture(scope="session")
def grid2d(bimodal2d):
    return build_grid(bimodal2d, D.DEFAULT_BOXES["bimodal2d"], 256)


@pytest.fixture(scope="session")
def grid1d(bimodal1d):
    return build_grid(bimodal1d, D.DEFAULT_BOXES["bimodal1d"], 4096)


@pytest.fixture(scope="session")
def normal_grid(normal2d):
    return build_grid(normal2d, D.DEFAULT_BOXES["normal2d"], 256)


@pytest.fixture(scope="session")
def crits2d(bimodal2d):
    return D.find_critical_points(bimodal2d, _seed_grid(bimodal2d, "bimodal2d"))


@pytest.fixture(scope="session")
def crits1d(bimodal1d):
    return D.find_critical_points(bimodal1d, _seed_grid(bimodal1d, "bimodal1d"))


@pytest.fixture(scope="session")
def normal_crits(normal2d):
    return D.find_critical_points(normal2d, _seed_grid(normal2d, "normal2d"))


@pytest.fixture(scope="session")
def saddle2d(crits2d):
    (s,) = [c for c in crits2d if c.kind == "saddle"]
    return s


@pytest.fixture(scope="session")
def tree2d(grid2d, crits2d):
    return build_cluster_tree(grid2d, critical_points=crits2d)


@pytest.fixture(scope="session")
def tree1d(grid1d, crits1d):
    return build_cluster_tree(grid1d, critical_points=crits1d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
