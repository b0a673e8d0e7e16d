import numpy as np
import pytest

from modalflow.flow import NOISE, assign_basins
from modalflow.hybrid import hybrid_partition, hybrid_sweep


@pytest.fixture(scope="module")
def points():
    ax = np.linspace(-3, 6, 30)
    gy = np.linspace(-3, 4, 24)
    xx, yy = np.meshgrid(ax, gy, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


@pytest.fixture(scope="module")
def basins(bimodal2d, points, crits2d):
    return assign_basins(bimodal2d, points, critical_points=crits2d)


@pytest.fixture(scope="module")
def mode_values(basins):
    return sorted(m.value for m in basins.modes)


def run(bimodal2d, grid2d, t, points, basins, tree=None):
    return hybrid_partition(bimodal2d, grid2d, t, points, basins=basins, tree=tree)


def test_below_saddle_one_group(bimodal2d, grid2d, points, basins, saddle2d, tree2d):
    r = run(bimodal2d, grid2d, 0.5 * saddle2d.value, points, basins, tree2d)
    assert r.groups == [[0, 1]] and r.noise_modes == []
    converged = basins.labels != NOISE
    assert np.all(r.labels[converged] == 0)
    assert r.provenance[0] is not None


def test_between_saddle_and_lower_mode(bimodal2d, grid2d, points, basins, saddle2d, mode_values):
    t = 0.5 * (saddle2d.value + mode_values[0])
    r = run(bimodal2d, grid2d, t, points, basins)
    assert r.n_groups == 2 and r.noise_modes == []
    # each group keeps exactly one basin
    for gi, g in enumerate(r.groups):
        assert np.array_equal(r.labels == gi, basins.labels == g[0])


def test_above_lower_mode(bimodal2d, grid2d, points, basins, mode_values):
    t = 0.5 * (mode_values[0] + mode_values[1])
    r = run(bimodal2d, grid2d, t, points, basins)
    low = int(np.argmin([m.value for m in basins.modes]))
    high = 1 - low
    assert r.groups == [[high]] and r.noise_modes == [low]
    assert np.all(r.labels[basins.labels == low] == NOISE)
    assert np.all(r.labels[basins.labels == high] == 0)


def test_label_conservation(bimodal2d, grid2d, points, basins, tree2d):
    for r in hybrid_sweep(bimodal2d, grid2d, tree2d.ladder[::8], points, tree=tree2d):
        assert r.labels.shape == (len(points),)
        assert np.all((r.labels == NOISE) | ((r.labels >= 0) & (r.labels < r.n_groups)))


def test_monotone_merging(bimodal2d, grid2d, points, basins, tree2d):
    # two modes together at a higher level were together at every lower level
    levels = tree2d.ladder
    together = []
    for t in levels:
        r = run(bimodal2d, grid2d, t, points, basins)
        together.append(any(len(g) == 2 for g in r.groups))
    k = together.index(False)
    assert all(together[:k]) and not any(together[k:])


def test_empty_level_warns(bimodal2d, grid2d, points, basins):
    with pytest.warns(RuntimeWarning):
        r = run(bimodal2d, grid2d, 1.0, points, basins)
    assert r.n_groups == 0 and np.all(r.labels == NOISE)


def test_to_dict(bimodal2d, grid2d, points, basins, tree2d, saddle2d):
    d = run(bimodal2d, grid2d, 0.5 * saddle2d.value, points, basins, tree2d).to_dict()
    assert d["n_points"] == len(points)
    assert d["groups"][0]["mode_ids"] == [0, 1]
    assert isinstance(d["groups"][0]["tree_node"], int)
