import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from modalflow import density as D
from modalflow.cluster_tree import build_grid
from modalflow.errors import DimensionMismatch, FixtureError


def fd_grad(model, x, h=1e-5):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (model.value(x + e) - model.value(x - e)) / (2 * h)
    return g


def fd_hess(model, x, h=1e-5):
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        H[:, i] = (model.value_grad(x + e)[1] - model.value_grad(x - e)[1]) / (2 * h)
    return H


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_standard_normal_at_mode():
    f, g, H = D.normal1d().eval([0.0])
    c = 1 / np.sqrt(2 * np.pi)
    assert f == pytest.approx(c, rel=1e-15)
    assert g[0] == 0.0
    assert H[0, 0] == pytest.approx(-c, rel=1e-14)


def test_isotropic_gradient_points_to_origin(normal2d):
    x = np.array([1.0, 0.0])
    f, g, _ = normal2d.eval(x)
    np.testing.assert_allclose(g, -x * f, rtol=1e-14)


def test_bimodal1d_gradient_matches_fd(bimodal1d):
    x = np.array([1.5])
    assert rel(bimodal1d.eval(x)[1], fd_grad(bimodal1d, x)) < 1e-7


@pytest.mark.parametrize("name", sorted(D.BUILTIN_FIXTURES))
def test_derivatives_on_random_points(name, rng):
    model = D.load_fixture(name)
    box = np.array(D.DEFAULT_BOXES[name])
    X = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((100, model.dim))
    for x in X:
        f, g, H = model.eval(x)
        assert f >= 0
        assert rel(g, fd_grad(model, x)) < 1e-6
        assert rel(H, fd_hess(model, x)) < 1e-4


def test_batch_matches_pointwise(bimodal2d, rng):
    X = rng.normal(size=(50, 2)) * 2
    F, G, Hs = bimodal2d.eval_batch(X)
    for k, x in enumerate(X):
        f, g, H = bimodal2d.eval(x)
        assert F[k] == pytest.approx(f, rel=1e-13)
        np.testing.assert_allclose(G[k], g, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(Hs[k], H, rtol=1e-12, atol=1e-18)


def test_dimension_mismatch(bimodal2d):
    with pytest.raises(DimensionMismatch):
        bimodal2d.eval([1.0, 2.0, 3.0])


@pytest.mark.parametrize("name", ["bimodal1d", "normal1d"])
def test_mixture_integrates_to_one_1d(name):
    m = D.load_fixture(name)
    (lo, hi), = D.DEFAULT_BOXES[name]
    val, _ = integrate.quad(lambda x: m.value(np.array([x])), lo - 2, hi + 2, epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_mixture_integrates_to_one_2d(bimodal2d):
    val, _ = integrate.dblquad(lambda y, x: bimodal2d.value(np.array([x, y])),
                               -6, 9, -6, 7, epsabs=1e-9)
    assert val == pytest.approx(1.0, abs=1e-3)


def test_kde_normalized_and_derivatives(rng):
    centers = rng.normal(size=(7, 2))
    kde = D.KdeModel(centers, 0.6)
    val, _ = integrate.dblquad(lambda y, x: kde.value(np.array([x, y])), -8, 8, -8, 8,
                               epsabs=1e-9)
    assert val == pytest.approx(1.0, abs=1e-3)
    x = np.array([0.3, -0.2])
    assert rel(kde.eval(x)[1], fd_grad(kde, x)) < 1e-6
    assert rel(kde.eval(x)[2], fd_hess(kde, x)) < 1e-4


@pytest.mark.parametrize("kw, msg", [
    (dict(weights=[0.5, 0.4], means=[[0.0], [1.0]], covariances=[[[1.0]], [[1.0]]]), "sum"),
    (dict(weights=[1.0], means=[[0.0, 0.0]], covariances=[[[1.0, 0.2], [0.1, 1.0]]]), "symmetric"),
    (dict(weights=[1.0], means=[[0.0, 0.0]], covariances=[[[1.0, 2.0], [2.0, 1.0]]]), "definite"),
    (dict(weights=[-0.5, 1.5], means=[[0.0], [1.0]], covariances=[[[1.0]], [[1.0]]]), "positive"),
])
def test_mixture_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        D.GaussianMixture(**kw)


def test_kde_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        D.KdeModel([[0.0]], 0.0)


def test_fixture_round_trip(tmp_path, bimodal2d):
    p = tmp_path / "fx.json"
    D.save_fixture(bimodal2d, p, box=[(-4, 7), (-4, 5)])
    m = D.load_fixture(str(p))
    x = np.array([1.1, 0.4])
    assert m.value(x) == bimodal2d.value(x)
    np.testing.assert_array_equal(D.fixture_box(str(p), m), [[-4, 7], [-4, 5]])


def test_fixture_errors(tmp_path):
    with pytest.raises(FixtureError):
        D.load_fixture(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(FixtureError):
        D.load_fixture(str(bad))
    nonspd = tmp_path / "nonspd.json"
    nonspd.write_text(json.dumps({"type": "mixture", "dim": 1, "components": [
        {"weight": 1.0, "mean": [0.0], "covariance": [[-1.0]]}]}))
    with pytest.raises(FixtureError):
        D.load_fixture(str(nonspd))


def test_kde_fixture_schema(tmp_path):
    p = tmp_path / "kde.json"
    p.write_text(json.dumps({"type": "kde", "dim": 1, "centers": [[0.0], [1.0]], "bandwidth": 0.5}))
    m = D.load_fixture(str(p))
    assert isinstance(m, D.KdeModel) and m.dim == 1


def test_unimodal_single_critical_point():
    m = D.normal1d()
    cps = D.find_critical_points(m, np.linspace(-4, 4, 50)[:, None])
    assert len(cps) == 1
    assert cps[0].kind == "mode" and abs(cps[0].location[0]) < 1e-10


def _fprime_sign_changes(model, lo, hi, n=200_001):
    x = np.linspace(lo, hi, n)
    _, G, _ = model.eval_batch(x[:, None], want_hess=False)
    s = np.sign(G[:, 0])
    return x[np.flatnonzero(s[:-1] != s[1:])]


def test_bimodal1d_critical_points_match_dense_scan(crits1d, bimodal1d):
    scan = _fprime_sign_changes(bimodal1d, -4, 7)
    assert len(crits1d) == len(scan) == 3
    locs = np.sort([c.location[0] for c in crits1d])
    np.testing.assert_allclose(locs, np.sort(scan), atol=1e-4)
    kinds = sorted(c.kind for c in crits1d)
    assert kinds == ["minimum", "mode", "mode"]


def test_bimodal2d_critical_points(crits2d, bimodal2d):
    # independent oracle: local minima of |grad f| on a dense grid, then polish
    grid = build_grid(bimodal2d, D.DEFAULT_BOXES["bimodal2d"], 400)
    _, G, _ = bimodal2d.eval_batch(grid.centers(), want_hess=False)
    gn = np.linalg.norm(G, axis=1).reshape(grid.resolution)
    pad = np.pad(gn, 1, constant_values=np.inf)
    core = pad[1:-1, 1:-1]
    is_min = np.ones_like(core, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= core < pad[1 + di:pad.shape[0] - 1 + di, 1 + dj:pad.shape[1] - 1 + dj]
    vals = grid.values
    cand = np.argwhere(is_min & (vals > 1e-3 * vals.max()))
    assert len(cand) == 3
    kinds = sorted(c.kind for c in crits2d)
    assert kinds == ["mode", "mode", "saddle"]
    for c in crits2d:
        assert c.grad_norm <= 1e-10
        d = min(np.linalg.norm(grid.center_of(np.ravel_multi_index(tuple(k), grid.resolution))
                               - c.location) for k in cand)
        assert d < 2 * grid.cell_diagonal
    (s,) = [c for c in crits2d if c.kind == "saddle"]
    assert s.morse_index == 1


def test_critical_points_sorted_and_regrad(crits2d, bimodal2d):
    vals = [c.value for c in crits2d]
    assert vals == sorted(vals, reverse=True)
    for c in crits2d:
        assert np.linalg.norm(bimodal2d.eval(c.location)[1]) <= 1e-10


def test_degenerate_critical_point_flagged():
    # equal-weight, unit-variance mixture at separation 2: the midpoint is degenerate
    m = D.GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.warns(RuntimeWarning):
        cps = D.find_critical_points(m, np.array([[0.0]]), morse_tol=1e-3)
    assert cps[0].degenerate


@settings(max_examples=40, deadline=None)
@given(w=st.floats(0.1, 0.9), mu=st.floats(-3, 3), s=st.floats(0.3, 2.0),
       x=st.floats(-5, 5))
def test_random_1d_mixture_gradient(w, mu, s, x):
    m = D.GaussianMixture([w, 1 - w], [[0.0], [mu]], [[[1.0]], [[s * s]]])
    g = m.eval(np.array([x]))[1][0]
    # closed form from scipy's normal pdf: d/dx N(x; m, s^2) = -(x - m) / s^2 * pdf
    exact = (-x * w * norm.pdf(x) - (x - mu) / s**2 * (1 - w) * norm.pdf(x, mu, s))
    assert g == pytest.approx(exact, rel=1e-10, abs=1e-300)
