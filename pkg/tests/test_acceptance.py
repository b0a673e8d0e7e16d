"""Acceptance suite: twelve end-to-end criteria on the canonical fixtures.

Each test prints one ``criterion NN PASS|FAIL`` line (visible without ``-s``)
and asserts both the numerical tolerance and the stated wall-time budget.
Budgets exclude one-time JIT compilation, which the session fixtures trigger.
"""
import time

import numpy as np
import pytest

from modalflow import verify as V
from modalflow.cli import main
from modalflow.cluster_tree import (build_cluster_tree, build_grid, component_count_profile,
                                    count_pattern, transition_levels)
from modalflow.flow import assign_basins, flow_map_psi, flow_map_psi_down
from modalflow.hybrid import hybrid_sweep
from modalflow.transport import brute_force_project_2d, extract_contour_2d, metric_project

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def ctx():
    return {name: V.make_context(name, seed=0) for name in V.DEFAULT_FIXTURES}


@pytest.fixture
def verdict(capsys):
    def report(number, title, ok, detail, elapsed, budget):
        in_time = elapsed < budget
        status = "PASS" if ok and in_time else "FAIL"
        with capsys.disabled():
            print(f"\ncriterion {number:02d} {status}  {title}: {detail} "
                  f"[{elapsed:.2f} s / {budget:g} s]")
        assert ok, detail
        assert in_time, f"took {elapsed:.2f} s, budget {budget} s"
    return report


def _fd_grad(model, x, h=1e-5):
    E = h * np.eye(x.size)
    return np.array([(model.value(x + e) - model.value(x - e)) / (2 * h) for e in E])


def _fd_hess(model, x, h=1e-5):
    E = h * np.eye(x.size)
    return np.column_stack([(model.value_grad(x + e)[1] - model.value_grad(x - e)[1]) / (2 * h)
                            for e in E])


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def test_01_derivatives(ctx, verdict):
    t0 = time.perf_counter()
    worst_g = worst_h = 0.0
    for name, c in ctx.items():
        rng = np.random.default_rng([1, c.dim])
        lo, hi = c.box[:, 0], c.box[:, 1]
        for x in lo + (hi - lo) * rng.random((100, c.dim)):
            _, g, H = c.model.eval(x)
            worst_g = max(worst_g, _rel(_fd_grad(c.model, x), g))
            worst_h = max(worst_h, _rel(_fd_hess(c.model, x), H))
    dt = time.perf_counter() - t0
    verdict(1, "derivatives vs finite differences", worst_g < 1e-6 and worst_h < 1e-4,
            f"max rel err grad {worst_g:.2e} (< 1e-6), Hessian {worst_h:.2e} (< 1e-4)", dt, 1.0)


def test_02_profile(ctx, verdict):
    t0 = time.perf_counter()
    ok, details = True, []
    for name in ("bimodal1d", "bimodal2d"):
        c = ctx[name]
        grid = build_grid(c.model, c.box, 256 if c.dim == 2 else 4096)
        tree = build_cluster_tree(grid, critical_points=c.crits)
        prof = component_count_profile(tree)
        step = float(np.max(np.diff(tree.ladder)))
        vals = sorted(x.value for x in c.crits)
        # the count rises at the merge value and falls at the lower mode's value
        expected = vals[:2]
        trans = transition_levels(prof)
        match = len(trans) == 2 and all(lo - step <= v <= hi + step
                                        for (lo, hi, _, _), v in zip(trans, expected))
        good = count_pattern(prof) == [1, 2, 1] and match
        ok &= good
        details.append(f"{name} {count_pattern(prof)} transitions "
                       + ", ".join(f"[{lo:.4g},{hi:.4g}]" for lo, hi, _, _ in trans)
                       + " vs " + ", ".join(f"{v:.4g}" for v in expected))
    dt = time.perf_counter() - t0
    verdict(2, "component-count profile", ok, "; ".join(details), dt, 5.0)


def test_03_level_flow_identity(ctx, verdict):
    t0 = time.perf_counter()
    lvl = rt = 0.0
    n = 0
    for c in ctx.values():
        for a, b in c.bands:
            for x in V.level_points(c, a, 50)[:50]:
                y = flow_map_psi(c.model, x, b, critical_points=c.crits)
                z = flow_map_psi_down(c.model, y, a, critical_points=c.crits)
                lvl = max(lvl, abs(c.model.value(y) - b))
                rt = max(rt, float(np.linalg.norm(z - x)))
                n += 1
    dt = time.perf_counter() - t0
    verdict(3, "level identity of the level flow", lvl < 1e-6 and rt < 1e-5,
            f"{n} starts: max |f - s| {lvl:.2e} (< 1e-6), round trip {rt:.2e} (< 1e-5)", dt, 10.0)


def test_04_projection_rate(ctx, verdict):
    t0 = time.perf_counter()
    e = V.check_projection_limit(ctx["bimodal2d"], n_points=20)
    slope = e.metric("min_slope").value
    n = e.parameters["n_points"]
    dt = time.perf_counter() - t0
    verdict(4, "projection difference quotient rate",
            n == 20 and slope >= 0.8 and e.metric("projection_failures").value == 0,
            f"min log-log slope over {n} points {slope:.3f} (>= 0.8)", dt, 10.0)


def test_05_oracle_agreement(ctx, verdict):
    t0 = time.perf_counter()
    c = ctx["bimodal2d"]
    rng = np.random.default_rng(5)
    worst, n = 0.0, 0
    while n < 100:
        a, b = c.bands[rng.integers(len(c.bands))]
        t = a + rng.random() * 0.5 * (b - a)
        eta = min(1e-2, b - t) * (0.05 + 0.95 * rng.random())
        pts = V.level_points(c, t, 64)
        x = pts[rng.integers(len(pts))]
        p = metric_project(c.model, x, eta, t=t).point
        q, _, _ = brute_force_project_2d(extract_contour_2d(c.grid, t + eta), x,
                                         model=c.model, eta=eta)
        worst = max(worst, float(np.linalg.norm(p - q)))
        n += 1
    dt = time.perf_counter() - t0
    verdict(5, "projection vs brute-force oracle", worst < 1e-4,
            f"max distance over {n} (x, eta) pairs {worst:.2e} (< 1e-4)", dt, 30.0)


def test_06_hausdorff(ctx, verdict):
    t0 = time.perf_counter()
    worst, n = 0.0, 0
    for name in ("bimodal2d", "normal2d"):
        c = ctx[name]
        for a, b in c.bands:
            for eta in (1e-2, 5e-3):
                if a + eta >= b:
                    continue
                dh, bound = V.hausdorff_check(c, a, eta)
                worst = max(worst, dh / bound)
                n += 1
    dt = time.perf_counter() - t0
    verdict(6, "Hausdorff distance between nearby levels", n > 0 and worst <= 1.2,
            f"max d_H / (2 eta / p0) over {n} cases {worst:.3f} (<= 1.2)", dt, 10.0)


def test_07_homeomorphism_diffeomorphism(ctx, verdict):
    t0 = time.perf_counter()
    rt, sep, inj, svs, ok_h = 0.0, np.inf, np.inf, [], True
    for name in ("bimodal2d", "normal2d"):
        c = ctx[name]
        h = V.check_projection_homeomorphism(c, n_points=200)
        rt = max(rt, h.metric("round_trip_max").value)
        sep = min(sep, h.metric("image_min_separation").value)
        ok_h &= h.metric("projection_failures").value == 0
        lf = V.check_level_flow_identity(c, n_inject=200)
        inj = min(inj, lf.metric("image_min_separation").value)
        for check in (V.check_projection_diffeomorphism, V.check_level_flow_diffeomorphism):
            e = check(c, n_samples=50)
            svs.append(e.metric("min_singular_value").value)
            ok_h &= e.skipped == 0
    sv = min(svs)
    ok = ok_h and rt < 1e-4 and sep > 1e-9 and inj > 1e-9 and sv > 1e-4
    dt = time.perf_counter() - t0
    verdict(7, "homeomorphism and diffeomorphism proxies", ok,
            f"round trip {rt:.2e} (< 1e-4), min image separation {min(sep, inj):.2e} (> 0), "
            f"min tangent singular value {sv:.3f} (> 1e-4)", dt, 30.0)


def test_08_tree_compatibility(ctx, verdict):
    t0 = time.perf_counter()
    e = V.check_tree_flow_compatibility(ctx["bimodal2d"], n_trajectories=100)
    viol = e.metric("chain_violations").value
    dt = time.perf_counter() - t0
    verdict(8, "ascent trajectories follow the tree", viol == 0,
            f"{viol} chain violations over 100 trajectories", dt, 20.0)


def test_09_walk(ctx, verdict):
    t0 = time.perf_counter()
    factors, stops, exact = [], 0, []
    for name in ("bimodal2d", "bimodal1d"):
        e = V.check_projection_walk(ctx[name], n_starts=5)
        stops += e.metric("stops_before_ceiling").value
        try:
            factors.append(e.metric("min_halving_factor").value)
        except KeyError:
            # every gap at the level-resolution floor (1D walks are exact)
            exact.append(name)
    dt = time.perf_counter() - t0
    verdict(9, "projection walk converges to the level flow",
            stops == 0 and "bimodal2d" not in exact and min(factors) >= 1.5,
            f"min gap reduction per halving {min(factors):.2f} (>= 1.5), "
            f"{stops} early stops, exact at floor: {exact or 'none'}", dt, 20.0)


def test_10_hybrid(ctx, verdict):
    t0 = time.perf_counter()
    c = ctx["bimodal2d"]
    regimes = V.hybrid_regimes(c.crits)
    pts = V.hybrid_points(c)
    res = hybrid_sweep(c.model, c.grid, [r[0] for r in regimes], pts,
                       critical_points=c.crits, tree=c.tree)
    got = [(r.n_groups, sorted(r.noise_modes)) for r in res]
    want = [(n, sorted(noise)) for _, n, noise in regimes]
    dt = time.perf_counter() - t0
    verdict(10, "hybrid threshold regimes", got == want and [g for g, _ in got] == [1, 2, 1],
            f"(groups, noise modes) {got} expected {want}", dt, 10.0)


def test_11_basin_coverage(ctx, verdict):
    c = ctx["bimodal2d"]
    xx, yy = np.meshgrid(np.linspace(-4, 7, 200), np.linspace(-4, 5, 200), indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    t0 = time.perf_counter()
    ba = assign_basins(c.model, pts, critical_points=c.crits)
    dt = time.perf_counter() - t0
    saddle_frac = ba.saddle_count / len(pts)
    verdict(11, "basin coverage", ba.coverage >= 0.99 and saddle_frac < 0.01,
            f"coverage {ba.coverage:.4f} (>= 0.99), saddle-trapped {saddle_frac:.4f} (< 0.01)",
            dt, 60.0)


def test_12_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    codes = [main(["verify", "--seed", "0", "--out-dir", str(tmp_path / k)]) for k in "ab"]
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    dt = time.perf_counter() - t0
    verdict(12, "verify report determinism", a == b and codes == [0, 0],
            f"exit codes {codes}, reports {'identical' if a == b else 'differ'} "
            f"({len(a)} bytes)", dt, 300.0)
