"""Numerical checks of the flow / level-set statements on the canonical fixtures.

Each check returns one report entry: its raw metrics, each with a limit and
a sense (``max``: the value must not exceed the limit; ``min``: it must
reach it; ``zero``: it must be exactly zero). The headline
``measured_error`` is the largest value-to-limit ratio, oriented so that
``<= 1`` means pass; an entry passes when ``measured_error <= tolerance``.

Statement ids
-------------
split-point-critical
    the locus where two level-set components meet is a critical point
projection-homeomorphism
    metric projection between nearby regular levels is a bijection
    (injectivity, round trip, Hausdorff distance of the two levels)
projection-singleton
    the projection onto a nearby level is unique (brute-force oracle gap)
projection-infinitesimal
    ``(P(x) - x) / eta -> grad f / |grad f|^2`` at first order in ``eta``
level-flow-identity
    the normalized ascent flow gains density at unit rate
projection-diffeomorphism, level-flow-diffeomorphism
    tangent Jacobians of the projection and of the flow map have full rank
flow-tree-compatibility
    ascent lines move down the cluster tree only
projection-walk
    the iterated projection converges to the normalized flow as eta -> 0
hybrid-partition
    level-set groups extended by flow basins, three threshold regimes
"""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import pdist

from . import density as D
from .cluster_tree import build_cluster_tree, build_grid, locate_component
from .errors import (CriticalCorridor, DenominatorFloor, ModalFlowError, NearCritical,
                     NoConvergence, NotInUpperLevelSet)
from .flow import (NOISE, FlowKind, FlowParams, StopReason, flow_map_extended, flow_map_psi,
                   flow_map_psi_down, integrate_flow)
from .hybrid import hybrid_sweep
from .transport import (LEVEL_TOL, brute_force_project_2d, extract_contour_2d, hausdorff_distance,
                        iterate_projection_walk, metric_project, sample_level_set)

PARAMETERS_VERSION = 1
RATIO_CAP = 1e12

REGISTRY = (
    "split-point-critical",
    "projection-homeomorphism",
    "projection-singleton",
    "projection-infinitesimal",
    "level-flow-identity",
    "projection-diffeomorphism",
    "level-flow-diffeomorphism",
    "flow-tree-compatibility",
    "projection-walk",
    "hybrid-partition",
)

DEFAULT_FIXTURES = ("bimodal1d", "bimodal2d", "normal2d")
ETA_LADDER = (1e-2, 5e-3, 2.5e-3, 1.25e-3)


# ---------------------------------------------------------------------------
# report types
# ---------------------------------------------------------------------------

@dataclass
class Metric:
    name: str
    value: float
    limit: float
    sense: str = "max"

    def ratio(self):
        v, lim = float(self.value), float(self.limit)
        if self.sense == "zero":
            r = 0.0 if v == 0 else RATIO_CAP
        elif self.sense == "max":
            r = v / lim if lim > 0 else (0.0 if v <= 0 else RATIO_CAP)
        else:
            r = lim / v if v > 0 else RATIO_CAP
        if not np.isfinite(r):
            r = RATIO_CAP
        return min(r, RATIO_CAP)

    def to_dict(self):
        return {"name": self.name, "value": _clean(self.value), "limit": self.limit,
                "sense": self.sense}


@dataclass
class Entry:
    statement: str
    fixture: str
    parameters: dict
    metrics: list
    tolerance: float = 1.0
    skipped: int = 0
    notes: list = field(default_factory=list)
    out_of_hypothesis: dict = None

    @property
    def measured_error(self):
        return max((m.ratio() for m in self.metrics), default=0.0)

    @property
    def passed(self):
        return self.measured_error <= self.tolerance

    def metric(self, name):
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self):
        return {"statement": self.statement, "fixture": self.fixture,
                "parameters": self.parameters,
                "metrics": [m.to_dict() for m in self.metrics],
                "measured_error": self.measured_error, "tolerance": self.tolerance,
                "pass": self.passed, "skipped": self.skipped, "notes": self.notes,
                "out_of_hypothesis": self.out_of_hypothesis}


@dataclass
class VerificationReport:
    entries: list
    seed: int
    fixtures: list
    parameters_version: int = PARAMETERS_VERSION

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def entry(self, statement, fixture):
        for e in self.entries:
            if e.statement == statement and e.fixture == fixture:
                return e
        raise KeyError((statement, fixture))

    def to_dict(self):
        return {"seed": self.seed, "fixtures": list(self.fixtures),
                "parameters_version": self.parameters_version,
                "registry": list(REGISTRY), "passed": self.passed,
                "entries": [e.to_dict() for e in self.entries]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def table(self):
        rows = [("statement", "fixture", "measured", "tol", "result")]
        for e in self.entries:
            rows.append((e.statement, e.fixture, f"{e.measured_error:.3g}",
                         f"{e.tolerance:g}", "pass" if e.passed else "FAIL"))
        w = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = ["  ".join(c.ljust(w[i]) for i, c in enumerate(r)) for r in rows]
        lines.insert(1, "  ".join("-" * x for x in w))
        lines.append(f"overall: {'pass' if self.passed else 'FAIL'} "
                     f"({sum(e.passed for e in self.entries)}/{len(self.entries)})")
        return "\n".join(lines)


def _clean(v):
    """JSON-safe float (non-finite values become strings)."""
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    v = float(v)
    return v if np.isfinite(v) else str(v)


# ---------------------------------------------------------------------------
# fixture context
# ---------------------------------------------------------------------------

@dataclass
class FixtureContext:
    name: str
    model: object
    box: np.ndarray
    grid: object
    crits: object
    tree: object
    bands: list
    seed: int

    @property
    def dim(self):
        return self.model.dim

    def rng(self, salt):
        return np.random.default_rng([self.seed, salt])

    @property
    def nonmode_values(self):
        return sorted(c.value for c in self.crits if not c.is_mode)


def regular_bands(crits, margin=0.2):
    """Inner sub-intervals of the gaps between consecutive critical values."""
    vals = sorted(c.value for c in crits)
    edges = [0.0] + vals
    return [(a + margin * (b - a), b - margin * (b - a)) for a, b in zip(edges[:-1], edges[1:])]


def make_context(name, model=None, box=None, seed=0, resolution=None):
    model = model or D.load_fixture(name)
    box = np.asarray(box if box is not None else D.DEFAULT_BOXES[name], dtype=float)
    res = resolution or (256 if model.dim == 2 else 4096)
    grid = build_grid(model, box, res)
    seed_grid = build_grid(model, box, 25 if model.dim == 2 else 200)
    crits = D.find_critical_points(model, seed_grid)
    tree = build_cluster_tree(grid, critical_points=crits)
    return FixtureContext(name, model, box, grid, crits, tree, regular_bands(crits), seed)


def level_points(ctx, t, n):
    """Points on ``{f = t}``: contour samples in 2D, every crossing in 1D."""
    if ctx.dim == 1:
        return _roots_1d(ctx.model, ctx.grid, t)
    return sample_level_set(ctx.model, t, n, grid=ctx.grid, rng=ctx.rng(int(t * 1e9)))


def _roots_1d(model, grid, c):
    x = grid.axes()[0]
    v = grid.values - c
    idx = np.flatnonzero(np.sign(v[:-1]) != np.sign(v[1:]))
    return np.array([[brentq(lambda z: model.value(np.array([z])) - c, x[i], x[i + 1],
                             xtol=1e-15, rtol=1e-15)] for i in idx])


def _tangent_basis(g):
    """Orthonormal basis (columns) of the complement of ``g``."""
    d = g.size
    q, _ = np.linalg.qr(np.column_stack([g / np.linalg.norm(g), np.eye(d)]))
    return q[:, 1:d]


def _min_pairwise(pts):
    if len(pts) < 2:
        return np.inf
    return float(pdist(pts).min())


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def check_split_points(ctx):
    """Newton from every split locus must land on a critical point within two cell diagonals."""
    diag = ctx.grid.cell_diagonal
    dists, fails = [], 0
    for ev in ctx.tree.events:
        x = D.newton_critical(ctx.model, ev.locus)
        if x is None:
            fails += 1
            continue
        dists.append(float(np.linalg.norm(x - ev.locus)))
    metrics = [Metric("newton_failures", fails, 0, "zero")]
    if dists:
        metrics.append(Metric("max_locus_distance", max(dists), 2 * diag))
    return Entry("split-point-critical", ctx.name,
                 {"events": len(ctx.tree.events), "cell_diagonal": diag}, metrics,
                 notes=[] if ctx.tree.events else ["no split events: vacuous"])


def _projection_round_trip(model, xs, t, eta):
    ys, back, fails = [], [], 0
    for x in xs:
        try:
            y = metric_project(model, x, eta, t=t).point
            z = metric_project(model, y, -eta, t=t + eta).point
        except (NearCritical, NoConvergence):
            fails += 1
            continue
        ys.append(y)
        back.append(float(np.linalg.norm(z - x)))
    return np.array(ys), back, fails


def check_projection_homeomorphism(ctx, n_points=200, eta=1e-4, hausdorff_etas=(1e-2, 5e-3)):
    model = ctx.model
    metrics, params = [], {"n_points": n_points, "eta": eta, "bands": []}
    rt_max, inj_min, fails = 0.0, np.inf, 0
    for a, b in ctx.bands:
        xs = level_points(ctx, a, n_points)
        ys, back, f = _projection_round_trip(model, xs, a, eta)
        fails += f
        rt_max = max(rt_max, max(back, default=0.0))
        inj_min = min(inj_min, _min_pairwise(ys))
        params["bands"].append([a, b])
    metrics += [Metric("projection_failures", fails, 0, "zero"),
                Metric("round_trip_max", rt_max, 1e-4),
                Metric("image_min_separation", inj_min, 1e-9, "min")]
    if ctx.dim == 2:
        worst = 0.0
        for a, b in ctx.bands:
            for h in hausdorff_etas:
                if a + h >= b:
                    continue
                dh, bound = hausdorff_check(ctx, a, h)
                worst = max(worst, dh / bound)
        metrics.append(Metric("hausdorff_over_bound", worst, 1.0))
        params["hausdorff_etas"] = list(hausdorff_etas)
    entry = Entry("projection-homeomorphism", ctx.name, params, metrics)
    # probe across a critical value: outside the hypothesis, recorded only
    if ctx.nonmode_values:
        v = ctx.nonmode_values[-1]
        t0, h = 0.95 * v, 0.1 * v
        xs = level_points(ctx, t0, n_points)
        ys, back, f = _projection_round_trip(model, xs, t0, h)
        ok = f == 0 and max(back, default=0.0) <= 1e-4 and _min_pairwise(ys) > 1e-9
        entry.out_of_hypothesis = {
            "band": [t0, t0 + h], "critical_value": v, "projection_failures": f,
            "round_trip_max": _clean(max(back, default=0.0)),
            "image_min_separation": _clean(_min_pairwise(ys)),
            "expected_fail": True, "failed": not ok}
    return entry


def hausdorff_check(ctx, t, eta, n_dense=4000):
    """``(d_H(L_t, L_{t+eta}), 2 eta / p0)`` with ``p0`` the smallest |grad f| on dense ``L_t`` samples."""
    a = extract_contour_2d(ctx.grid, t)
    b = extract_contour_2d(ctx.grid, t + eta)
    pts = sample_level_set(ctx.model, t, n_dense, grid=ctx.grid)
    _, G, _ = ctx.model.eval_batch(pts, want_hess=False)
    p0 = float(np.linalg.norm(G, axis=1).min())
    return hausdorff_distance(a, b), 2 * eta / p0


def _oracle(ctx, x, c, eta=None, contour_cache=None):
    """Brute-force nearest point of ``{f = c}`` to ``x`` and its uniqueness gap."""
    if ctx.dim == 1:
        roots = _roots_1d(ctx.model, ctx.grid, c)
        d = np.abs(roots[:, 0] - x[0])
        k = np.argsort(d)
        gap = float(d[k[1]] - d[k[0]]) if len(k) > 1 else np.inf
        return roots[k[0]], gap
    cont = contour_cache.get(c) if contour_cache is not None else None
    if cont is None:
        cont = extract_contour_2d(ctx.grid, c)
        if contour_cache is not None:
            contour_cache[c] = cont
    p, gap, _ = brute_force_project_2d(cont, x, model=ctx.model, eta=eta)
    return p, gap


def check_projection_singleton(ctx, n_per_band=10, n_pairs=100, eta=min(ETA_LADDER)):
    """Positive oracle gap at the smallest step, and agreement on random (x, eta) pairs."""
    model = ctx.model
    gaps, fails = [], 0
    starts = [(a, x) for a, b in ctx.bands for x in level_points(ctx, a, n_per_band)]
    if ctx.nonmode_values and ctx.dim == 2:
        # points just above the highest merge level, closest to its saddle
        v = ctx.nonmode_values[-1]
        sad = [c.location for c in ctx.crits if not c.is_mode and c.value == v][0]
        t = v + 1e-3
        near = level_points(ctx, t, 400)
        near = near[np.argsort(np.linalg.norm(near - sad, axis=1))[:5]]
        starts += [(t, x) for x in near]
    cache = {}
    for t, x in starts:
        _, gap = _oracle(ctx, x, t + eta, eta=eta, contour_cache=cache)
        gaps.append(gap)
    rng = ctx.rng(2)
    agree = []
    for _ in range(n_pairs):
        a, b = ctx.bands[rng.integers(len(ctx.bands))]
        t = a + rng.random() * 0.5 * (b - a)
        h = min(1e-2, b - t) * (0.05 + 0.95 * rng.random())
        pts = level_points(ctx, t, 64)
        x = pts[rng.integers(len(pts))]
        try:
            p = metric_project(model, x, h, t=t).point
        except (NearCritical, NoConvergence):
            fails += 1
            continue
        q, _ = _oracle(ctx, x, t + h, eta=h)
        agree.append(float(np.linalg.norm(p - q)))
    return Entry("projection-singleton", ctx.name,
                 {"eta": eta, "n_gap_points": len(starts), "n_pairs": n_pairs},
                 [Metric("min_oracle_gap", min(gaps), 1e-8, "min"),
                  Metric("oracle_max_distance", max(agree, default=0.0), 1e-4),
                  Metric("projection_failures", fails, 0, "zero")])


def projection_limit_slope(model, x, etas=ETA_LADDER):
    f, g = model.value_grad(x)
    lim = g / (g @ g)
    errs = []
    for h in etas:
        p = metric_project(model, x, h, t=f).point
        errs.append(np.linalg.norm((p - x) / h - lim))
    errs = np.array(errs)
    if np.all(errs < 1e-12):
        return np.inf, errs
    return float(np.polyfit(np.log(etas), np.log(errs), 1)[0]), errs


def expansion_parameter(model, x, eta):
    """``eta ||Hess f|| / |grad f|^2``: size of the second-order term relative to the first."""
    _, g, H = model.eval(x)
    return float(eta * np.abs(np.linalg.eigvalsh(H)).max() / (g @ g))


def check_projection_limit(ctx, n_points=20, etas=ETA_LADDER, max_expansion=0.5):
    """First-order rate of ``(P(x) - x) / eta`` on points where the expansion is valid.

    A point counts as regular for this step range when the second-order term
    stays below the first at the largest step (``expansion_parameter <=
    max_expansion``); excluded candidates are reported as ``skipped``.
    """
    bands = [(a, b) for a, b in ctx.bands if a + max(etas) < b]
    pools, excluded = [], 0
    for a, _ in bands:
        cand = level_points(ctx, a, 4 * n_points)
        ok = [x for x in cand if expansion_parameter(ctx.model, x, max(etas)) <= max_expansion]
        excluded += len(cand) - len(ok)
        if ok:
            pools.append(ok)
    # round-robin over bands, each pool taken evenly along its contour
    pts = []
    per = int(np.ceil(n_points / max(len(pools), 1)))
    picks = [sorted({k * len(ok) // per for k in range(per)}) for ok in pools]
    for k in range(per):
        for ok, idx in zip(pools, picks):
            if k < len(idx) and len(pts) < n_points:
                pts.append(ok[idx[k]])
    slopes, fails = [], 0
    for x in pts:
        try:
            s, _ = projection_limit_slope(ctx.model, x, etas)
        except (NearCritical, NoConvergence):
            fails += 1
            continue
        slopes.append(s)
    metrics = [Metric("projection_failures", fails, 0, "zero")]
    if slopes:
        metrics.append(Metric("min_slope", min(slopes), 0.8, "min"))
    return Entry("projection-infinitesimal", ctx.name,
                 {"etas": list(etas), "n_points": len(pts), "bands": bands,
                  "max_expansion": max_expansion}, metrics, skipped=excluded)


def check_level_flow_identity(ctx, n_round_trip=50, n_inject=200):
    model, crits = ctx.model, ctx.crits
    lvl, rt, inj, fails = 0.0, 0.0, np.inf, 0
    for a, b in ctx.bands:
        xs = level_points(ctx, a, n_inject)
        ys = []
        for k, x in enumerate(xs):
            try:
                y = flow_map_psi(model, x, b, critical_points=crits)
                lvl = max(lvl, abs(model.value(y) - b))
                if k < n_round_trip:
                    z = flow_map_psi_down(model, y, a, critical_points=crits)
                    rt = max(rt, float(np.linalg.norm(z - x)))
            except (DenominatorFloor, CriticalCorridor):
                fails += 1
                continue
            ys.append(y)
        inj = min(inj, _min_pairwise(np.array(ys)))
    entry = Entry("level-flow-identity", ctx.name,
                  {"bands": ctx.bands, "n_round_trip": n_round_trip, "n_inject": n_inject},
                  [Metric("flow_failures", fails, 0, "zero"),
                   Metric("level_error_max", lvl, 1e-6),
                   Metric("round_trip_max", rt, 1e-5),
                   Metric("image_min_separation", inj, 1e-9, "min")])
    if ctx.nonmode_values:
        v = ctx.nonmode_values[-1]
        x = level_points(ctx, 0.9 * v, 4)[0]
        try:
            flow_map_psi(model, x, 1.1 * v, critical_points=crits)
            refused = False
        except CriticalCorridor:
            refused = True
        entry.out_of_hypothesis = {"band": [0.9 * v, 1.1 * v], "critical_value": v,
                                   "corridor_refused": refused, "expected_fail": True}
    return entry


def tangent_jacobian_min_sv(model, x, mapping, fd_step=1e-5):
    """Smallest singular value of the tangent Jacobian of ``mapping`` at ``x``."""
    _, g = model.value_grad(x)
    U = _tangent_basis(g)
    y = mapping(x)
    _, gy = model.value_grad(y)
    V = _tangent_basis(gy)
    cols = [(mapping(x + fd_step * u) - mapping(x - fd_step * u)) / (2 * fd_step) for u in U.T]
    J = V.T @ np.column_stack(cols)
    return float(np.linalg.svd(J, compute_uv=False).min())


def _diffeo_check(ctx, statement, make_map, n_samples):
    if ctx.dim < 2:
        return Entry(statement, ctx.name, {"n_samples": 0},
                     [], notes=["tangent space is trivial in 1D: vacuous"])
    svs, skipped = [], 0
    for a, b in ctx.bands:
        mapping = make_map(a, b)
        for x in level_points(ctx, a, n_samples):
            try:
                svs.append(tangent_jacobian_min_sv(ctx.model, x, mapping))
            except (NearCritical, NoConvergence, DenominatorFloor):
                skipped += 1
    return Entry(statement, ctx.name, {"n_samples": n_samples, "fd_step": 1e-5,
                                       "bands": ctx.bands},
                 [Metric("min_singular_value", min(svs), 1e-4, "min")], skipped=skipped)


def check_projection_diffeomorphism(ctx, n_samples=50, eta=1e-2):
    def make(a, b):
        h = min(eta, 0.5 * (b - a))
        return lambda y: metric_project(ctx.model, y, h, t=a).point
    return _diffeo_check(ctx, "projection-diffeomorphism", make, n_samples)


def check_level_flow_diffeomorphism(ctx, n_samples=50):
    def make(a, b):
        return lambda y: flow_map_extended(ctx.model, y, b)
    return _diffeo_check(ctx, "level-flow-diffeomorphism", make, n_samples)


def component_chain(tree, grid, traj):
    """Tree nodes met along a trajectory (samples below the grid level are skipped)."""
    chain = []
    for x, f in zip(traj.x, traj.f):
        if f < tree.ladder[0] or f > tree.ladder[-1]:
            continue
        try:
            node = locate_component(tree, grid, x, f)
        except NotInUpperLevelSet:
            continue
        if not chain or chain[-1] != node:
            chain.append(node)
    return chain


def chain_violations(tree, chain):
    return sum(not tree.is_descendant(b, a) for a, b in zip(chain[:-1], chain[1:]))


def check_tree_flow_compatibility(ctx, n_trajectories=100):
    rng = ctx.rng(8)
    lo, hi = ctx.box[:, 0], ctx.box[:, 1]
    starts = []
    while len(starts) < n_trajectories:
        x = lo + (hi - lo) * rng.random(ctx.dim)
        if ctx.model.value(x) > ctx.tree.ladder[0]:
            starts.append(x)
    viol, unconverged, lens = 0, 0, []
    for x in starts:
        tr = integrate_flow(ctx.model, x, FlowKind.PLAIN_ASCENT)
        if tr.stop_reason is not StopReason.CONVERGED_TO_CRITICAL:
            unconverged += 1
        ch = component_chain(ctx.tree, ctx.grid, tr)
        lens.append(len(ch))
        viol += chain_violations(ctx.tree, ch)
    return Entry("flow-tree-compatibility", ctx.name,
                 {"n_trajectories": n_trajectories, "max_chain_length": max(lens)},
                 [Metric("chain_violations", viol, 0, "zero"),
                  Metric("unconverged", unconverged, 0, "zero")])


def walk_gaps(model, x0, s, etas=ETA_LADDER, crits=None):
    """Endpoint distances between projection walks to level ``s`` and ``psi(x0, s)``.

    Also returns the stop reasons and the resolution floor: endpoints only
    carry their level to ``LEVEL_TOL``, i.e. positions to about
    ``LEVEL_TOL / |grad f|``.
    """
    target = flow_map_psi(model, x0, s, critical_points=crits)
    gaps, reasons = [], []
    for h in etas:
        w = iterate_projection_walk(model, x0, h, level_ceiling=s)
        reasons.append(w.stop_reason)
        gaps.append(float(np.linalg.norm(w.end - target)))
    _, g = model.value_grad(target)
    return np.array(gaps), reasons, 10 * LEVEL_TOL / float(np.linalg.norm(g))


def check_projection_walk(ctx, n_starts=5, etas=ETA_LADDER):
    a, b = ctx.bands[0]
    xs = level_points(ctx, a, n_starts)[:n_starts]
    worst_factor, bad_stops, gap_max = np.inf, 0, 0.0
    for x in xs:
        gaps, reasons, floor = walk_gaps(ctx.model, x, b, etas, ctx.crits)
        bad_stops += sum(r != "LevelCeiling" for r in reasons)
        gap_max = max(gap_max, float(gaps.max()))
        for g0, g1 in zip(gaps[:-1], gaps[1:]):
            if g0 < floor:
                continue
            worst_factor = min(worst_factor, g0 / max(g1, floor))
    metrics = [Metric("stops_before_ceiling", bad_stops, 0, "zero")]
    notes = []
    if np.isfinite(worst_factor):
        metrics.append(Metric("min_halving_factor", float(worst_factor), 1.5, "min"))
    else:
        notes.append("all endpoint gaps at the level-resolution floor: walk is exact here")
    return Entry("projection-walk", ctx.name,
                 {"etas": list(etas), "band": [a, b], "n_starts": len(xs),
                  "max_gap": gap_max}, metrics, notes=notes)


def hybrid_regimes(crits):
    """Thresholds and expected ``(n_groups, noise_mode_ids)`` from critical values alone."""
    modes = [c for c in crits if c.is_mode]
    if len(modes) == 1:
        return [(0.5 * modes[0].value, 1, [])]
    if len(modes) != 2:
        return []
    merge = max(c.value for c in crits if not c.is_mode)
    lo_mode, hi_mode = sorted(range(2), key=lambda k: modes[k].value)
    vlo, vhi = modes[lo_mode].value, modes[hi_mode].value
    return [(0.5 * merge, 1, []), (0.5 * (merge + vlo), 2, []),
            (0.5 * (vlo + vhi), 1, [lo_mode])]


def hybrid_points(ctx, n_per_axis=None):
    n = n_per_axis or (60 if ctx.dim == 2 else 1000)
    axes = [np.linspace(lo, hi, n) for lo, hi in ctx.box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def check_hybrid_partition(ctx):
    regimes = hybrid_regimes(ctx.crits)
    pts = hybrid_points(ctx)
    results = hybrid_sweep(ctx.model, ctx.grid, [r[0] for r in regimes], pts,
                           critical_points=ctx.crits, tree=ctx.tree)
    mismatch, label_err = 0, 0
    for (t, n_groups, noise), res in zip(regimes, results):
        mismatch += (res.n_groups != n_groups) + (sorted(res.noise_modes) != sorted(noise))
        basin = res.basins.labels
        expect_noise = (basin == NOISE) | np.isin(basin, noise)
        label_err += int(np.sum(expect_noise != (res.labels == NOISE)))
    return Entry("hybrid-partition", ctx.name,
                 {"thresholds": [r[0] for r in regimes], "n_points": len(pts)},
                 [Metric("regime_mismatches", mismatch, 0, "zero"),
                  Metric("noise_label_errors", label_err, 0, "zero")])


CHECKS = {
    "split-point-critical": check_split_points,
    "projection-homeomorphism": check_projection_homeomorphism,
    "projection-singleton": check_projection_singleton,
    "projection-infinitesimal": check_projection_limit,
    "level-flow-identity": check_level_flow_identity,
    "projection-diffeomorphism": check_projection_diffeomorphism,
    "level-flow-diffeomorphism": check_level_flow_diffeomorphism,
    "flow-tree-compatibility": check_tree_flow_compatibility,
    "projection-walk": check_projection_walk,
    "hybrid-partition": check_hybrid_partition,
}


def run_all(fixtures=DEFAULT_FIXTURES, seed=0, tolerance=1.0, statements=None, models=None):
    """Run the registry on every fixture and collect a :class:`VerificationReport`.

    ``fixtures`` are builtin names or fixture paths; ``models`` may map a
    name to an already-loaded ``(model, box)`` pair.
    """
    entries = []
    names = []
    for fx in fixtures:
        if models and fx in models:
            model, box = models[fx]
        else:
            model = D.load_fixture(fx)
            box = D.fixture_box(fx, model)
        name = str(fx)
        names.append(name)
        ctx = make_context(name, model=model, box=box, seed=seed)
        for sid in statements or REGISTRY:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                try:
                    e = CHECKS[sid](ctx)
                except ModalFlowError as exc:
                    e = Entry(sid, name, {}, [Metric("check_error", 1, 0, "zero")],
                              notes=[f"{type(exc).__name__}: {exc}"])
            e.tolerance = tolerance
            entries.append(e)
    return VerificationReport(entries, seed, names)

