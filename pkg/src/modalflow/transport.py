"""Moving between nearby level sets: contours, metric projection, Hausdorff distance."""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .cluster_tree import Grid, build_grid
from .errors import EmptyLevel, NearCritical, NoConvergence

CONTOUR_TOL = 1e-8
LEVEL_TOL = 1e-9
NORMALITY_TOL = 1e-6
DENOM_FLOOR = 1e-8


# ---------------------------------------------------------------------------
# contours
# ---------------------------------------------------------------------------

@dataclass
class Contour:
    level: float
    loops: list
    closed: list
    residuals: list = field(default_factory=list)

    @property
    def n_loops(self):
        return len(self.loops)

    def vertices(self):
        return np.vstack(self.loops) if self.loops else np.empty((0, 2))

    def segments(self):
        """All segments as ``(starts, ends)`` arrays of shape ``(m, 2)``."""
        a, b = [], []
        for loop, closed in zip(self.loops, self.closed):
            nxt = np.roll(loop, -1, axis=0) if closed else loop[1:]
            a.append(loop if closed else loop[:-1])
            b.append(nxt)
        if not a:
            return np.empty((0, 2)), np.empty((0, 2))
        return np.vstack(a), np.vstack(b)

    def length(self):
        a, b = self.segments()
        return float(np.linalg.norm(b - a, axis=1).sum())

    def max_residual(self):
        return max((float(np.max(np.abs(r))) for r in self.residuals), default=0.0)

    def to_dict(self):
        return {"level": self.level,
                "loops": [{"closed": bool(c), "vertices": lp.tolist()}
                          for lp, c in zip(self.loops, self.closed)]}


def _bisect_edges(model, p0, p1, t, iters=60):
    """Vectorized bisection for f = t on the segments p0 -> p1 (sign change assumed)."""
    f0 = model.value(p0) - t
    lo = np.zeros(len(p0))
    hi = np.ones(len(p0))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = model.value(p0 + mid[:, None] * (p1 - p0)) - t
        same = np.sign(fm) == np.sign(f0)
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    lam = 0.5 * (lo + hi)
    pts = p0 + lam[:, None] * (p1 - p0)
    return pts, model.value(pts) - t


def extract_contour_2d(source, t, resolution=None, box=None):
    """Marching-squares contour of level ``t``.

    ``source`` is a 2D :class:`Grid` (ideally carrying its model) or a model,
    in which case ``box`` and ``resolution`` define the sampling grid. The
    lattice nodes are the grid cell centers. Crossings are located by linear
    interpolation and then, when a model is available, refined by bisection
    along the edge. Ambiguous saddle cells are resolved by the value at the
    cell center.
    """
    if isinstance(source, Grid):
        grid = source
    else:
        if box is None:
            raise ValueError("a box is needed when contouring a model directly")
        grid = build_grid(source, box, resolution or 256)
    if grid.dim != 2:
        raise ValueError("extract_contour_2d works on 2D grids only")
    model = grid.model
    V = grid.values
    if not (V >= t).any() or not (V < t).any():
        raise EmptyLevel(f"level {t} does not cross the grid")
    ax, ay = grid.axes()
    above = V >= t

    # crossings on axis-0 edges (i,j)-(i+1,j) and axis-1 edges (i,j)-(i,j+1)
    ex = np.argwhere(above[:-1, :] != above[1:, :])
    ey = np.argwhere(above[:, :-1] != above[:, 1:])
    p0 = np.vstack([np.column_stack([ax[ex[:, 0]], ay[ex[:, 1]]]),
                    np.column_stack([ax[ey[:, 0]], ay[ey[:, 1]]])])
    p1 = np.vstack([np.column_stack([ax[ex[:, 0] + 1], ay[ex[:, 1]]]),
                    np.column_stack([ax[ey[:, 0]], ay[ey[:, 1] + 1]])])
    v0 = np.concatenate([V[ex[:, 0], ex[:, 1]], V[ey[:, 0], ey[:, 1]]])
    v1 = np.concatenate([V[ex[:, 0] + 1, ex[:, 1]], V[ey[:, 0], ey[:, 1] + 1]])
    if model is not None:
        pts, res = _bisect_edges(model, p0, p1, t)
    else:
        lam = (t - v0) / (v1 - v0)
        pts = p0 + lam[:, None] * (p1 - p0)
        res = np.full(len(pts), np.nan)
    key = {}
    for k, (i, j) in enumerate(ex):
        key[(0, int(i), int(j))] = k
    off = len(ex)
    for k, (i, j) in enumerate(ey):
        key[(1, int(i), int(j))] = off + k

    adj = {}

    def link(a, b):
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    nx, ny = V.shape
    cells = np.argwhere((above[:-1, :-1] != above[1:, :-1]) | (above[:-1, :-1] != above[:-1, 1:])
                        | (above[1:, 1:] != above[1:, :-1]) | (above[1:, 1:] != above[:-1, 1:]))
    for i, j in cells:
        i, j = int(i), int(j)
        # corners a=(i,j) b=(i+1,j) c=(i+1,j+1) d=(i,j+1); edges around the cell
        e = [key.get((0, i, j)), key.get((1, i + 1, j)),
             key.get((0, i, j + 1)), key.get((1, i, j))]
        hits = [x for x in e if x is not None]
        if len(hits) == 2:
            link(hits[0], hits[1])
            continue
        a_up = above[i, j]
        c_up = above[i + 1, j + 1]
        center = np.array([0.5 * (ax[i] + ax[i + 1]), 0.5 * (ay[j] + ay[j + 1])])
        if model is not None:
            cv = model.value(center)
        else:
            cv = 0.25 * (V[i, j] + V[i + 1, j] + V[i, j + 1] + V[i + 1, j + 1])
        center_up = cv >= t
        # diagonal pair a,c shares a side with the center: connect through it
        if a_up == center_up:
            link(e[0], e[1])   # cut off corner b
            link(e[2], e[3])   # cut off corner d
        else:
            link(e[3], e[0])   # cut off corner a
            link(e[1], e[2])   # cut off corner c

    loops, closed, resid = [], [], []
    seen = set()
    # open chains first (start at degree-1 vertices on the grid border)
    starts = sorted(v for v, nb in adj.items() if len(nb) == 1) + sorted(adj)
    for s in starts:
        if s in seen:
            continue
        chain = [s]
        seen.add(s)
        prev, cur = None, s
        is_closed = False
        while True:
            nbrs = [v for v in adj[cur] if v != prev]
            nxt = None
            for v in nbrs:
                if v not in seen:
                    nxt = v
                    break
            if nxt is None:
                is_closed = len(chain) > 2 and s in adj[cur] and prev is not None
                break
            chain.append(nxt)
            seen.add(nxt)
            prev, cur = cur, nxt
        loops.append(pts[chain].copy())
        closed.append(is_closed)
        resid.append(res[chain].copy())
    order = sorted(range(len(loops)), key=lambda k: tuple(loops[k].min(axis=0)))
    return Contour(level=float(t), loops=[loops[k] for k in order],
                   closed=[closed[k] for k in order], residuals=[resid[k] for k in order])


def resample_loop(loop, closed, n):
    """``n`` points spaced evenly by arc length along a polyline."""
    pts = np.vstack([loop, loop[:1]]) if closed else loop
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if closed:
        q = (np.arange(n) + 0.5) * total / n
    else:
        q = np.linspace(0.0, total, n)
    k = np.clip(np.searchsorted(s, q, side="right") - 1, 0, len(seg) - 1)
    lam = (q - s[k]) / np.where(seg[k] > 0, seg[k], 1.0)
    return pts[k] + lam[:, None] * (pts[k + 1] - pts[k])


def resample_contour(contour, spacing):
    out = []
    for loop, closed in zip(contour.loops, contour.closed):
        pts = np.vstack([loop, loop[:1]]) if closed else loop
        length = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
        n = max(int(np.ceil(length / spacing)), 4)
        out.append(resample_loop(loop, closed, n))
    return out


def snap_to_level(model, x, t, iters=8):
    """Newton steps along the gradient onto ``f = t``."""
    x = np.array(x, dtype=float)
    for _ in range(iters):
        f, g = model.value_grad(x)
        g2 = g @ g
        if g2 < DENOM_FLOOR**2:
            raise NearCritical("gradient vanishes while snapping to the level set")
        x = x - (f - t) * g / g2
        if abs(f - t) < 1e-15:
            break
    return x


def sample_level_set(model, t, n, grid=None, rng=None, box=None):
    """``n`` points on ``{f = t}``.

    In 2D: the contour, resampled evenly by arc length, split across loops by
    length, then snapped onto the level. Otherwise: bisection along random
    rays from every mode above ``t`` (``rng`` fixes the directions).
    """
    if model.dim == 2:
        if grid is None:
            grid = build_grid(model, box, 256)
        c = extract_contour_2d(grid, t)
        lengths = np.array([np.linalg.norm(np.diff(np.vstack([lp, lp[:1]]), axis=0),
                                            axis=1).sum() for lp in c.loops])
        counts = np.floor(n * lengths / lengths.sum()).astype(int)
        counts[np.argmax(lengths)] += n - counts.sum()
        pts = [resample_loop(lp, cl, k) for lp, cl, k in zip(c.loops, c.closed, counts) if k]
        return np.array([snap_to_level(model, p, t) for p in np.vstack(pts)])
    from .density import find_critical_points

    rng = np.random.default_rng(0) if rng is None else rng
    if grid is None:
        raise ValueError("a seed grid is needed to locate modes outside 2D")
    modes = [m for m in find_critical_points(model, grid) if m.is_mode and m.value > t]
    out = []
    for k in range(n):
        m = modes[k % len(modes)]
        u = rng.normal(size=model.dim)
        u /= np.linalg.norm(u)
        out.append(_first_crossing(model, m.location, u, t))
    return np.array(out)


def _first_crossing(model, origin, u, c, r_max=None, n_scan=64):
    """First point ``origin + r u`` (r > 0) with f = c, or None."""
    f0 = model.value(origin) - c
    r_max = r_max or 20.0
    rs = np.linspace(0.0, r_max, n_scan + 1)[1:]
    vals = model.value(origin[None, :] + rs[:, None] * u[None, :]) - c
    sgn = np.sign(vals) != np.sign(f0)
    if not sgn.any():
        return None
    k = int(np.argmax(sgn))
    lo = 0.0 if k == 0 else rs[k - 1]
    r = brentq(lambda r: model.value(origin + r * u) - c, lo, rs[k], xtol=1e-15, rtol=1e-15)
    return origin + r * u


# ---------------------------------------------------------------------------
# metric projection
# ---------------------------------------------------------------------------

@dataclass
class ProjectionResult:
    point: np.ndarray
    iterations: int
    level_residual: float
    normality_residual: float
    unique: bool = None
    source: np.ndarray = field(default=None, repr=False)
    target_level: float = None


def _sine(v, n):
    nv = np.linalg.norm(v)
    nn = np.linalg.norm(n)
    if nv == 0 or nn == 0:
        return 0.0
    c = (v @ n) / (nv * nn)
    return float(np.linalg.norm(v / nv - c * n / nn))


def metric_project(model, x, eta, t=None, level_tol=LEVEL_TOL, normality_tol=NORMALITY_TOL,
                   denom_floor=DENOM_FLOOR, max_iter=100):
    """Nearest point to ``x`` on the level set ``f = t + eta``.

    ``t`` defaults to ``f(x)``. Predictor ``x + eta grad f / |grad f|^2``, then
    Newton on the stationarity system ``y - x = lam grad f(y)``,
    ``f(y) = t + eta`` until both residuals are below tolerance. Raises
    NearCritical when the gradient falls below ``denom_floor`` and
    NoConvergence after ``max_iter`` corrector steps.
    """
    x = np.asarray(x, dtype=float).reshape(model.dim)
    fx, gx = model.value_grad(x)
    t = fx if t is None else float(t)
    c = t + eta
    g2 = gx @ gx
    if np.sqrt(g2) < denom_floor:
        raise NearCritical(f"||grad f(x)|| = {np.sqrt(g2):.3g} below the floor")
    if eta == 0 and abs(fx - c) == 0:
        return ProjectionResult(x.copy(), 0, 0.0, 0.0, source=x, target_level=c)
    d = model.dim
    lam = (c - fx) / g2
    y = x + lam * gx
    for it in range(1, max_iter + 1):
        f, g, H = model.eval(y)
        gn = np.linalg.norm(g)
        if gn < denom_floor:
            raise NearCritical(f"||grad f|| = {gn:.3g} below the floor during projection")
        lres = abs(f - c)
        nres = _sine(y - x, g)
        if lres < level_tol and nres < normality_tol and it > 1:
            return ProjectionResult(y, it - 1, lres, nres, source=x, target_level=c)
        r = np.concatenate([y - x - lam * g, [f - c]])
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = np.eye(d) - lam * H
        J[:d, d] = -g
        J[d, :d] = g
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise NoConvergence("singular projection system") from None
        rn = np.linalg.norm(r)
        alpha = 1.0
        while alpha > 1e-4:
            yn = y + alpha * step[:d]
            ln = lam + alpha * step[d]
            fn, gnv = model.value_grad(yn)
            if np.linalg.norm(np.concatenate([yn - x - ln * gnv, [fn - c]])) < rn or rn < 1e-14:
                break
            alpha *= 0.5
        y, lam = yn, ln
    f, g = model.value_grad(y)
    raise NoConvergence(f"projection did not converge in {max_iter} iterations "
                        f"(level residual {abs(f - c):.3g})")


def brute_force_project_2d(contour, x, model=None, eta=None, exclusion_radius=None,
                           unique_tol=1e-8):
    """Nearest contour point to ``x`` found by exhaustive search.

    Segment-level closest points give a candidate; with ``model`` the
    candidate is refined on the exact level set by golden-section search over
    ray angles from ``x`` (the distance to a closed set is the minimum over
    directions of the first crossing distance). ``gap`` is the distance to
    the nearest contour point outside a ball of ``exclusion_radius`` around
    the best point minus the best distance.

    Returns ``(point, gap, unique)``.
    """
    x = np.asarray(x, dtype=float)
    a, b = contour.segments()
    if len(a) == 0:
        raise ValueError("empty contour")
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    lam = np.clip(np.einsum("ij,ij->i", x - a, ab) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
    close = a + lam[:, None] * ab
    dist = np.linalg.norm(close - x, axis=1)
    k = int(np.argmin(dist))
    best, dbest = close[k], float(dist[k])
    seg_len = float(np.sqrt(np.median(L2)))

    if model is not None and dbest > 0:
        c = contour.level
        u0 = (best - x) / dbest
        th0 = np.arctan2(u0[1], u0[0])
        half = min(np.pi / 2, 4.0 * max(seg_len, np.sqrt(L2[k])) / dbest)

        def r_of(th):
            u = np.array([np.cos(th), np.sin(th)])
            p = _first_crossing(model, x, u, c, r_max=2.5 * dbest + 4 * seg_len, n_scan=96)
            return np.inf if p is None else float(np.linalg.norm(p - x))

        lo, hi = th0 - half, th0 + half
        gr = (np.sqrt(5) - 1) / 2
        m1 = hi - gr * (hi - lo)
        m2 = lo + gr * (hi - lo)
        r1, r2 = r_of(m1), r_of(m2)
        for _ in range(80):
            if r1 < r2:
                hi, m2, r2 = m2, m1, r1
                m1 = hi - gr * (hi - lo)
                r1 = r_of(m1)
            else:
                lo, m1, r1 = m1, m2, r2
                m2 = lo + gr * (hi - lo)
                r2 = r_of(m2)
            if hi - lo < 1e-13:
                break
        th = 0.5 * (lo + hi)
        p = _first_crossing(model, x, np.array([np.cos(th), np.sin(th)]), c,
                            r_max=2.5 * dbest + 4 * seg_len, n_scan=96)
        # chords may cut inside the true curve, so the exact crossing can be
        # slightly farther than the polyline candidate
        if p is not None and np.linalg.norm(p - x) <= dbest + seg_len:
            best, dbest = p, float(np.linalg.norm(p - x))

    if exclusion_radius is None:
        if model is not None and eta is not None:
            _, g = model.value_grad(x)
            exclusion_radius = 10.0 * abs(eta) / max(np.linalg.norm(g), DENOM_FLOOR)
        else:
            exclusion_radius = 10.0 * seg_len
    cand = np.vstack([close, contour.vertices()])
    cd = np.linalg.norm(cand - x, axis=1)
    outside = np.linalg.norm(cand - best, axis=1) > exclusion_radius
    gap = float(cd[outside].min() - dbest) if outside.any() else np.inf
    return best, gap, bool(gap > unique_tol)


# ---------------------------------------------------------------------------
# Hausdorff distance and reach
# ---------------------------------------------------------------------------

def _point_segment_dist(p, a, b):
    ab = b - a
    L2 = np.einsum("ij,ij->i", ab, ab)
    lam = np.clip(np.einsum("ij,ij->i", p - a, ab) / np.where(L2 > 0, L2, 1.0), 0, 1)
    return np.linalg.norm(a + lam[:, None] * ab - p, axis=1)


def _directed(pa, segs_b, k=8):
    a, b = segs_b
    tree = cKDTree(0.5 * (a + b))
    k = min(k, len(a))
    _, idx = tree.query(pa, k=k)
    idx = np.atleast_2d(idx.T).T if k == 1 else idx
    best = np.full(len(pa), np.inf)
    for j in range(idx.shape[1]):
        s = idx[:, j]
        best = np.minimum(best, _point_segment_dist(pa, a[s], b[s]))
    return float(best.max())


def hausdorff_distance(a, b, spacing=None):
    """Symmetric Hausdorff distance between two contours.

    Each side is resampled with ``spacing`` and matched against the exact
    segments of the other (nearest candidates via a KD-tree on midpoints).
    """
    if not a.loops or not b.loops:
        raise ValueError("both contours must be non-empty")
    if spacing is None:
        spacing = max(a.length(), b.length()) / 20000.0
    pa = np.vstack([a.vertices()] + resample_contour(a, spacing))
    pb = np.vstack([b.vertices()] + resample_contour(b, spacing))
    return max(_directed(pa, b.segments()), _directed(pb, a.segments()))


def _ball_samples(d, n):
    """Deterministic low-discrepancy points in the closed unit ball (center included)."""
    pts = [np.zeros(d)]
    h = qmc.Halton(d, scramble=False)
    while len(pts) < n:
        c = 2.0 * h.random(n) - 1.0
        pts.extend(c[np.einsum("ij,ij->i", c, c) <= 1.0])
    return np.array(pts[:n])


def reach_lower_bound(model, y, r, sample_count=512, denom_floor=DENOM_FLOOR):
    """``min(r/2, inf_{B(y,r)} |grad f| / sup_{B(y,2r)} ||Hess f||)`` over samples."""
    y = np.asarray(y, dtype=float)
    unit = _ball_samples(model.dim, sample_count)
    _, G, _ = model.eval_batch(y + r * unit, want_hess=False)
    inf_g = float(np.linalg.norm(G, axis=1).min())
    if inf_g < denom_floor:
        raise NearCritical(f"sampled gradient norm {inf_g:.3g} below the floor")
    _, _, Hs = model.eval_batch(y + 2 * r * unit)
    sup_h = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (Hs + np.swapaxes(Hs, 1, 2))))))
    return min(r / 2, inf_g / sup_h)


# ---------------------------------------------------------------------------
# iterated projection
# ---------------------------------------------------------------------------

@dataclass
class Walk:
    points: np.ndarray
    levels: np.ndarray
    eta_effective: np.ndarray
    stop_reason: str
    results: list = field(default_factory=list, repr=False)

    @property
    def end(self):
        return self.points[-1]


def iterate_projection_walk(model, x0, eta, level_ceiling=None, grad_floor=DENOM_FLOOR,
                            max_steps=10_000, level_tol=LEVEL_TOL):
    """Repeated projection ``x_{j+1} = P(x_j)`` onto the level ``f(x_j) + eta``.

    Steps are ``eta`` in density units; the last one is shortened to land on
    ``level_ceiling``. Stops with ``"LevelCeiling"``, ``"NearCritical"`` (the
    gradient is below ``grad_floor``, or a projection fails because the
    target level is not reachable near the current point), ``"NoConvergence"``
    or ``"MaxSteps"``.
    """
    x = np.array(x0, dtype=float).reshape(model.dim)
    f, g, H = model.eval(x)
    pts, levels, etas, results = [x.copy()], [f], [0.0], []
    reason = "MaxSteps"
    for _ in range(max_steps):
        if level_ceiling is not None and level_ceiling - f <= level_tol:
            reason = "LevelCeiling"
            break
        if np.linalg.norm(g) < grad_floor:
            reason = "NearCritical"
            break
        step = eta if level_ceiling is None else min(eta, level_ceiling - f)
        try:
            res = metric_project(model, x, step, t=f)
        except NearCritical:
            reason = "NearCritical"
            break
        except NoConvergence:
            # a level that far up may not exist near x: the quadratic model
            # caps the local gain at |g|^2 / (2 ||H||)
            gain = (g @ g) / (2 * np.max(np.abs(np.linalg.eigvalsh(H))))
            reason = "NearCritical" if step > 0.5 * gain else "NoConvergence"
            break
        x = res.point
        f, g, H = model.eval(x)
        pts.append(x.copy())
        levels.append(f)
        etas.append(f - levels[-2])
        results.append(res)
    return Walk(points=np.array(pts), levels=np.array(levels),
                eta_effective=np.array(etas), stop_reason=reason, results=results)
