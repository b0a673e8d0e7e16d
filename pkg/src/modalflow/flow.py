"""Gradient flows of a density: trajectories, basins of attraction, level transport."""
import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from ._kernels import DP_A, DP_B, DP_E
from .density import find_critical_points
from .errors import CriticalCorridor, DenominatorFloor, NonFiniteState

NOISE = -1


class FlowKind(enum.Enum):
    PLAIN_ASCENT = "plain"             # F = grad f
    NORMALIZED_ASCENT = "normalized"   # F = grad f / |grad f|^2
    NORMALIZED_DESCENT = "descent"     # F = -grad f / |grad f|^2
    FUKUNAGA_ASCENT = "fukunaga"       # F = grad f / f

    @property
    def ascending(self):
        return self is not FlowKind.NORMALIZED_DESCENT


class StopReason(enum.Enum):
    CONVERGED_TO_CRITICAL = "ConvergedToCritical"
    REACHED_TARGET_LEVEL = "ReachedTargetLevel"
    MAX_STEPS = "MaxSteps"
    DENOMINATOR_FLOOR = "DenominatorFloor"
    LEFT_DOMAIN = "LeftDomain"


@dataclass(frozen=True)
class FlowParams:
    atol: float = 1e-9
    rtol: float = 1e-9
    h_min: float = 1e-12
    max_steps: int = 100_000
    g_tol: float = 1e-8
    # convergence also needs ||grad f|| < log_g_tol * f (guards the far tails)
    log_g_tol: float = 1e-3
    level_tol: float = 1e-10
    denom_floor: float = 1e-8
    target_level: float = None
    # optional (d, 2) box; leaving it stops the integration
    domain: np.ndarray = None

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass
class Trajectory:
    tau: np.ndarray
    x: np.ndarray
    f: np.ndarray
    grad_norm: np.ndarray
    stop_reason: StopReason
    kind: FlowKind
    params: FlowParams = field(repr=False, default=None)

    @property
    def end(self):
        return self.x[-1]

    def __len__(self):
        return self.tau.size


def _velocity(kind, f, g, floor):
    """Vector field value, or None where the denominator is below ``floor``."""
    if kind is FlowKind.PLAIN_ASCENT:
        return g
    if kind is FlowKind.FUKUNAGA_ASCENT:
        return None if f < floor else g / f
    g2 = g @ g
    if np.sqrt(g2) < floor:
        return None
    v = g / g2
    return v if kind is FlowKind.NORMALIZED_ASCENT else -v


def _collect(samples, reason, kind, params):
    tau, xs, fs, gs = zip(*samples)
    return Trajectory(tau=np.array(tau), x=np.array(xs), f=np.array(fs),
                      grad_norm=np.array(gs), stop_reason=reason, kind=kind,
                      params=params)


def _dp_step(model, kind, y, k1, h, floor):
    """One Dormand-Prince attempt. Returns (ynew, err, k7, f7, g7) or None on floor."""
    d = y.size
    k = np.empty((7, d))
    k[0] = k1
    f7 = g7 = None
    for s in range(1, 7):
        ys = y + h * (DP_A[s, :s] @ k[:s])
        fs, gs = model.value_grad(ys)
        v = _velocity(kind, fs, gs, floor)
        if v is None:
            return None
        k[s] = v
        if s == 6:
            f7, g7 = fs, gs
    ynew = y + h * (DP_B @ k)
    err = h * (DP_E @ k)
    return ynew, err, k[6], f7, g7


def _converged(gn, f, params):
    return gn < params.g_tol and gn < params.log_g_tol * abs(f)


def integrate_flow(model, x0, kind=FlowKind.PLAIN_ASCENT, params=None, t_end=None):
    """Adaptive Dormand-Prince integration of ``dx/dtau = F(x)``.

    Stops on the first of: ``||grad f|| < min(g_tol, log_g_tol * f)``; the target level (for the
    normalized kinds the level is reached at ``tau = |target - f(x0)|``, for
    the others it is located by bisection within the step that crosses it);
    ``tau == t_end``; the step budget; the denominator floor; leaving
    ``params.domain``. Raises NonFiniteState if the state stops being finite.
    """
    params = params or FlowParams()
    x = np.array(x0, dtype=float).reshape(model.dim)
    f, g = model.value_grad(x)
    if kind is FlowKind.FUKUNAGA_ASCENT and not f > 0:
        raise ValueError("the Fukunaga flow needs f(x0) > 0")
    samples = [(0.0, x.copy(), f, float(np.linalg.norm(g)))]
    target = params.target_level
    normalized = kind in (FlowKind.NORMALIZED_ASCENT, FlowKind.NORMALIZED_DESCENT)
    sign = 1.0 if kind.ascending else -1.0

    T = t_end
    if target is not None and normalized:
        gap = sign * (target - f)
        if gap < 0:
            raise ValueError("target level lies on the wrong side of f(x0) for this flow")
        T = gap if T is None else min(T, gap)
    if T is not None and T <= 0:
        reason = (StopReason.REACHED_TARGET_LEVEL if target is not None
                  else StopReason.MAX_STEPS)
        return _collect(samples, reason, kind, params)
    if target is not None and not normalized and sign * (f - target) >= -params.level_tol:
        return _collect(samples, StopReason.REACHED_TARGET_LEVEL, kind, params)

    if _converged(np.linalg.norm(g), f, params):
        return _collect(samples, StopReason.CONVERGED_TO_CRITICAL, kind, params)
    k1 = _velocity(kind, f, g, params.denom_floor)
    if k1 is None:
        return _collect(samples, StopReason.DENOMINATOR_FLOOR, kind, params)

    atol, rtol = params.atol, params.rtol
    sc = atol + rtol * np.abs(x)
    d0 = np.sqrt(np.mean((x / sc) ** 2))
    d1 = np.sqrt(np.mean((k1 / sc) ** 2))
    h = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    if T is not None:
        h = min(h, T)
    tau = 0.0
    steps = 0
    while True:
        if steps >= params.max_steps:
            return _collect(samples, StopReason.MAX_STEPS, kind, params)
        steps += 1
        last = T is not None and tau + h >= T * (1 - 1e-15)
        if last:
            h = T - tau
        out = _dp_step(model, kind, x, k1, h, params.denom_floor)
        if out is None:
            if h <= params.h_min:
                return _collect(samples, StopReason.DENOMINATOR_FLOOR, kind, params)
            h = max(0.25 * h, params.h_min)
            continue
        ynew, err, k7, f7, g7 = out
        if not np.all(np.isfinite(ynew)):
            raise NonFiniteState("integrator state is not finite",
                                 _collect(samples, StopReason.MAX_STEPS, kind, params))
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(ynew))
        en = float(np.sqrt(np.mean((err / scale) ** 2)))
        if en > 1.0:
            if h <= params.h_min:
                return _collect(samples, StopReason.MAX_STEPS, kind, params)
            h = max(h * max(0.2, 0.9 * en ** -0.2), params.h_min)
            continue

        if target is not None and not normalized and sign * (f7 - target) >= 0:
            x, tau, f, g = _bisect_level(model, kind, x, k1, tau, h, target, params)
            samples.append((tau, x.copy(), f, float(np.linalg.norm(g))))
            return _collect(samples, StopReason.REACHED_TARGET_LEVEL, kind, params)

        tau = T if last else tau + h
        x, f, g, k1 = ynew, f7, g7, k7
        gn = float(np.linalg.norm(g))
        samples.append((tau, x.copy(), f, gn))
        if params.domain is not None:
            dom = np.asarray(params.domain, dtype=float)
            if np.any(x < dom[:, 0]) or np.any(x > dom[:, 1]):
                return _collect(samples, StopReason.LEFT_DOMAIN, kind, params)
        if last:
            reason = (StopReason.REACHED_TARGET_LEVEL if target is not None
                      else StopReason.MAX_STEPS)
            return _collect(samples, reason, kind, params)
        if _converged(gn, f, params):
            return _collect(samples, StopReason.CONVERGED_TO_CRITICAL, kind, params)
        fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
        h = max(h * fac, params.h_min)
        if T is not None:
            h = min(h, T - tau)


def _bisect_level(model, kind, x, k1, tau, h, target, params):
    """Shrink the crossing step until f lands on ``target`` within level_tol."""
    sign = 1.0 if kind.ascending else -1.0
    lo, hi = 0.0, h
    best = None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        out = _dp_step(model, kind, x, k1, mid, params.denom_floor)
        if out is None:
            hi = mid
            continue
        y, _, _, fy, gy = out
        best = (y, tau + mid, fy, gy)
        r = sign * (fy - target)
        if abs(r) < params.level_tol:
            break
        if r > 0:
            hi = mid
        else:
            lo = mid
    return best


# ---------------------------------------------------------------------------
# basins
# ---------------------------------------------------------------------------

@dataclass
class BasinAssignment:
    labels: np.ndarray
    modes: list
    unconverged_count: int
    saddle_count: int = 0
    endpoints: np.ndarray = field(default=None, repr=False)

    @property
    def coverage(self):
        return float(np.mean(self.labels != NOISE))


def _default_seeds(model, points, n_per_axis=None):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    n = n_per_axis or {1: 200, 2: 30}.get(model.dim, 8)
    axes = [np.linspace(a - 0.05 * s, b + 0.05 * s, n) for a, b, s in zip(lo, hi, span)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def assign_basins(model, points, params=None, critical_points=None,
                  mode_match_radius=1e-4):
    """Label each point by the mode its plain gradient ascent line converges to.

    Endpoints within ``mode_match_radius`` of a mode get that mode's index in
    ``modes``; endpoints at a saddle or minimum, and points that did not
    converge, are NOISE (the latter also counted in ``unconverged_count``).
    """
    params = params or FlowParams()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("assign_basins needs at least one point")
    if critical_points is None:
        critical_points = find_critical_points(model, _default_seeds(model, pts))
    crits = list(critical_points)
    modes = [c for c in crits if c.is_mode]
    ends, status, _ = _kernels.batch_plain_ascent(
        pts, model._means, model._precs, model._coefs, atol=params.atol,
        rtol=params.rtol, h_min=params.h_min, max_steps=params.max_steps,
        g_tol=params.g_tol, log_g_tol=params.log_g_tol)
    labels = np.full(len(pts), NOISE, dtype=np.int64)
    unconverged = int(np.sum(status != _kernels.STATUS_CONVERGED))
    saddles = 0
    if crits:
        locs = np.array([c.location for c in crits])
        mode_pos = {id(c): k for k, c in enumerate(modes)}
        for p in np.flatnonzero(status == _kernels.STATUS_CONVERGED):
            dist = np.linalg.norm(locs - ends[p], axis=1)
            j = int(np.argmin(dist))
            if dist[j] > mode_match_radius:
                unconverged += 1
            elif crits[j].is_mode:
                labels[p] = mode_pos[id(crits[j])]
            else:
                saddles += 1
    else:
        unconverged = len(pts)
    return BasinAssignment(labels=labels, modes=modes, unconverged_count=unconverged,
                           saddle_count=saddles, endpoints=ends)


# ---------------------------------------------------------------------------
# level-parameterized transport
# ---------------------------------------------------------------------------

def _check_corridor(t, s, critical_points):
    if critical_points is None:
        return
    lo, hi = min(t, s), max(t, s)
    for c in critical_points:
        if lo <= c.value <= hi:
            raise CriticalCorridor(
                f"critical value {c.value:.6g} ({c.kind}) lies in [{lo:.6g}, {hi:.6g}]")
    top = max((c.value for c in critical_points if c.is_mode), default=np.inf)
    if s >= top:
        raise CriticalCorridor(f"level {s:.6g} is not below max f = {top:.6g}")


def _transport(model, x, s, kind, critical_points, params):
    params = params or FlowParams()
    x = np.array(x, dtype=float).reshape(model.dim)
    t = model.value(x)
    if s == t:
        return x
    _check_corridor(t, s, critical_points)
    traj = integrate_flow(model, x, kind, params.with_(target_level=float(s)))
    if traj.stop_reason is StopReason.DENOMINATOR_FLOOR:
        raise DenominatorFloor(f"gradient norm fell below {params.denom_floor:g} en route")
    if traj.stop_reason is not StopReason.REACHED_TARGET_LEVEL:
        raise DenominatorFloor(f"flow stopped early: {traj.stop_reason.value}")
    return traj.end


def flow_map_psi(model, x, s, critical_points=None, params=None):
    """Move ``x`` from its level ``f(x)`` up to level ``s`` along the normalized flow.

    With ``critical_points`` given, a critical value in ``[f(x), s]`` raises
    CriticalCorridor.
    """
    return _transport(model, x, s, FlowKind.NORMALIZED_ASCENT, critical_points, params)


def flow_map_psi_down(model, z, t, critical_points=None, params=None):
    """Inverse of :func:`flow_map_psi`: descend from level ``f(z)`` to ``t``."""
    return _transport(model, z, t, FlowKind.NORMALIZED_DESCENT, critical_points, params)


def flow_map_extended(model, y, s, params=None):
    """``y -> zeta_y(s - f(y))`` for points near, but not necessarily on, a level set."""
    t = model.value(y)
    kind = FlowKind.NORMALIZED_ASCENT if s >= t else FlowKind.NORMALIZED_DESCENT
    return _transport(model, y, s, kind, None, params)
