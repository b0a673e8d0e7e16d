"""Analytic Gaussian densities with exact derivatives and critical-point search."""
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, FixtureError

_SUM_TOL = 1e-12
_SYM_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class _MixtureBase:
    """Shared evaluation machinery; subclasses fill ``_means/_precs/_coefs``."""

    dim: int

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"point has dimension {x.shape[-1]}, model has {self.dim}")
        return x

    def eval(self, x):
        """Return ``(value, gradient, hessian)`` at a single point."""
        x = self._check(x).reshape(self.dim)
        f, g, H = _kernels.mixture_eval_point(x, self._means, self._precs, self._coefs)
        return float(f), g, H

    def value_grad(self, x):
        x = self._check(x).reshape(self.dim)
        f, g, _ = _kernels.mixture_eval_point(x, self._means, self._precs,
                                              self._coefs, want_hess=False)
        return float(f), g

    def value(self, X):
        """Density at one point or at every row of an ``(n, d)`` array."""
        X = self._check(X)
        single = X.ndim == 1
        F, _, _ = _kernels.mixture_eval(np.atleast_2d(X), self._means, self._precs,
                                        self._coefs, want_hess=False)
        return float(F[0]) if single else F

    def eval_batch(self, X, want_hess=True):
        X = np.atleast_2d(self._check(X))
        return _kernels.mixture_eval(X, self._means, self._precs, self._coefs,
                                     want_hess=want_hess)

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True, eq=False)
class GaussianMixture(_MixtureBase):
    """Finite mixture of multivariate normals.

    Parameters
    ----------
    weights : array_like, shape (K,)
        Positive, summing to one.
    means : array_like, shape (K, d)
    covariances : array_like, shape (K, d, d)
        Symmetric positive definite.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        cov = np.asarray(self.covariances, dtype=float)
        if cov.ndim == 1:
            cov = cov[:, None, None]
        K, d = mu.shape
        if w.shape != (K,) or cov.shape != (K, d, d) or K == 0:
            raise FixtureError("weights, means and covariances have inconsistent shapes")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > _SUM_TOL:
            raise FixtureError("weights must be positive and sum to 1")
        if np.any(np.abs(cov - np.swapaxes(cov, 1, 2)) > _SYM_TOL):
            raise FixtureError("covariance matrices must be symmetric")
        eig = np.linalg.eigvalsh(cov)
        if np.any(eig[:, 0] <= 0):
            raise FixtureError("covariance matrices must be positive definite")
        precs = np.linalg.inv(cov)
        precs = 0.5 * (precs + np.swapaxes(precs, 1, 2))
        coefs = w / np.sqrt((2 * np.pi) ** d * np.prod(eig, axis=1))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "covariances", _frozen(cov))
        object.__setattr__(self, "dim", int(d))
        object.__setattr__(self, "_means", np.ascontiguousarray(mu))
        object.__setattr__(self, "_precs", np.ascontiguousarray(precs))
        object.__setattr__(self, "_coefs", np.ascontiguousarray(coefs))

    def to_dict(self):
        return {
            "type": "mixture",
            "dim": self.dim,
            "components": [
                {"weight": float(w), "mean": m.tolist(), "covariance": c.tolist()}
                for w, m, c in zip(self.weights, self.means, self.covariances)
            ],
        }


@dataclass(frozen=True, eq=False)
class KdeModel(_MixtureBase):
    """Gaussian kernel density estimate with isotropic bandwidth ``h``."""

    centers: np.ndarray
    bandwidth: float
    dim: int = field(init=False)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        if c.ndim != 2 or c.shape[0] == 0:
            raise FixtureError("KDE needs at least one center")
        h = float(self.bandwidth)
        if not h > 0:
            raise FixtureError("bandwidth must be positive")
        n, d = c.shape
        precs = np.broadcast_to(np.eye(d) / h**2, (n, d, d))
        coefs = np.full(n, 1.0 / (n * (2 * np.pi * h**2) ** (d / 2)))
        object.__setattr__(self, "centers", _frozen(c))
        object.__setattr__(self, "bandwidth", h)
        object.__setattr__(self, "dim", int(d))
        object.__setattr__(self, "_means", np.ascontiguousarray(c))
        object.__setattr__(self, "_precs", np.ascontiguousarray(precs))
        object.__setattr__(self, "_coefs", coefs)

    def to_dict(self):
        return {"type": "kde", "dim": self.dim, "centers": self.centers.tolist(),
                "bandwidth": self.bandwidth}


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def _rotation(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def bimodal1d():
    """0.5 N(0, 1) + 0.5 N(3, 0.8^2)."""
    return GaussianMixture([0.5, 0.5], [[0.0], [3.0]], [[[1.0]], [[0.64]]])


def bimodal2d():
    """0.5 N(0, I) + 0.5 N((3, 1), R diag(1.2, 0.5) R^T) with R a 30 degree rotation."""
    R = _rotation(30.0)
    cov = R @ np.diag([1.2, 0.5]) @ R.T
    cov = 0.5 * (cov + cov.T)
    return GaussianMixture([0.5, 0.5], [[0.0, 0.0], [3.0, 1.0]], [np.eye(2), cov])


def normal1d():
    return GaussianMixture([1.0], [[0.0]], [[[1.0]]])


def normal2d():
    return GaussianMixture([1.0], [[0.0, 0.0]], [np.eye(2)])


BUILTIN_FIXTURES = {
    "bimodal1d": bimodal1d,
    "bimodal2d": bimodal2d,
    "normal1d": normal1d,
    "normal2d": normal2d,
}

# Boxes holding all but a negligible fraction of the mass, used as defaults
# for grids and seed sets.
DEFAULT_BOXES = {
    "bimodal1d": [(-4.0, 7.0)],
    "bimodal2d": [(-4.0, 7.0), (-4.0, 5.0)],
    "normal1d": [(-4.0, 4.0)],
    "normal2d": [(-4.0, 4.0), (-4.0, 4.0)],
}


def model_from_dict(data):
    """Build a model from the fixture JSON structure.

    ``{"type": "mixture", "dim": d, "components": [{"weight", "mean", "covariance"}]}``
    or ``{"type": "kde", "dim": d, "centers": [[...]], "bandwidth": h}``.
    """
    if not isinstance(data, dict):
        raise FixtureError("fixture must be a JSON object")
    kind = data.get("type")
    try:
        dim = int(data["dim"])
    except (KeyError, TypeError, ValueError):
        raise FixtureError("fixture needs an integer 'dim'") from None
    try:
        if kind == "mixture":
            comps = data["components"]
            w = [c["weight"] for c in comps]
            mu = [c["mean"] for c in comps]
            cov = [c["covariance"] for c in comps]
            model = GaussianMixture(w, np.reshape(mu, (len(comps), dim)),
                                    np.reshape(cov, (len(comps), dim, dim)))
        elif kind == "kde":
            model = KdeModel(np.reshape(data["centers"], (-1, dim)), data["bandwidth"])
        else:
            raise FixtureError(f"unknown fixture type {kind!r}")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FixtureError):
            raise
        raise FixtureError(f"malformed fixture: {exc}") from None
    if model.dim != dim:
        raise FixtureError("declared 'dim' does not match the data")
    return model


def load_fixture(source):
    """Load a fixture by builtin name or from a JSON file path."""
    if isinstance(source, str) and source in BUILTIN_FIXTURES:
        return BUILTIN_FIXTURES[source]()
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FixtureError(f"cannot read fixture {source}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"fixture {source} is not valid JSON: {exc}") from None
    return model_from_dict(data)


def default_box(model, pad=4.0):
    """Box spanning every component mean +- ``pad`` marginal standard deviations."""
    means = np.asarray(model._means)
    sd = np.sqrt(np.max([np.diag(np.linalg.inv(p)) for p in model._precs], axis=0))
    return np.column_stack([means.min(axis=0) - pad * sd, means.max(axis=0) + pad * sd])


def fixture_box(source, model):
    """Sampling box for a fixture: builtin default, a ``"box"`` entry of the file, or :func:`default_box`."""
    if isinstance(source, str) and source in DEFAULT_BOXES:
        return np.array(DEFAULT_BOXES[source], dtype=float)
    try:
        data = json.loads(Path(source).read_text())
    except (OSError, ValueError):
        data = {}
    if isinstance(data, dict) and "box" in data:
        box = np.asarray(data["box"], dtype=float)
        if box.shape != (model.dim, 2) or np.any(box[:, 0] >= box[:, 1]):
            raise FixtureError("fixture 'box' must be d pairs (lo, hi) with lo < hi")
        return box
    return default_box(model)


def save_fixture(model, path, box=None):
    data = model.to_dict()
    if box is not None:
        data["box"] = np.asarray(box, dtype=float).tolist()
    Path(path).write_text(json.dumps(data, indent=2))


# ---------------------------------------------------------------------------
# critical points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    value: float
    grad_norm: float
    morse_index: int
    min_abs_eigenvalue: float
    degenerate: bool = False

    @property
    def dim(self):
        return self.location.shape[0]

    @property
    def kind(self):
        if self.morse_index == self.dim:
            return "mode"
        if self.morse_index == 0:
            return "minimum"
        return "saddle"

    @property
    def is_mode(self):
        return self.morse_index == self.dim

    def to_dict(self):
        return {"location": self.location.tolist(), "value": self.value,
                "grad_norm": self.grad_norm, "morse_index": self.morse_index,
                "min_abs_eigenvalue": self.min_abs_eigenvalue, "kind": self.kind,
                "degenerate": self.degenerate}


@dataclass
class CriticalSearch:
    """Output of :func:`find_critical_points`."""

    points: list
    dropped: int
    seeds: int

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def modes(self):
        return [p for p in self.points if p.is_mode]

    @property
    def values(self):
        return np.array([p.value for p in self.points])


def newton_critical(model, x0, g_tol=1e-10, max_iter=50, box=None):
    """Damped Newton on grad f = 0 from ``x0``.

    Returns the converged location or None. Steps are halved until the
    gradient norm decreases; a seed is abandoned when no halving helps or it
    leaves ``box`` (a ``(d, 2)`` array).
    """
    x = np.array(x0, dtype=float)
    f, g, H = model.eval(x)
    gn = np.linalg.norm(g)
    for _ in range(max_iter):
        if gn < g_tol:
            return x
        try:
            p = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            p = -np.linalg.lstsq(H, g, rcond=None)[0]
        alpha = 1.0
        while alpha > 2.0**-30:
            xn = x + alpha * p
            fn, gn_vec, Hn = model.eval(xn)
            gnn = np.linalg.norm(gn_vec)
            if gnn < gn:
                break
            alpha *= 0.5
        else:
            return None
        x, g, H, gn = xn, gn_vec, Hn, gnn
        if box is not None and (np.any(x < box[:, 0]) or np.any(x > box[:, 1])):
            return None
    return x if gn < g_tol else None


def classify(model, x, morse_tol=1e-6):
    f, g, H = model.eval(x)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))
    min_abs = float(np.min(np.abs(eig)))
    return CriticalPoint(
        location=np.asarray(x, dtype=float), value=float(f),
        grad_norm=float(np.linalg.norm(g)), morse_index=int(np.sum(eig < 0)),
        min_abs_eigenvalue=min_abs, degenerate=bool(min_abs < morse_tol))


def _seed_points(seed_grid):
    if hasattr(seed_grid, "centers"):
        return seed_grid.centers(), np.array(seed_grid.box, dtype=float)
    pts = np.atleast_2d(np.asarray(seed_grid, dtype=float))
    return pts, np.column_stack([pts.min(axis=0), pts.max(axis=0)])


def find_critical_points(model, seed_grid, g_tol=1e-10, morse_tol=1e-6,
                         dedup_radius=1e-6, support_floor=1e-6, max_iter=50):
    """Critical points of ``model`` reached by damped Newton from grid seeds.

    ``seed_grid`` is a :class:`~modalflow.cluster_tree.Grid` (its cell centers
    are the seeds) or an ``(n, d)`` array of seeds. Seeds that fail to
    converge, leave the seed box (padded by 10%), or end where the density is
    below ``support_floor`` times the largest density found are dropped and
    counted. Points whose smallest absolute Hessian eigenvalue is below
    ``morse_tol`` are kept with ``degenerate=True`` and a warning is issued.

    Results are sorted by decreasing density value.
    """
    seeds, box = _seed_points(seed_grid)
    if seeds.shape[1] != model.dim:
        raise DimensionMismatch("seed grid dimension differs from the model")
    pad = 0.1 * (box[:, 1] - box[:, 0])
    padded = np.column_stack([box[:, 0] - pad, box[:, 1] + pad])
    found = []
    dropped = 0
    for s in seeds:
        x = newton_critical(model, s, g_tol=g_tol, max_iter=max_iter, box=padded)
        if x is None:
            dropped += 1
            continue
        for i, (y, _) in enumerate(found):
            if np.linalg.norm(x - y) < dedup_radius:
                found[i] = (y, found[i][1] + 1)
                break
        else:
            found.append((x, 1))
    cps = [classify(model, x, morse_tol) for x, _ in found]
    if cps:
        top = max(c.value for c in cps)
        keep = [c for c in cps if c.value >= support_floor * top]
        dropped += sum(n for (_, n), c in zip(found, cps) if c.value < support_floor * top)
        cps = keep
    cps.sort(key=lambda c: (-c.value, tuple(c.location)))
    if any(c.degenerate for c in cps):
        warnings.warn("degenerate critical point found: Morse assumption violated",
                      RuntimeWarning, stacklevel=2)
    return CriticalSearch(points=cps, dropped=dropped, seeds=len(seeds))


def critical_values(crits):
    return np.array(sorted(c.value for c in crits))


def max_value(crits):
    modes = [c.value for c in crits if c.is_mode]
    return max(modes) if modes else np.nan
