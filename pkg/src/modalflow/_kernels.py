"""Hot numeric kernels: Gaussian-mixture evaluation, grid labeling, batch ascent.

Every kernel exists twice: a scalar-loop version compiled with numba and a
vectorized numpy version. The public dispatchers at the bottom pick one
according to :data:`modalflow._accel.USE_NUMBA`. Both paths implement the
same arithmetic; they agree to rounding, not bit for bit.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# Dormand-Prince 5(4) tableau.
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
])
DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
DP_E = np.array([
    71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40,
])

STATUS_CONVERGED = 0
STATUS_MAX_STEPS = 1
STATUS_NONFINITE = 2


# ---------------------------------------------------------------------------
# mixture evaluation
# ---------------------------------------------------------------------------

def _point_eval_py(x, means, precs, coefs, g, H, want_hess):
    K, d = means.shape
    f = 0.0
    for i in range(d):
        g[i] = 0.0
        if want_hess:
            for j in range(d):
                H[i, j] = 0.0
    u = np.empty(d)
    for k in range(K):
        q = 0.0
        for i in range(d):
            s = 0.0
            for j in range(d):
                s += precs[k, i, j] * (x[j] - means[k, j])
            u[i] = s
            q += s * (x[i] - means[k, i])
        e = coefs[k] * np.exp(-0.5 * q)
        f += e
        for i in range(d):
            g[i] -= e * u[i]
            if want_hess:
                for j in range(d):
                    H[i, j] += e * (u[i] * u[j] - precs[k, i, j])
    return f


_point_eval_nb = njit(_point_eval_py)


def _batch_eval_py(X, means, precs, coefs, want_hess):
    n, d = X.shape
    F = np.empty(n)
    G = np.empty((n, d))
    if want_hess:
        Hs = np.empty((n, d, d))
    else:
        Hs = np.empty((0, d, d))
    Htmp = np.empty((d, d))
    for p in range(n):
        if want_hess:
            F[p] = _point_eval_nb(X[p], means, precs, coefs, G[p], Hs[p], True)
        else:
            F[p] = _point_eval_nb(X[p], means, precs, coefs, G[p], Htmp, False)
    return F, G, Hs


_batch_eval_nb = njit(_batch_eval_py) if USE_NUMBA else None

_CHUNK = 1 << 15


def _batch_eval_np(X, means, precs, coefs, want_hess):
    n, d = X.shape
    K = means.shape[0]
    F = np.empty(n)
    G = np.empty((n, d))
    Hs = np.empty((n, d, d)) if want_hess else np.empty((0, d, d))
    step = max(1, _CHUNK // max(K, 1))
    for a in range(0, n, step):
        b = min(n, a + step)
        diff = X[a:b, None, :] - means[None, :, :]
        u = np.einsum("kij,nkj->nki", precs, diff)
        e = coefs[None, :] * np.exp(-0.5 * np.einsum("nki,nki->nk", u, diff))
        F[a:b] = e.sum(axis=1)
        G[a:b] = -np.einsum("nk,nki->ni", e, u)
        if want_hess:
            Hs[a:b] = (np.einsum("nk,nki,nkj->nij", e, u, u)
                       - np.einsum("nk,kij->nij", e, precs))
    return F, G, Hs


# ---------------------------------------------------------------------------
# connected-component labeling on a regular grid (face adjacency)
# ---------------------------------------------------------------------------

def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


def _label_py(mask, shape, strides):
    n = mask.shape[0]
    parent = np.arange(n)
    ndim = shape.shape[0]
    for i in range(n):
        if not mask[i]:
            continue
        for a in range(ndim):
            if (i // strides[a]) % shape[a] == 0:
                continue
            j = i - strides[a]
            if not mask[j]:
                continue
            ri = _find(parent, i)
            rj = _find(parent, j)
            if ri != rj:
                # smaller flat index stays the root
                if ri < rj:
                    parent[rj] = ri
                else:
                    parent[ri] = rj
    labels = np.full(n, -1, dtype=np.int64)
    count = 0
    for i in range(n):
        if not mask[i]:
            continue
        r = _find(parent, i)
        if r == i:
            labels[i] = count
            count += 1
        else:
            labels[i] = labels[r]
    return labels, count


if USE_NUMBA:
    _find = njit(_find)
    _label_nb = njit(_label_py)
else:
    _label_nb = None


def _label_np(mask_nd):
    shape = mask_nd.shape
    n = mask_nd.size
    idx = np.arange(n).reshape(shape)
    big = n
    lab = np.where(mask_nd, idx, big)
    while True:
        old = lab
        lab = lab.copy()
        for a in range(mask_nd.ndim):
            lo = [slice(None)] * mask_nd.ndim
            hi = [slice(None)] * mask_nd.ndim
            lo[a] = slice(0, -1)
            hi[a] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)
            both = mask_nd[lo] & mask_nd[hi]
            m = np.minimum(lab[lo], lab[hi])
            lab[lo] = np.where(both, np.minimum(lab[lo], m), lab[lo])
            lab[hi] = np.where(both, np.minimum(lab[hi], m), lab[hi])
        flat = lab.ravel()
        inside = flat < big
        # pointer jumping: each label is a cell index of the same component
        flat[inside] = flat[flat[inside]]
        lab = flat.reshape(shape)
        if np.array_equal(lab, old):
            break
    flat = lab.ravel()
    roots, inverse = np.unique(flat[flat < big], return_inverse=True)
    out = np.full(n, -1, dtype=np.int64)
    out[flat < big] = inverse
    return out, roots.size


# ---------------------------------------------------------------------------
# batch plain gradient ascent (Dormand-Prince, per-point step control)
# ---------------------------------------------------------------------------

def _err_norm(y, ynew, err, atol, rtol):
    d = y.shape[0]
    s = 0.0
    for i in range(d):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        s += (err[i] / sc) ** 2
    return np.sqrt(s / d)


def _single_ascent_py(y0, means, precs, coefs, atol, rtol, h_min, max_steps,
                      g_tol, log_g_tol, A, B, E, out):
    d = y0.shape[0]
    H = np.empty((d, d))
    k = np.zeros((7, d))
    y = y0.copy()
    ytmp = np.empty(d)
    fy = _point_eval_nb(y, means, precs, coefs, k[0], H, False)
    gn = np.sqrt(np.sum(k[0] ** 2))
    if gn < g_tol and gn < log_g_tol * fy:
        out[:] = y
        return STATUS_CONVERGED, 0
    sc0 = 0.0
    sc1 = 0.0
    for i in range(d):
        sc = atol + rtol * abs(y[i])
        sc0 += (y[i] / sc) ** 2
        sc1 += (k[0, i] / sc) ** 2
    sc0 = np.sqrt(sc0 / d)
    sc1 = np.sqrt(sc1 / d)
    if sc0 < 1e-5 or sc1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * sc0 / sc1
    ynew = np.empty(d)
    err = np.empty(d)
    fs = fy
    steps = 0
    while steps < max_steps:
        steps += 1
        for s in range(1, 7):
            for i in range(d):
                acc = y[i]
                for j in range(s):
                    acc += h * A[s, j] * k[j, i]
                ytmp[i] = acc
            fs = _point_eval_nb(ytmp, means, precs, coefs, k[s], H, False)
        for i in range(d):
            acc = y[i]
            e = 0.0
            for j in range(7):
                acc += h * B[j] * k[j, i]
                e += h * E[j] * k[j, i]
            ynew[i] = acc
            err[i] = e
        finite = True
        for i in range(d):
            if not np.isfinite(ynew[i]):
                finite = False
        if not finite:
            out[:] = y
            return STATUS_NONFINITE, steps
        en = _err_norm(y, ynew, err, atol, rtol)
        if en <= 1.0:
            y[:] = ynew
            k[0] = k[6]
            gn = np.sqrt(np.sum(k[0] ** 2))
            if gn < g_tol and gn < log_g_tol * fs:
                out[:] = y
                return STATUS_CONVERGED, steps
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
        else:
            fac = max(0.2, 0.9 * en ** -0.2)
        h = max(h * fac, h_min)
    out[:] = y
    return STATUS_MAX_STEPS, steps


def _batch_ascent_py(X0, means, precs, coefs, atol, rtol, h_min, max_steps,
                     g_tol, log_g_tol, A, B, E):
    n, d = X0.shape
    Y = np.empty((n, d))
    status = np.empty(n, dtype=np.int64)
    nsteps = np.empty(n, dtype=np.int64)
    for p in range(n):
        st, ns = _single_ascent_nb(X0[p], means, precs, coefs, atol, rtol,
                                   h_min, max_steps, g_tol, log_g_tol, A, B, E, Y[p])
        status[p] = st
        nsteps[p] = ns
    return Y, status, nsteps


if USE_NUMBA:
    _err_norm = njit(_err_norm)
    _single_ascent_nb = njit(_single_ascent_py)
    _batch_ascent_nb = njit(_batch_ascent_py)
else:
    _batch_ascent_nb = None


def _batch_ascent_np(X0, means, precs, coefs, atol, rtol, h_min, max_steps,
                     g_tol, log_g_tol, A, B, E):
    n, d = X0.shape
    Y = X0.astype(float).copy()
    status = np.full(n, STATUS_MAX_STEPS, dtype=np.int64)
    nsteps = np.zeros(n, dtype=np.int64)

    def grad(Z):
        return _batch_eval_np(Z, means, precs, coefs, False)[:2]

    F0, K0 = grad(Y)
    gn = np.linalg.norm(K0, axis=1)
    active = ~((gn < g_tol) & (gn < log_g_tol * F0))
    status[~active] = STATUS_CONVERGED
    sc = atol + rtol * np.abs(Y)
    d0 = np.sqrt(np.mean((Y / sc) ** 2, axis=1))
    d1 = np.sqrt(np.mean((K0 / sc) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where((d0 < 1e-5) | (d1 < 1e-5), 1e-6, 0.01 * d0 / d1)
    while active.any():
        idx = np.flatnonzero(active)
        y = Y[idx]
        hh = h[idx][:, None]
        k = np.empty((7, idx.size, d))
        k[0] = K0[idx]
        for s in range(1, 7):
            ytmp = y + hh * np.tensordot(A[s, :s], k[:s], axes=(0, 0))
            fs, k[s] = grad(ytmp)
        ynew = y + hh * np.tensordot(B, k, axes=(0, 0))
        err = hh * np.tensordot(E, k, axes=(0, 0))
        nsteps[idx] += 1
        finite = np.isfinite(ynew).all(axis=1)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        en = np.sqrt(np.mean((err / scale) ** 2, axis=1))
        en = np.where(finite, en, np.inf)
        acc = en <= 1.0
        with np.errstate(divide="ignore"):
            grow = np.where(en == 0.0, 5.0,
                            np.minimum(5.0, np.maximum(0.2, 0.9 * en ** -0.2)))
            shrink = np.maximum(0.2, 0.9 * en ** -0.2)
        fac = np.where(acc, grow, shrink)
        ai = idx[acc]
        Y[ai] = ynew[acc]
        K0[ai] = k[6][acc]
        conv = np.zeros(idx.size, dtype=bool)
        gacc = np.linalg.norm(k[6][acc], axis=1)
        conv[acc] = (gacc < g_tol) & (gacc < log_g_tol * fs[acc])
        h[idx] = np.maximum(h[idx] * fac, h_min)
        bad = ~finite
        status[idx[conv]] = STATUS_CONVERGED
        status[idx[bad]] = STATUS_NONFINITE
        done = conv | bad | (nsteps[idx] >= max_steps)
        active[idx[done]] = False
    return Y, status, nsteps


# ---------------------------------------------------------------------------
# dispatchers
# ---------------------------------------------------------------------------

def mixture_eval(X, means, precs, coefs, want_hess=True):
    """Density, gradient and (optionally) Hessian at each row of ``X``."""
    X = np.ascontiguousarray(X, dtype=float)
    if USE_NUMBA:
        return _batch_eval_nb(X, means, precs, coefs, want_hess)
    return _batch_eval_np(X, means, precs, coefs, want_hess)


def mixture_eval_point(x, means, precs, coefs, want_hess=True):
    x = np.ascontiguousarray(x, dtype=float)
    d = x.shape[0]
    g = np.empty(d)
    H = np.empty((d, d))
    if USE_NUMBA:
        f = _point_eval_nb(x, means, precs, coefs, g, H, want_hess)
        return f, g, (H if want_hess else None)
    F, G, Hs = _batch_eval_np(x[None, :], means, precs, coefs, want_hess)
    return float(F[0]), G[0], (Hs[0] if want_hess else None)


def label_components(mask):
    """Face-adjacent components of a boolean grid.

    Returns ``(labels, count)``; ``labels`` has the grid shape, holds -1
    outside the mask and component ids numbered by smallest flat cell index.
    """
    mask = np.ascontiguousarray(mask, dtype=bool)
    if USE_NUMBA:
        shape = np.array(mask.shape, dtype=np.int64)
        strides = np.array([int(np.prod(mask.shape[a + 1:])) for a in range(mask.ndim)],
                           dtype=np.int64)
        labels, count = _label_nb(mask.ravel(), shape, strides)
    else:
        labels, count = _label_np(mask)
    return labels.reshape(mask.shape), int(count)


def batch_plain_ascent(X0, means, precs, coefs, *, atol, rtol, h_min,
                       max_steps, g_tol, log_g_tol=1e-3):
    """Integrate dx/dtau = grad f from every row of ``X0`` until ||grad f|| < g_tol.

    A point only counts as converged when also ||grad f|| < log_g_tol * f:
    far in the tails the gradient is tiny in absolute terms although no
    critical point is near.

    Returns ``(endpoints, status, nsteps)`` with status codes
    ``STATUS_CONVERGED``, ``STATUS_MAX_STEPS`` or ``STATUS_NONFINITE``.
    """
    X0 = np.ascontiguousarray(X0, dtype=float)
    fn = _batch_ascent_nb if USE_NUMBA else _batch_ascent_np
    return fn(X0, means, precs, coefs, float(atol), float(rtol), float(h_min),
              int(max_steps), float(g_tol), float(log_g_tol), DP_A, DP_B, DP_E)
