"""Hot loops: pointwise Dyson solves, Q-grid maxima, gridded log-potentials.

Each kernel has a numba-compiled version (when numba is available) and a
numpy version. The dispatchers at the bottom pick one based on
``NUMBA_ENABLED``; tests call both explicitly.
"""
import numpy as np

from ._accel import JIT_OPTIONS, NUMBA_ENABLED, njit, prange

STATUS_OK = 0
STATUS_FAILED = 1


# ---------------------------------------------------------------------------
# two-block Dyson system, scalar routines


@njit(**JIT_OPTIONS)
def residual(z, a, b, c, d, m0, m1):
    f0 = 1.0 + (z + a * m0 + b * m1) * m0
    f1 = 1.0 + (z + c * m0 + d * m1) * m1
    return max(abs(f0), abs(f1))


@njit(**JIT_OPTIONS)
def newton_point(z, a, b, c, d, m0, m1, tol, maxit):
    it = 0
    res = residual(z, a, b, c, d, m0, m1)
    while res > tol and it < maxit:
        s0 = z + a * m0 + b * m1
        s1 = z + c * m0 + d * m1
        f0 = 1.0 + s0 * m0
        f1 = 1.0 + s1 * m1
        j11 = s0 + a * m0
        j12 = b * m0
        j21 = c * m1
        j22 = s1 + d * m1
        det = j11 * j22 - j12 * j21
        if det == 0:
            break
        m0 = m0 - (j22 * f0 - j12 * f1) / det
        m1 = m1 - (j11 * f1 - j21 * f0) / det
        res = residual(z, a, b, c, d, m0, m1)
        it += 1
    return m0, m1, res, it


@njit(**JIT_OPTIONS)
def damped_point(z, a, b, c, d, m0, m1, alpha, maxit, tol):
    """Damped fixed-point iteration m_i <- (1-alpha) m_i + alpha * (-1/(z + S m)_i)."""
    it = 0
    res = residual(z, a, b, c, d, m0, m1)
    while res > tol and it < maxit:
        n0 = -1.0 / (z + a * m0 + b * m1)
        n1 = -1.0 / (z + c * m0 + d * m1)
        m0 = (1.0 - alpha) * m0 + alpha * n0
        m1 = (1.0 - alpha) * m1 + alpha * n1
        res = residual(z, a, b, c, d, m0, m1)
        it += 1
    return m0, m1, res, it


@njit(**JIT_OPTIONS)
def _admissible(m0, m1, res, tol, lower):
    return res <= tol and m0.imag > lower and m1.imag > lower


@njit(**JIT_OPTIONS)
def eta_path_point(x, eta, a, b, c, d, tol, maxit, start):
    """Follow the admissible branch from Im z = start down to Im z = eta."""
    level = start
    z = complex(x, level)
    m0 = -1.0 / z
    m1 = m0
    total = 0
    while True:
        z = complex(x, level)
        m0, m1, res, it = newton_point(z, a, b, c, d, m0, m1, tol, maxit)
        total += it
        if level <= eta:
            break
        level = max(0.5 * level, eta)
    return m0, m1, res, total


@njit(**JIT_OPTIONS)
def solve_point(z, a, b, c, d, m0, m1, tol, maxit, lower, path_start):
    """Warm-started solve with the fallback ladder.

    damped iteration (alpha 0.5) + Newton polish, then a cold restart with
    alpha 0.25, then continuation in Im z from ``path_start``.
    """
    total = 0
    w0, w1, res, it = damped_point(z, a, b, c, d, m0, m1, 0.5, 200, 1e-3)
    total += it
    w0, w1, res, it = newton_point(z, a, b, c, d, w0, w1, tol, maxit)
    total += it
    if _admissible(w0, w1, res, tol, lower):
        return w0, w1, res, total, STATUS_OK
    w0 = -1.0 / z
    w1 = w0
    w0, w1, res, it = damped_point(z, a, b, c, d, w0, w1, 0.25, 400, 1e-3)
    total += it
    w0, w1, res, it = newton_point(z, a, b, c, d, w0, w1, tol, maxit)
    total += it
    if _admissible(w0, w1, res, tol, lower):
        return w0, w1, res, total, STATUS_OK
    w0, w1, res, it = eta_path_point(z.real, z.imag, a, b, c, d, tol, maxit, path_start)
    total += it
    if _admissible(w0, w1, res, tol, lower):
        return w0, w1, res, total, STATUS_OK
    return w0, w1, res, total, STATUS_FAILED


# ---------------------------------------------------------------------------
# grid sweeps


def _sweep_continuation_py(xs, eta, a, b, c, d, tol, maxit, radius):
    n = xs.shape[0]
    m0s = np.empty(n, dtype=np.complex128)
    m1s = np.empty(n, dtype=np.complex128)
    res = np.empty(n)
    its = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    start = 2.0 * radius + 1.0
    z = complex(xs[0], eta)
    g0 = -1.0 / z
    g1 = g0
    for k in range(n):
        z = complex(xs[k], eta)
        lower = 0.5 * eta / ((abs(xs[k]) + radius) ** 2 + eta * eta)
        w0, w1, r, it, st = solve_point(z, a, b, c, d, g0, g1, tol, maxit, lower, start)
        m0s[k] = w0
        m1s[k] = w1
        res[k] = r
        its[k] = it
        status[k] = st
        if st == STATUS_OK:
            g0 = w0
            g1 = w1
    return m0s, m1s, res, its, status


def _sweep_cold_py(xs, eta, a, b, c, d, tol, maxit, radius):
    n = xs.shape[0]
    m0s = np.empty(n, dtype=np.complex128)
    m1s = np.empty(n, dtype=np.complex128)
    res = np.empty(n)
    its = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    start = 2.0 * radius + 1.0
    for k in prange(n):
        lower = 0.5 * eta / ((abs(xs[k]) + radius) ** 2 + eta * eta)
        w0, w1, r, it = eta_path_point(xs[k], eta, a, b, c, d, tol, maxit, start)
        m0s[k] = w0
        m1s[k] = w1
        res[k] = r
        its[k] = it
        status[k] = STATUS_OK if _admissible(w0, w1, r, tol, lower) else STATUS_FAILED
    return m0s, m1s, res, its, status


if NUMBA_ENABLED:
    sweep_continuation_numba = njit(**JIT_OPTIONS)(_sweep_continuation_py)
    sweep_cold_numba = njit(parallel=True, cache=True)(_sweep_cold_py)
else:  # pragma: no cover
    sweep_continuation_numba = _sweep_continuation_py
    sweep_cold_numba = _sweep_cold_py


def _newton_vec(z, a, b, c, d, m0, m1, tol, maxit):
    """Vectorised Newton on arrays; points already below tol are frozen."""
    it = np.zeros(z.shape, dtype=np.int64)
    for _ in range(maxit):
        s0 = z + a * m0 + b * m1
        s1 = z + c * m0 + d * m1
        f0 = 1.0 + s0 * m0
        f1 = 1.0 + s1 * m1
        res = np.maximum(np.abs(f0), np.abs(f1))
        act = res > tol
        if not act.any():
            break
        j11 = s0 + a * m0
        j12 = b * m0
        j21 = c * m1
        j22 = s1 + d * m1
        det = j11 * j22 - j12 * j21
        det = np.where(det == 0, 1.0, det)
        m0 = np.where(act, m0 - (j22 * f0 - j12 * f1) / det, m0)
        m1 = np.where(act, m1 - (j11 * f1 - j21 * f0) / det, m1)
        it += act
    f0 = 1.0 + (z + a * m0 + b * m1) * m0
    f1 = 1.0 + (z + c * m0 + d * m1) * m1
    return m0, m1, np.maximum(np.abs(f0), np.abs(f1)), it


def sweep_cold_numpy(xs, eta, a, b, c, d, tol, maxit, radius):
    xs = np.asarray(xs, dtype=float)
    level = 2.0 * radius + 1.0
    z = xs + 1j * level
    m0 = -1.0 / z
    m1 = m0.copy()
    its = np.zeros(xs.shape, dtype=np.int64)
    while True:
        z = xs + 1j * level
        m0, m1, res, it = _newton_vec(z, a, b, c, d, m0, m1, tol, maxit)
        its += it
        if level <= eta:
            break
        level = max(0.5 * level, eta)
    lower = 0.5 * eta / ((np.abs(xs) + radius) ** 2 + eta * eta)
    ok = (res <= tol) & (m0.imag > lower) & (m1.imag > lower)
    status = np.where(ok, STATUS_OK, STATUS_FAILED).astype(np.int64)
    return m0, m1, res, its, status


def sweep_continuation_numpy(xs, eta, a, b, c, d, tol, maxit, radius):
    # interpreted run of the same scalar code used by numba
    return _sweep_continuation_py(np.asarray(xs, dtype=float), eta, a, b, c, d, tol, maxit, radius)


def sweep(xs, eta, coeffs, tol, maxit, radius, mode="continuation", backend=None):
    """Solve the Dyson system along ``xs + i*eta``; returns (m0, m1, res, iters, status)."""
    a, b, c, d = (float(v) for v in coeffs)
    xs = np.ascontiguousarray(xs, dtype=float)
    use_numba = NUMBA_ENABLED if backend is None else backend == "numba"
    if mode == "continuation":
        fn = sweep_continuation_numba if use_numba else sweep_continuation_numpy
    elif mode == "cold":
        fn = sweep_cold_numba if use_numba else sweep_cold_numpy
    else:
        raise ValueError(f"unknown sweep mode {mode!r}")
    return fn(xs, float(eta), a, b, c, d, float(tol), int(maxit), float(radius))


# ---------------------------------------------------------------------------
# max of h + E^2 k over an overlap grid, for many energies


def qgrid_max_numpy(hvals, kvals, energies):
    hv = hvals.ravel()
    kv = kvals.ravel()
    out = np.empty(len(energies))
    arg = np.empty(len(energies), dtype=np.int64)
    for n, e in enumerate(energies):
        q = hv + e * e * kv
        j = int(np.argmax(q))
        out[n] = q[j]
        arg[n] = j
    return out, arg


@njit(**JIT_OPTIONS)
def _qgrid_max_jit(hv, kv, energies):
    ne = energies.shape[0]
    out = np.empty(ne)
    arg = np.empty(ne, dtype=np.int64)
    for n in range(ne):
        e2 = energies[n] * energies[n]
        best = -np.inf
        jb = 0
        for j in range(hv.shape[0]):
            v = hv[j] + e2 * kv[j]
            if v > best:
                best = v
                jb = j
        out[n] = best
        arg[n] = jb
    return out, arg


def qgrid_max(hvals, kvals, energies, backend=None):
    """For each energy E return (max_j h_j + E^2 k_j, flat argmax)."""
    energies = np.ascontiguousarray(energies, dtype=float)
    use_numba = NUMBA_ENABLED if backend is None else backend == "numba"
    if use_numba:
        return _qgrid_max_jit(np.ascontiguousarray(hvals, dtype=float).ravel(),
                              np.ascontiguousarray(kvals, dtype=float).ravel(), energies)
    return qgrid_max_numpy(hvals, kvals, energies)


# ---------------------------------------------------------------------------
# product-trapezoid log-potential of a piecewise-linear density


def _cell_log_moments(u0, u1):
    # int_{u0}^{u1} log|u| du and int u log|u| du, with 0*log 0 = 0
    def p0(u):
        au = np.abs(u)
        return np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)) - u, 0.0)

    def p1(u):
        au = np.abs(u)
        return np.where(au > 0, 0.5 * u * u * np.log(np.where(au > 0, au, 1.0)) - 0.25 * u * u, 0.0)

    return p0(u1) - p0(u0), p1(u1) - p1(u0)


def log_potential_grid_numpy(x, dens, energies):
    x = np.asarray(x, dtype=float)
    dens = np.asarray(dens, dtype=float)
    xl, xr = x[:-1], x[1:]
    dl, dr = dens[:-1], dens[1:]
    slope = (dr - dl) / (xr - xl)
    out = np.empty(len(energies))
    for n, e in enumerate(energies):
        u0, u1 = xl - e, xr - e
        i0, i1 = _cell_log_moments(u0, u1)
        # density on the cell: dl + slope * (u - u0)
        out[n] = np.sum((dl - slope * u0) * i0 + slope * i1)
    return out


@njit(**JIT_OPTIONS)
def _p0(u):
    if u == 0.0:
        return 0.0
    return u * np.log(abs(u)) - u


@njit(**JIT_OPTIONS)
def _p1(u):
    if u == 0.0:
        return 0.0
    return 0.5 * u * u * np.log(abs(u)) - 0.25 * u * u


@njit(**JIT_OPTIONS)
def _log_potential_grid_jit(x, dens, energies):
    out = np.empty(energies.shape[0])
    for n in range(energies.shape[0]):
        e = energies[n]
        acc = 0.0
        for j in range(x.shape[0] - 1):
            u0 = x[j] - e
            u1 = x[j + 1] - e
            slope = (dens[j + 1] - dens[j]) / (x[j + 1] - x[j])
            acc += (dens[j] - slope * u0) * (_p0(u1) - _p0(u0)) + slope * (_p1(u1) - _p1(u0))
        out[n] = acc
    return out


def log_potential_grid(x, dens, energies, backend=None):
    """Exact integral of log|x - E| against the linear interpolant of ``dens``."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    use_numba = NUMBA_ENABLED if backend is None else backend == "numba"
    if use_numba:
        return _log_potential_grid_jit(np.ascontiguousarray(x, dtype=float),
                                       np.ascontiguousarray(dens, dtype=float), energies)
    return log_potential_grid_numpy(x, dens, energies)
