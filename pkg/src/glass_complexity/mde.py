"""Two-block Dyson system and the limiting spectral measure.

For z in the upper half-plane the pair (m0, m1) solves

    1 + (z + a m0 + b m1) m0 = 0,    1 + (z + c m0 + d m1) m1 = 0

with (a, b, c, d) = (g(p-1)/p, 1-g, g, (1-g)(q-1)/q). Both components are
Stieltjes transforms of probability measures; their gamma-mixture is the
spectral measure used by the complexity functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from . import _kernels
from .params import DomainError, ModelParams


class MDEConvergenceError(RuntimeError):
    def __init__(self, message, x=None, residual=None):
        super().__init__(message)
        self.x = x
        self.residual = residual


class EdgeBracketError(RuntimeError):
    pass


DEFAULT_ETAS = (4e-6, 2e-6, 1e-6)
DEFAULT_GRID_POINTS = 2001
SERIES_NODES = 384


@dataclass(frozen=True)
class StieltjesPair:
    z: complex
    m0: complex
    m1: complex
    residual: float
    iterations: int


def covering_radius(params: ModelParams) -> float:
    """Crude radius that contains the support."""
    g = params.gamma
    return 2.0 * math.sqrt(g * (params.p - 1) / params.p + (1 - g) * (params.q - 1) / params.q + 1.0)


def default_grid(params: ModelParams, n: int = DEFAULT_GRID_POINTS, scale: float = 1.2) -> np.ndarray:
    """Symmetric grid over [-scale R, scale R]; built from one half so x[-k-1] == -x[k]."""
    half = scale * covering_radius(params)
    if n % 2 == 1:
        pos = np.linspace(0.0, half, n // 2 + 1)
        return np.concatenate([-pos[:0:-1], pos])
    pos = np.linspace(half / (n - 1), half, n // 2)
    return np.concatenate([-pos[::-1], pos])


def solve_mde_point(params: ModelParams, z: complex, tol: float = 1e-12, max_iter: int = 200,
                    init=None) -> StieltjesPair:
    """Solve the Dyson system at one spectral parameter ``z``."""
    z = complex(z)
    if not z.imag > 0:
        raise DomainError(f"need Im z > 0, got {z}")
    if not tol > 0:
        raise DomainError("tol must be positive")
    a, b, c, d = params.variance_profile
    radius = covering_radius(params)
    if init is None:
        g0 = g1 = -1.0 / z
    else:
        g0, g1 = complex(init[0]), complex(init[1])
    lower = 0.5 * z.imag / ((abs(z.real) + radius) ** 2 + z.imag ** 2)
    m0, m1, res, it, st = _kernels.solve_point(z, a, b, c, d, g0, g1, tol, max_iter, lower,
                                               2.0 * radius + 1.0)
    if st != _kernels.STATUS_OK:
        raise MDEConvergenceError(f"Dyson solve failed at z={z}, residual {res:.3e}", x=z, residual=res)
    return StieltjesPair(z, complex(m0), complex(m1), float(res), int(it))


def solve_mde_line(params: ModelParams, xs, eta: float, tol: float = 1e-12, max_iter: int = 200,
                   mode: str = "continuation", backend=None):
    """Solve along ``xs + i eta``. Returns arrays (m0, m1, residual, iterations)."""
    if not eta > 0:
        raise DomainError("eta must be positive")
    xs = np.asarray(xs, dtype=float)
    m0, m1, res, its, status = _kernels.sweep(xs, eta, params.variance_profile, tol, max_iter,
                                              covering_radius(params), mode=mode, backend=backend)
    bad = np.flatnonzero(status != _kernels.STATUS_OK)
    if bad.size:
        k = int(bad[0])
        raise MDEConvergenceError(
            f"Dyson solve failed at x={xs[k]:.6g}, eta={eta:g} (residual {res[k]:.3e})",
            x=float(xs[k]), residual=float(res[k]))
    return m0, m1, res, its


def _richardson_zero(etas, values):
    """Intercept at eta=0 of the least-squares line through (eta, value) rows."""
    etas = np.asarray(etas, dtype=float)
    if len(etas) == 1:
        return values[0]
    design = np.vstack([np.ones_like(etas), etas]).T
    coef, *_ = np.linalg.lstsq(design, values.reshape(len(etas), -1), rcond=None)
    return coef[0].reshape(values.shape[1:])


def extrapolated_density(params: ModelParams, xs, etas=DEFAULT_ETAS, tol=1e-12, mode="continuation",
                         backend=None):
    """Component densities at ``xs`` from Im m / pi extrapolated linearly to eta = 0."""
    xs = np.asarray(xs, dtype=float)
    stack0, stack1 = [], []
    for eta in etas:
        m0, m1, _, _ = solve_mde_line(params, xs, eta, tol=tol, mode=mode, backend=backend)
        stack0.append(m0.imag / math.pi)
        stack1.append(m1.imag / math.pi)
    d0 = np.clip(_richardson_zero(etas, np.array(stack0)), 0.0, None)
    d1 = np.clip(_richardson_zero(etas, np.array(stack1)), 0.0, None)
    return d0, d1


# ---------------------------------------------------------------------------
# support edge


def _fold_point(params: ModelParams, x0: float, u0: float, u1: float, tol=1e-14, maxit=60):
    """Real solution of the system where its Jacobian is singular (square-root edge)."""
    a, b, c, d = params.variance_profile
    v = np.array([u0, u1, x0], dtype=float)
    for _ in range(maxit):
        m0, m1, x = v
        j11 = x + 2 * a * m0 + b * m1
        j12 = b * m0
        j21 = c * m1
        j22 = x + c * m0 + 2 * d * m1
        f = np.array([1 + (x + a * m0 + b * m1) * m0, 1 + (x + c * m0 + d * m1) * m1,
                      j11 * j22 - j12 * j21])
        jac = np.array([
            [j11, j12, m0],
            [j21, j22, m1],
            [2 * a * j22 + c * j11 - b * c * m1, b * j22 + 2 * d * j11 - b * c * m0, j11 + j22],
        ])
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            return None
        v = v - step
        if np.max(np.abs(step)) < tol * max(1.0, abs(v[2])):
            return v
    return None


def _density_at(params, x, etas, tol=1e-12):
    d0, d1 = extrapolated_density(params, np.atleast_1d(x), etas, tol=tol, mode="cold")
    g = params.gamma
    return float(g * d0[0] + (1 - g) * d1[0])


def support_edge(params: ModelParams, density_threshold: float = 1e-6, grid=None, etas=DEFAULT_ETAS,
                 density=None, polish: bool = True) -> float:
    """Right edge of the support.

    Threshold crossing on the grid, then bisection on the extrapolated density.
    With ``polish`` the bisection value seeds a Newton solve for the fold point
    of the real system, which is where a square-root edge sits exactly.
    """
    if not density_threshold > 0:
        raise DomainError("density_threshold must be positive")
    if grid is None:
        grid = default_grid(params)
    grid = np.asarray(grid, dtype=float)
    pos = grid >= 0
    xs = grid[pos]
    if density is None:
        d0, d1 = extrapolated_density(params, xs, etas)
        dens = params.gamma * d0 + (1 - params.gamma) * d1
    else:
        dens = np.asarray(density, dtype=float)[pos]
    above = np.flatnonzero(dens >= density_threshold)
    if above.size == 0:
        raise EdgeBracketError("no grid point above the density threshold; refine the grid near 0")
    k = int(above[-1])
    if k == len(xs) - 1:
        raise EdgeBracketError(
            f"density still above threshold at the grid end x={xs[-1]:.4g}; widen the grid")
    if k + 1 < len(xs) and k > 0 and (xs[k + 1] - xs[k]) > 0.05 * xs[k + 1]:
        raise EdgeBracketError("grid too coarse to bracket the support edge; refine it")
    lo, hi = xs[k], xs[k + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _density_at(params, mid, etas) >= density_threshold:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    edge = 0.5 * (lo + hi)
    if polish:
        seed = solve_mde_point(params, complex(edge, 1e-9))
        fold = _fold_point(params, edge, seed.m0.real, seed.m1.real)
        if fold is not None and abs(fold[2] - edge) < 1e-3:
            edge = float(fold[2])
    return float(edge)


# ---------------------------------------------------------------------------
# spectral measure


def _solve_real_axis(params: ModelParams, xs, tol=1e-13):
    """Boundary values m(x + i0) for x strictly inside the support."""
    a, b, c, d = params.variance_profile
    m0, m1, _, _ = solve_mde_line(params, xs, 1e-7, tol=1e-12, mode="cold")
    z = np.asarray(xs, dtype=complex)
    m0, m1, res, _ = _kernels._newton_vec(z, a, b, c, d, m0, m1, tol, 60)
    if np.any(res > 1e-10) or np.any(m0.imag <= 0) or np.any(m1.imag <= 0):
        raise MDEConvergenceError("boundary-value solve failed inside the support")
    return m0, m1


def angle_nodes(n: int) -> np.ndarray:
    return math.pi * (np.arange(n) + 0.5) / n


def cosine_coefficients(samples: np.ndarray) -> np.ndarray:
    """Coefficients a_m of f(theta) = sum_m a_m cos(m theta) from samples at angle_nodes."""
    n = samples.shape[-1]
    coef = dct(samples, type=2, axis=-1) / n
    coef[..., 0] *= 0.5
    return coef


@dataclass
class SpectralMeasure:
    """Gridded density of the limiting spectral measure plus its angle-series form.

    ``coeffs`` holds the cosine coefficients of theta -> rho(edge cos theta) edge sin theta
    on [0, pi]; the log-potential and the CDF are evaluated from it.
    """

    grid: np.ndarray
    density: np.ndarray
    density0: np.ndarray
    density1: np.ndarray
    edge: float
    eta_used: float
    params: ModelParams | None
    coeffs: np.ndarray | None = None
    coeffs0: np.ndarray | None = None
    coeffs1: np.ndarray | None = None
    tolerances: dict = field(default_factory=dict)

    def mass(self, which: str = "density") -> float:
        return float(np.trapezoid(getattr(self, which), self.grid))

    def series_density(self, x, coeffs=None):
        """Density from the angle series; zero outside [-edge, edge]."""
        coeffs = self.coeffs if coeffs is None else coeffs
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < self.edge
        th = np.arccos(x[inside] / self.edge)
        m = np.arange(len(coeffs))
        f = np.cos(np.outer(th, m)) @ coeffs
        out[inside] = np.clip(f / (self.edge * np.sin(th)), 0.0, None)
        return out

    def cdf(self, x):
        """Distribution function from the angle series."""
        x = np.asarray(x, dtype=float)
        th = np.arccos(np.clip(x / self.edge, -1.0, 1.0))
        m = np.arange(1, len(self.coeffs))
        # int_theta^pi f = a0 (pi - theta) - sum_m a_m sin(m theta) / m
        val = self.coeffs[0] * (math.pi - th) - np.sin(np.multiply.outer(th, m)) @ (self.coeffs[1:] / m)
        return np.clip(val, 0.0, 1.0)

    def to_dict(self):
        return {
            "params": None if self.params is None else self.params.to_dict(),
            "edge": self.edge,
            "eta_used": self.eta_used,
            "tolerances": self.tolerances,
            "mass": self.mass(),
        }


def measure_from_density(fn, edge: float, grid=None, nodes: int = SERIES_NODES) -> SpectralMeasure:
    """Build a measure from an explicit density supported on [-edge, edge]."""
    th = angle_nodes(nodes)
    coeffs = cosine_coefficients(fn(edge * np.cos(th)) * edge * np.sin(th))
    if grid is None:
        grid = np.linspace(-1.2 * edge, 1.2 * edge, DEFAULT_GRID_POINTS)
    dens = np.where(np.abs(grid) < edge, fn(np.clip(grid, -edge, edge)), 0.0)
    return SpectralMeasure(grid=np.asarray(grid), density=dens, density0=dens, density1=dens, edge=edge,
                           eta_used=0.0, params=None, coeffs=coeffs, coeffs0=coeffs, coeffs1=coeffs)


def semicircle_density(variance: float):
    rad2 = 4.0 * variance

    def fn(x):
        x = np.asarray(x, dtype=float)
        return np.sqrt(np.clip(rad2 - x * x, 0.0, None)) / (2 * math.pi * variance)

    return fn


def semicircle_stieltjes(z, variance: float):
    """Herglotz root of 1 + (z + s m) m = 0."""
    z = np.asarray(z, dtype=complex)
    root = np.sqrt(z * z - 4 * variance)
    m = (-z + root) / (2 * variance)
    alt = (-z - root) / (2 * variance)
    return np.where(m.imag >= alt.imag, m, alt)


def spectral_density(params: ModelParams, x_grid=None, eta_schedule=DEFAULT_ETAS, tol: float = 1e-12,
                     density_threshold: float = 1e-6, mode: str = "continuation",
                     nodes: int = SERIES_NODES, backend=None) -> SpectralMeasure:
    """Limiting spectral measure on ``x_grid`` by Stieltjes inversion."""
    if len(eta_schedule) == 0:
        raise DomainError("eta_schedule must be nonempty")
    etas = tuple(sorted((float(e) for e in eta_schedule), reverse=True))
    grid = default_grid(params) if x_grid is None else np.asarray(x_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise DomainError("x_grid must be strictly increasing")
    d0, d1 = extrapolated_density(params, grid, etas, tol=tol, mode=mode, backend=backend)
    g = params.gamma
    dens = g * d0 + (1 - g) * d1
    edge = support_edge(params, density_threshold, grid=grid, etas=etas, density=dens)
    if grid[0] > -edge or grid[-1] < edge:
        raise DomainError("x_grid does not cover the support")

    th = angle_nodes(nodes)
    xs = edge * np.cos(th)
    m0, m1 = _solve_real_axis(params, xs)
    jac = edge * np.sin(th) / math.pi
    c0 = cosine_coefficients(m0.imag * jac)
    c1 = cosine_coefficients(m1.imag * jac)
    return SpectralMeasure(
        grid=grid, density=dens, density0=d0, density1=d1, edge=edge, eta_used=etas[-1], params=params,
        coeffs=g * c0 + (1 - g) * c1, coeffs0=c0, coeffs1=c1,
        tolerances={"solver": tol, "density_threshold": density_threshold, "eta_schedule": list(etas),
                    "series_nodes": nodes},
    )
