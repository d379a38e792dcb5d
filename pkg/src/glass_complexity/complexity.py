"""Annealed complexity, log-potentials and the energy thresholds."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect

from . import _kernels
from .mde import SpectralMeasure, spectral_density
from .params import DomainError, ModelParams


class RootNotFoundError(RuntimeError):
    pass


def constant_C(params: ModelParams) -> float:
    p, q, g = params.p, params.q, params.gamma
    return 0.5 * (1 + g * math.log(p / g) + (1 - g) * math.log(q / (1 - g)))


def omega_sc(E):
    """Log-potential of the unit-variance semicircle on [-2, 2]."""
    E = np.asarray(E, dtype=float)
    a = np.abs(E)
    root = np.sqrt(np.clip(E * E - 4, 0.0, None))
    # E^2/4 - |E| root/4 = |E| / (|E| + root), written without the cancellation
    outer = a / np.maximum(a + root, 2.0) - 0.5 + np.log(np.maximum((a + root) / 2, 1.0))
    out = np.where(a < 2, E * E / 4 - 0.5, outer)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# log-potentials


def _joukowski_inverse(u):
    """zeta with |zeta| >= 1 and (zeta + 1/zeta)/2 = u."""
    u = np.asarray(u, dtype=complex)
    s = np.sqrt(u * u - 1)
    z1, z2 = u + s, u - s
    return np.where(np.abs(z1) >= np.abs(z2), z1, z2)


def _series_log_potential(coeffs, edge, w):
    """int log|x - w| dmu(x) for complex w, from the angle series of mu.

    With x = edge cos(theta) and w = edge (zeta + 1/zeta)/2,
    log|x - w| = log(edge/2) + log|zeta| - 2 Re sum_m zeta^-m cos(m theta) / m.
    """
    w = np.asarray(w, dtype=complex)
    zeta = _joukowski_inverse(w / edge)
    m = np.arange(1, len(coeffs))
    inv = 1.0 / zeta
    powers = np.power.outer(inv, m)
    tail = (powers @ (coeffs[1:] / m)).real
    mass = math.pi * coeffs[0]
    return mass * (math.log(edge / 2) + np.log(np.abs(zeta))) - math.pi * tail


def _grid_weights_mass(measure):
    return float(np.trapezoid(measure.density, measure.grid))


def log_potential(measure: SpectralMeasure, E):
    """int log|x - E| dmu(x)."""
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    if measure.coeffs is not None:
        out = _series_log_potential(measure.coeffs, measure.edge, E_arr + 0j)
    else:
        # exact integral of the piecewise-linear density, renormalised to unit mass
        out = _kernels.log_potential_grid(measure.grid, measure.density, E_arr) / _grid_weights_mass(measure)
    return out if np.ndim(E) else float(out[0])


def log_potential_gridded(measure: SpectralMeasure, E, backend=None):
    """Product-trapezoid log-potential of the gridded density (no series)."""
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    out = _kernels.log_potential_grid(measure.grid, measure.density, E_arr, backend=backend)
    out = out / _grid_weights_mass(measure)
    return out if np.ndim(E) else float(out[0])


def regularized_log_potential(measure: SpectralMeasure, E, eps: float):
    """int log|x - E + i eps| dmu(x) for eps > 0."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    E_arr = np.atleast_1d(np.asarray(E, dtype=float))
    if measure.coeffs is not None:
        out = _series_log_potential(measure.coeffs, measure.edge, E_arr - 1j * eps)
    else:
        x, d = measure.grid, measure.density
        vals = 0.5 * np.log(np.subtract.outer(E_arr, x) ** 2 + eps * eps)
        out = np.trapezoid(vals * d, x, axis=1) / _grid_weights_mass(measure)
    return out if np.ndim(E) else float(out[0])


def theta(params: ModelParams, measure: SpectralMeasure, E):
    E = np.asarray(E, dtype=float)
    out = -0.5 * E * E + log_potential(measure, E)
    return out if np.ndim(out) else float(out)


def sigma(params: ModelParams, measure: SpectralMeasure, E):
    out = constant_C(params) + theta(params, measure, E)
    return out if np.ndim(out) else float(out)


# ---------------------------------------------------------------------------
# thresholds and closed-form bounds


def threshold_eth(params: ModelParams) -> float:
    g = params.gamma
    return math.sqrt(2 * (g * math.log(params.p - 1) + (1 - g) * math.log(params.q - 1)))


def sigma_upper_bound(params: ModelParams, E):
    p, q, g = params.p, params.q, params.gamma
    E = np.asarray(E, dtype=float)
    out = (constant_C(params) + g * omega_sc(E * math.sqrt(p / ((p - 1) * g)))
           + (1 - g) * omega_sc(E * math.sqrt(q / ((q - 1) * (1 - g)))) - 0.5 * E * E)
    return out if np.ndim(out) else float(out)


def sigma_hat(gamma: float, E):
    """Upper bound for p, q >= 96 with the 96/95 rescaling inside the semicircle term."""
    if not (0 < gamma < 1):
        raise DomainError("gamma must lie in (0,1)")
    E = np.asarray(E, dtype=float)
    out = (0.5 * (1 + math.log(2)) + 0.25 * E * E
           + gamma * omega_sc(E * math.sqrt(96 / (95 * gamma)))
           + (1 - gamma) * omega_sc(E * math.sqrt(96 / (95 * (1 - gamma)))) - 0.5 * E * E)
    return out if np.ndim(out) else float(out)


def f_gamma(gamma: float, E: float) -> float:
    """gamma/(E/sqrt(gamma) - 2) + (1-gamma)/(E/sqrt(1-gamma) - 2); endpoints by continuity."""
    if not (0 <= gamma <= 1):
        raise DomainError("gamma must lie in [0,1]")

    def term(w):
        if w == 0:
            return 0.0
        arg = E / math.sqrt(w)
        if not arg > 2:
            raise DomainError(f"need E/sqrt(w) > 2, got {arg:.6g} for w={w}")
        return w / (arg - 2)

    return term(gamma) + term(1 - gamma)


def qhat_coefficient(r0: float = 0.61, p: int = 10) -> float:
    """r^2-coefficient bound of -log(1+r^2)/2 + (log(p-1)/(p-1)) r^2/(1-r^2) on [0, r0]."""
    return -0.5 * math.log(1 + r0 * r0) / (r0 * r0) + math.log(p - 1) / ((p - 1) * (1 - r0 * r0))


def qhat_unipartite(p: int, r):
    r = np.asarray(r, dtype=float)
    return -0.5 * np.log(1 + r * r) + math.log(p - 1) / (p - 1) * r * r / (1 - r * r)


def c1_times_3() -> float:
    return math.sqrt(95 / 96) * 3


# ---------------------------------------------------------------------------
# ground-state energy


def _sigma_negative_beyond(params, edge):
    """An energy above which Sigma < 0 is guaranteed: Omega(E) <= log(E + edge)."""
    c = constant_C(params)
    e = max(1.0, 2 * edge)
    while c - 0.5 * e * e + math.log(e + edge) >= 0:
        e *= 1.5
    return e


def sign_changes(params: ModelParams, measure: SpectralMeasure, step: float = 1e-2, tol: float = 1e-12):
    """All zeros of Sigma on (e_inf, inf), located by a scan and refined by bisection."""
    e_inf = measure.edge
    start = e_inf + 1e-4
    stop = _sigma_negative_beyond(params, e_inf) + step
    es = np.arange(start, stop, step)
    vals = sigma(params, measure, es)
    roots = []
    for k in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
        fn = lambda e: float(sigma(params, measure, e))
        roots.append(bisect(fn, es[k], es[k + 1], xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200))
    return roots, (float(start), float(es[-1]))


def find_e0(params: ModelParams, measure: SpectralMeasure | None = None, step: float = 1e-2,
            return_all: bool = False):
    """E0 > e_inf with Sigma(-E0) = 0; the largest zero when several are found."""
    if measure is None:
        measure = spectral_density(params)
    roots, bracket = sign_changes(params, measure, step)
    if not roots:
        raise RootNotFoundError(f"no sign change of Sigma on [{bracket[0]:.6g}, {bracket[1]:.6g}]")
    e0 = max(roots)
    return (e0, roots) if return_all else e0


@dataclass
class ComplexityReport:
    params: ModelParams
    e_grid: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    upper_bound: np.ndarray
    e_inf: float
    e_zero: float
    e_th: float
    c_const: float
    all_roots: list = field(default_factory=list)

    def checks(self) -> dict:
        e = self.e_grid
        left = e < -self.e_inf
        sec = np.diff(self.sigma[left], 2)
        below = e < -self.e_zero
        return {
            "sigma_even": float(np.max(np.abs(self.sigma - self.sigma[::-1]))) <= 1e-8,
            "sigma_below_upper_bound": bool(np.all(self.sigma <= self.upper_bound + 1e-8)),
            "sigma_negative_left_of_e0": bool(np.all(self.sigma[below] < 0)),
            "sigma_concave_left_of_e_inf": bool(sec.size == 0 or np.max(sec) <= 1e-8),
            "e0_lt_eth": bool(self.e_zero < self.e_th),
            "e_inf_lt_e0": bool(self.e_inf < self.e_zero),
            "single_root": len(self.all_roots) == 1,
        }

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "e_inf": self.e_inf,
            "e_zero": self.e_zero,
            "e_th": self.e_th,
            "c_const": self.c_const,
            "all_roots": list(self.all_roots),
            "checks": self.checks(),
        }


def complexity_report(params: ModelParams, measure: SpectralMeasure | None = None, e_grid=None,
                      n_grid: int = 801) -> ComplexityReport:
    if measure is None:
        measure = spectral_density(params)
    e0, roots = find_e0(params, measure, return_all=True)
    eth = threshold_eth(params)
    if e_grid is None:
        top = 1.25 * max(eth, e0, measure.edge)
        half = np.linspace(0.0, top, n_grid // 2 + 1)
        e_grid = np.concatenate([-half[:0:-1], half])
    e_grid = np.asarray(e_grid, dtype=float)
    om = log_potential(measure, e_grid)
    c = constant_C(params)
    return ComplexityReport(
        params=params, e_grid=e_grid, sigma=c - 0.5 * e_grid ** 2 + om, omega=om,
        upper_bound=sigma_upper_bound(params, e_grid), e_inf=measure.edge, e_zero=e0, e_th=eth,
        c_const=c, all_roots=roots,
    )
