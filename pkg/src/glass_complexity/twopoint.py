"""Two-point overlap functionals and grid verifications.

All closed forms are vectorised over ``r`` and ``t``. The energy-dependent
pieces (psi, sigma2) take a spectral measure for the log-potential.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .complexity import constant_C, log_potential, sigma, threshold_eth
from .covariance import sigma_E_grid
from .mde import SpectralMeasure, spectral_density
from .params import DomainError, ModelParams, OverlapPoint

GRID_MARGIN = 1e-3


def _real(x):
    x = np.asarray(x)
    return x if x.dtype == np.longdouble else x.astype(float)


def _rt(r, t=None):
    if isinstance(r, OverlapPoint):
        return r.r, r.t
    return _real(r), _real(t)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def h_overlap(params: ModelParams, r, t=None):
    """Entropy factor of a pair of configurations with overlaps (r, t)."""
    r, t = _rt(r, t)
    p, q, g = params.p, params.q, params.gamma
    r2, t2 = r * r, t * t
    out = (0.5 * g * (np.log1p(-r2) - np.log1p(-(t2 ** q) * r2 ** (p - 1)))
           + 0.5 * (1 - g) * (np.log1p(-t2) - np.log1p(-(t2 ** (q - 1)) * r2 ** p)))
    return _scalar(out)


g_overlap = h_overlap


def b_func(p, q, r, t=None):
    r, t = _rt(r, t)
    out = ((1 - r ** p * t ** q) * (1 - r ** (2 * p - 2) * t ** (2 * q - 2))
           + (p - 1) * (1 - r * r) * r ** (p - 2) * t ** q * (1 - r ** p * t ** (q - 2))
           + (q - 1) * (1 - t * t) * r ** p * t ** (q - 2) * (1 - r ** (p - 2) * t ** q))
    return _scalar(out)


def ell_func(p, q, r, t=None):
    r, t = _rt(r, t)
    return _scalar(t ** q * r ** p * (1 - r ** (p - 2) * t ** q) * (1 - r ** p * t ** (q - 2)))


def k_func(p, q, r, t=None):
    r, t = _rt(r, t)
    num = np.asarray(ell_func(p, q, r, t))
    den = np.asarray(b_func(p, q, r, t))
    zero = (r == 0) & (t == 0)
    out = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return _scalar(out)


def m_func(p, q, r, t=None):
    r, t = _rt(r, t)
    return _scalar((p - 1) * (1 - r * r) * t * t + (q - 1) * (1 - t * t) * r * r)


def kbar_func(p, q, r, t=None):
    r, t = _rt(r, t)
    num = t * t * r * r * (1 - r ** (p - 1) * t ** (q - 1))
    den = np.asarray(m_func(p, q, r, t))
    zero = den == 0
    out = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return _scalar(out)


def q_func(params: ModelParams, r, t=None, E=0.0):
    if isinstance(r, OverlapPoint):
        E = t if t is not None else E
        r, t = r.r, r.t
    return _scalar(np.asarray(h_overlap(params, r, t)) + E * E * np.asarray(k_func(params.p, params.q, r, t)))


def qbar_func(params: ModelParams, r, t, E):
    return _scalar(np.asarray(h_overlap(params, r, t)) + E * E * np.asarray(kbar_func(params.p, params.q, r, t)))


def qbar_unipartite(p: int, r):
    """Q-bar with p = q, r = t and gamma irrelevant: the one-variable reduction used for p >= 10."""
    r = np.asarray(r, dtype=float)
    out = (0.5 * np.log((1 - r * r) / (1 - r ** (2 * p - 2)))
           + math.log(p - 1) / (p - 1) * (1 - r ** (p - 1)) * r * r / (1 - r * r))
    return _scalar(out)


def finite_n_h(params: ModelParams, N1: int, N2: int, r, t=None):
    if N1 < 3 or N2 < 3:
        raise DomainError("N1, N2 must be >= 3")
    r, t = _rt(r, t)
    p, q = params.p, params.q
    r2, t2 = r * r, t * t
    out = (0.5 * (N1 - 2) * (np.log1p(-r2) - np.log1p(-(t2 ** q) * r2 ** (p - 1)))
           + 0.5 * (N2 - 2) * (np.log1p(-t2) - np.log1p(-(r2 ** p) * t2 ** (q - 1))))
    return _scalar(out)


# ---------------------------------------------------------------------------
# energy-dependent functionals


def _quadratic_form(sigma_e, e1, e2):
    sigma_e = np.asarray(sigma_e, dtype=float)
    a, b, d = sigma_e[..., 0, 0], sigma_e[..., 0, 1], sigma_e[..., 1, 1]
    det = a * d - b * b
    if np.any(~(a > 0)) or np.any(~(det > 0)):
        raise DomainError("Sigma_E is not positive definite")
    return (d * e1 * e1 - 2 * b * e1 * e2 + a * e2 * e2) / det


def psi(params: ModelParams, r, t, E1, E2, sigma_e=None, measure: SpectralMeasure | None = None,
        omega=None):
    """h - (E1,E2) Sigma_E^{-1} (E1,E2)^T / 2 + Omega(E1) + Omega(E2).

    ``omega`` may be given as the pair (Omega(E1), Omega(E2)); otherwise it is
    computed from ``measure``.
    """
    r, t = _rt(r, t)
    if sigma_e is None:
        sigma_e = sigma_E_grid(params.p, params.q, r, t)
    if omega is None:
        if measure is None:
            raise DomainError("psi needs a spectral measure or precomputed log-potentials")
        omega = (log_potential(measure, float(E1)), log_potential(measure, float(E2)))
    out = (np.asarray(h_overlap(params, r, t)) - 0.5 * _quadratic_form(sigma_e, E1, E2)
           + omega[0] + omega[1])
    return _scalar(out)


def sigma2(params: ModelParams, r, t, E1, E2, sigma_e=None, measure=None, omega=None):
    return _scalar(2 * constant_C(params) + np.asarray(psi(params, r, t, E1, E2, sigma_e, measure, omega)))


def overlap_grid(grid_res: int, margin: float = GRID_MARGIN, nonneg: bool = False) -> np.ndarray:
    """Symmetric grid on [-1+margin, 1-margin] (or [0, 1-margin]); odd sizes contain 0."""
    if nonneg:
        return np.linspace(0.0, 1 - margin, grid_res)
    if grid_res % 2 == 1:
        half = np.linspace(0.0, 1 - margin, grid_res // 2 + 1)
        return np.concatenate([-half[:0:-1], half])
    return np.linspace(-1 + margin, 1 - margin, grid_res)


@dataclass
class TwoPointSurface:
    params: ModelParams
    r_grid: np.ndarray
    t_grid: np.ndarray
    values: np.ndarray
    energy: tuple
    argmax: OverlapPoint
    supremum: float
    gap: float = float("nan")

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "energy": list(self.energy),
            "grid_res": [len(self.r_grid), len(self.t_grid)],
            "supremum": self.supremum,
            "argmax": [self.argmax.r, self.argmax.t],
            "gap": self.gap,
        }


def sup_sigma2(params: ModelParams, E: float, grid_res: int = 301, measure: SpectralMeasure | None = None,
               E2: float | None = None) -> TwoPointSurface:
    """Scan Sigma_2(r, t, E, E) over the overlap grid."""
    if measure is None:
        measure = spectral_density(params)
    e2 = E if E2 is None else E2
    g = overlap_grid(grid_res)
    R, T = np.meshgrid(g, g, indexing="ij")
    om = (log_potential(measure, float(E)), log_potential(measure, float(e2)))
    vals = np.asarray(sigma2(params, R, T, E, e2, sigma_E_grid(params.p, params.q, R, T), omega=om))
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    sup = float(vals[i, j])
    gap = sup - 2 * sigma(params, measure, E) if E2 is None else float("nan")
    return TwoPointSurface(params=params, r_grid=g, t_grid=g, values=vals, energy=(float(E), float(e2)),
                           argmax=OverlapPoint(float(g[i]), float(g[j])), supremum=sup, gap=float(gap))


# ---------------------------------------------------------------------------
# inequality chain and key-lemma scans


def j_bar(p, q, r, t):
    return -2 * r ** p * t ** q + (p + q) * r * r * t * t - (p - 1) * t * t - (q - 1) * r * r


def l_bar(p, q, r, t):
    return ((t - r) ** 2 + r * r * (1 - t * t) + r ** (p - 1) * t ** (q + 1) + r ** (p + 1) * t ** (q + 1)
            - 2 * r ** p * t ** q)


def inequality_sides(p, q, r, t):
    """(lhs, rhs) of the three inequalities bounding b from below."""
    mm = (p - 1) * (1 - r * r) * t * t + (q - 1) * (1 - t * t) * r * r
    prod = (1 - r ** (p - 2) * t ** q) * (1 - r ** p * t ** (q - 2))
    den = 1 - r ** (p - 1) * t ** (q - 1)
    first = (1 - r ** (2 * p - 2) * t ** (2 * q - 2), r ** (p - 2) * t ** (q - 2) * mm)
    second = ((1 - r ** (p - 2) * t ** q) + (1 - r ** p * t ** q), prod / den)
    third = (b_func(p, q, r, t), 2 * r ** (p - 2) * t ** (q - 2) * mm * prod / den)
    return {"first": first, "second": second, "third": third}


def verify_inequality_chain(p: int, q: int, grid_res: int = 400, margin: float = GRID_MARGIN) -> dict:
    """Max violation (rhs - lhs) of each inequality on [0, 1-margin]^2, plus the sign facts."""
    g = overlap_grid(grid_res, margin, nonneg=True)
    R, T = np.meshgrid(g, g, indexing="ij")
    report = {"p": p, "q": q, "grid_res": grid_res}
    for name, (lhs, rhs) in inequality_sides(p, q, R, T).items():
        report[f"{name}_max_violation"] = float(np.max(rhs - lhs))
    report["jbar22_max"] = float(np.max(-R ** 2 - T ** 2 + 2 * R ** 2 * T ** 2))
    report["jbar_pq_max"] = float(np.max(j_bar(p, q, R, T)))
    report["jbar22_matches_general"] = float(np.max(np.abs(j_bar(2, 2, R, T) - (-R ** 2 - T ** 2 + 2 * R ** 2 * T ** 2))))
    report["lbar11_error"] = float(np.max(np.abs(l_bar(1, 1, R, T) - 2 * (R - T) ** 2)))
    report["lbar_pq_min"] = float(np.min(l_bar(p, q, R, T)))
    a, c = 1 - R ** (p - 2) * T ** q, 1 - R ** p * T ** (q - 2)
    lhs = (1 - R ** (p - 1) * T ** (q - 1)) * (a + (1 - R ** p * T ** q)) - 2 * a * c
    report["lbar_identity_error"] = float(np.max(np.abs(lhs - R ** (p - 2) * T ** (q - 2) * l_bar(p, q, R, T))))
    tol = 1e-12
    report["passed"] = bool(
        report["first_max_violation"] <= tol and report["second_max_violation"] <= tol
        and report["third_max_violation"] <= tol and report["jbar22_max"] <= tol
        and report["lbar11_error"] <= tol and report["lbar_pq_min"] >= -tol
        and report["lbar_identity_error"] <= tol)
    return report


def key_lemma_scan(params: ModelParams, n_energies: int = 21, grid_res: int = 300,
                   margin: float = GRID_MARGIN, backend=None) -> dict:
    """max over the overlap grid of Q(r, t, E) for E on a grid in [-E_th, E_th]."""
    eth = threshold_eth(params)
    es = np.linspace(-eth, eth, n_energies)
    g = overlap_grid(grid_res, margin)
    R, T = np.meshgrid(g, g, indexing="ij")
    hv = np.asarray(h_overlap(params, R, T))
    kv = np.asarray(k_func(params.p, params.q, R, T))
    best, arg = _kernels.qgrid_max(hv, kv, es, backend=backend)
    n = int(np.argmax(best))
    i, j = np.unravel_index(int(arg[n]), R.shape)
    return {"params": params.to_dict(), "e_th": eth, "max_q": float(best[n]), "energy": float(es[n]),
            "argmax": [float(g[i]), float(g[j])], "per_energy": best.tolist()}
