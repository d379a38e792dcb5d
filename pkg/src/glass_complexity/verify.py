"""Grid and sampling checks of the closed-form lemmas, gathered into pass/fail reports."""
from __future__ import annotations

import math

import numpy as np

from . import covariance as cov
from .complexity import (c1_times_3, f_gamma, find_e0, qhat_coefficient, sigma, sigma_hat,
                         threshold_eth)
from .mde import spectral_density
from .montecarlo import det_bound_check
from .params import ModelParams
from .twopoint import k_func, key_lemma_scan, verify_inequality_chain

SIGMA_HAT_ENERGY = math.sqrt(2 * math.log(95))


def _check(value, passed, **extra):
    out = {"value": value, "passed": bool(passed)}
    out.update(extra)
    return out


def f_gamma_sup(E: float = 3.0, step: float = 1e-3) -> dict:
    gammas = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    vals = np.array([f_gamma(float(g), E) for g in gammas])
    k = int(np.argmax(vals))
    sym = max(abs(f_gamma(float(g), E) - f_gamma(float(1 - g), E)) for g in gammas)
    return {"max": float(vals[k]), "argmax_gamma": float(gammas[k]), "symmetry_error": float(sym)}


# ---------------------------------------------------------------------------
# covariance cross-checks


def table_oracle_check(samples: int = 20, seed: int = 0, dim: int = cov.CHART_DIM) -> dict:
    """Max |table - oracle| over every entry at random (p, q, r, t), p, q in 2..7."""
    rng = np.random.default_rng(seed)
    worst, where, count = 0.0, None, 0
    for _ in range(samples):
        p, q = (int(v) for v in rng.integers(2, 8, size=2))
        r, t = (float(v) for v in rng.uniform(-0.95, 0.95, size=2))
        for (a, b), val in cov.derivative_covariance_table(p, q, r, t, dim).items():
            err = abs(val - cov.fd_covariance_oracle(p, q, r, t, a, b, dim=dim))
            count += 1
            if err > worst:
                worst, where = err, {"p": p, "q": q, "r": r, "t": t, "ops_a": a, "ops_b": b}
    return {"max_abs_error": worst, "worst_entry": where, "entries": count}


def det_sigma_L_check(p: int, q: int, n: int = 100, lim: float = 0.99) -> dict:
    g = np.linspace(-lim, lim, n)
    R, T = np.meshgrid(g, g, indexing="ij")
    assembled = np.linalg.det(cov.assemble_sigma_L(p, q, R, T))
    closed = cov.det_sigma_L_closed(p, q, R, T)
    rel = np.abs(assembled - closed) / np.abs(closed)
    return {"p": p, "q": q, "max_rel_error": float(rel.max()), "min_det": float(closed.min())}


def _identity_error(p, q, R, T, dtype):
    se = cov.sigma_E_grid(p, q, R.astype(dtype), T.astype(dtype), dtype=dtype)
    a, b, d = se[..., 0, 0], se[..., 0, 1], se[..., 1, 1]
    lhs = -0.5 * (a + d - 2 * b) / (a * d - b * b)
    k = np.asarray(k_func(p, q, R.astype(dtype), T.astype(dtype)))
    return np.abs(lhs - (-1 + k)).astype(float), np.abs(k).astype(float)


def sigma_E_identity_check(p: int, q: int, n: int = 100, lim: float = 0.99) -> dict:
    """-(1,1) Sigma_E^{-1} (1,1)^T / 2 against -1 + k on an n x n grid.

    Near the corners Sigma_E has condition number ~ 1e5 and |k| ~ 5e4, so in
    double precision the absolute error is rounding of size ~1e-7. Both sides are
    therefore evaluated in long double; the double-precision error is reported too.
    """
    g = np.linspace(-lim, lim, n)
    R, T = np.meshgrid(g, g, indexing="ij")
    err_ld, k = _identity_error(p, q, R, T, np.longdouble)
    err_d, _ = _identity_error(p, q, R, T, float)
    se = cov.sigma_E_grid(p, q, R, T)
    a, b, d = se[..., 0, 0], se[..., 0, 1], se[..., 1, 1]
    eig = np.linalg.eigvalsh(se)
    # conditioning can only shrink the covariance: [[1, v], [v, 1]] - Sigma_E is PSD
    v = R ** p * T ** q
    gap = np.stack([np.stack([1 - a, v - b], -1), np.stack([v - b, 1 - d], -1)], -2)
    return {"p": p, "q": q, "max_abs_error": float(err_ld.max()),
            "max_abs_error_double": float(err_d.max()),
            "max_rel_error_double": float((err_d / np.maximum(1.0, k)).max()),
            "long_double_digits": int(np.finfo(np.longdouble).precision),
            "eig_min": float(eig.min()), "eig_max": float(eig.max()),
            "diag_max": float(max(a.max(), d.max())),
            "loewner_gap_min_eig": float(np.linalg.eigvalsh(gap).min())}


def positive_definite_check(p: int, q: int, n: int = 50, lim: float = 0.99) -> dict:
    g = np.linspace(-lim, lim, n)
    R, T = np.meshgrid(g, g, indexing="ij")
    sl_min = float(np.linalg.eigvalsh(cov.assemble_sigma_L(p, q, R, T)).min())
    se_min = float(np.linalg.eigvalsh(cov.sigma_E_grid(p, q, R, T)).min())
    return {"sigma_L_min_eig": sl_min, "sigma_E_min_eig": se_min}


def corner_checks(p: int, q: int) -> dict:
    vals, grads = [], []
    for sr in (1.0, -1.0):
        for st in (1.0, -1.0):
            vals.append(abs(float(cov.g_L(p, q, sr, st))))
            grads.append(float(np.max(np.abs(cov.g_L_gradient(p, q, sr, st)))))
    return {"max_abs_value": max(vals), "max_abs_gradient": max(grads)}


def hl_positive_definite(pmax: int = 12) -> dict:
    worst = math.inf
    for p in range(2, pmax + 1):
        for q in range(2, pmax + 1):
            worst = min(worst, float(np.linalg.eigvalsh(cov.hessian_HL(p, q)).min()))
    return {"min_eigenvalue": worst}


# ---------------------------------------------------------------------------
# consolidated report


def verify_lemmas(params: ModelParams, seed: int = 0, det_instances: int = 1000, det_n: int = 20,
                  det_eps=(0.1, 1.0), grid_res: int = 300, n_energies: int = 21,
                  workers: int | None = None, measure=None) -> dict:
    p, q = params.p, params.q
    checks = {}
    sh = float(sigma_hat(0.5, SIGMA_HAT_ENERGY))
    checks["sigma_hat_at_eth"] = _check(sh, sh < 0, energy=SIGMA_HAT_ENERGY)
    eth = threshold_eth(params)
    checks["e_th"] = _check(eth, eth > 0)
    fs = f_gamma_sup()
    checks["f_gamma_sup_at_3"] = _check(fs["max"], fs["max"] <= 1 + 1e-9, argmax_gamma=fs["argmax_gamma"],
                                        symmetry_error=fs["symmetry_error"])
    qh = qhat_coefficient()
    checks["qhat_coefficient"] = _check(qh, qh < 0)
    c1 = c1_times_3()
    checks["c1_times_3"] = _check(c1, c1 > 2 * math.sqrt(2))

    chain = verify_inequality_chain(p, q)
    checks["inequality_chain"] = _check(max(chain["first_max_violation"], chain["second_max_violation"],
                                            chain["third_max_violation"]), chain["passed"], details=chain)
    kl = key_lemma_scan(params, n_energies=n_energies, grid_res=grid_res)
    checks["key_lemma_max_q"] = _check(kl["max_q"], kl["max_q"] <= 1e-12, argmax=kl["argmax"],
                                       energy=kl["energy"])

    if measure is None:
        measure = spectral_density(params)
    e0, roots = find_e0(params, measure, return_all=True)
    checks["e0_lt_eth"] = _check(e0, e0 < eth, e_th=eth, all_roots=roots)
    s_eth = float(sigma(params, measure, -eth))
    checks["sigma_at_minus_eth"] = _check(s_eth, s_eth < 0)

    det = det_sigma_L_check(p, q)
    checks["det_sigma_L_cross_check"] = _check(det["max_rel_error"], det["max_rel_error"] <= 1e-8)

    db = det_bound_check(det_n, list(det_eps), seed, instances=det_instances, workers=workers)
    db.pop("runtime", None)
    checks["det_bound_sampling"] = _check(db["violations"], db["passed"], details=db)
    return {"params": params.to_dict(), "checks": checks,
            "passed": all(c["passed"] for c in checks.values())}
