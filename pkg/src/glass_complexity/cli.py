"""Command-line front end: ``glass-complexity <subcommand> [flags]``.

Every subcommand prints (or writes under ``--out``) one JSON document holding
``schema_version``, the run config, a git-style hash of that config and the result.
The exit status is 0 exactly when all checks of the subcommand pass.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .output import canonical_json, envelope, write_outputs
from .params import DomainError, ModelParams, OverlapPoint

SUBCOMMANDS = ("measure", "complexity", "two-point", "covariance", "verify-lemmas", "mc-spectrum",
               "mc-landscape")


def _eta_list(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eta list {text!r}") from exc
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("eta values must be positive")
    return vals


def _eps_list(text):
    return _eta_list(text)


def _workers_default():
    env = os.environ.get("GLASS_COMPLEXITY_WORKERS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--p", type=int, default=3)
    common.add_argument("--q", type=int, default=3)
    common.add_argument("--gamma", type=float, default=0.5)
    common.add_argument("--grid", type=int, default=None, help="grid resolution (meaning depends on subcommand)")
    common.add_argument("--eta", type=_eta_list, default=None, help="comma-separated eta schedule for the MDE")
    common.add_argument("--tol", type=float, default=1e-12, help="MDE solver tolerance")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output directory; stdout when omitted")
    common.add_argument("--format", choices=("json", "csv", "both"), default="json")
    common.add_argument("--workers", type=int, default=None,
                        help="worker threads (env GLASS_COMPLEXITY_WORKERS as fallback)")

    parser = argparse.ArgumentParser(prog="glass-complexity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("measure", parents=[common], help="limiting spectral measure")
    sp = sub.add_parser("complexity", parents=[common], help="annealed complexity and thresholds")
    sp.add_argument("--E", type=float, default=None, help="also report Sigma at this energy")
    sp = sub.add_parser("two-point", parents=[common], help="sup of the two-point complexity")
    sp.add_argument("--E", type=float, required=True)
    sp.add_argument("--E2", type=float, default=None)
    sp = sub.add_parser("covariance", parents=[common], help="covariance bundle and oracle checks")
    sp.add_argument("--r", type=float, default=0.3)
    sp.add_argument("--t", type=float, default=-0.5)
    sp.add_argument("--samples", type=int, default=20, help="random points for the oracle comparison")
    sp = sub.add_parser("verify-lemmas", parents=[common], help="consolidated lemma checks")
    sp.add_argument("--instances", type=int, default=1000, help="determinant-bound instances")
    sp.add_argument("--eps", type=_eps_list, default=[0.1, 1.0])
    sp.add_argument("--N", type=int, default=20, help="matrix size n for the determinant bound")
    sp = sub.add_parser("mc-spectrum", parents=[common], help="block random matrix spectra vs the model")
    sp.add_argument("--N", type=int, nargs="+", default=[400])
    sp.add_argument("--samples", type=int, default=20)
    sp.add_argument("--w1-tol", type=float, default=0.05)
    sp.add_argument("--dump-eigenvalues", action="store_true")
    sp = sub.add_parser("mc-landscape", parents=[common], help="ground states by gradient descent")
    sp.add_argument("--N", type=int, default=24, help="total dimension; N1 = round(gamma N)")
    sp.add_argument("--restarts", type=int, default=200)
    sp.add_argument("--band", type=float, default=0.15)
    sp.add_argument("--floor", type=float, default=0.2)
    return parser


def _params(args) -> ModelParams:
    return ModelParams(args.p, args.q, args.gamma)


def _measure(args, params):
    from .mde import DEFAULT_ETAS, default_grid, spectral_density

    grid = default_grid(params, args.grid) if args.grid else None
    return spectral_density(params, x_grid=grid, eta_schedule=args.eta or DEFAULT_ETAS, tol=args.tol)


def _base_config(args) -> dict:
    cfg = {"p": args.p, "q": args.q, "gamma": args.gamma, "grid": args.grid, "eta": args.eta,
           "tol": args.tol, "seed": args.seed, "format": args.format}
    for key in ("E", "E2", "r", "t", "samples", "instances", "eps", "N", "w1_tol", "restarts", "band", "floor",
                "dump_eigenvalues"):
        if hasattr(args, key):
            cfg[key] = getattr(args, key)
    return cfg


# ---------------------------------------------------------------------------
# subcommands: each returns (result dict, checks dict, csv tables)


def cmd_measure(args):
    params = _params(args)
    m = _measure(args, params)
    result = m.to_dict()
    result["mass_series"] = float(np.pi * m.coeffs[0])
    checks = {"unit_mass": abs(result["mass_series"] - 1) <= 1e-6,
              "nonnegative": bool(np.all(m.density >= 0)),
              "edge_inside_grid": bool(m.grid[-1] > m.edge)}
    rows = zip(m.grid, m.density, m.density0, m.density1)
    return result, checks, {"density": (["x", "density", "density_block1", "density_block2"], rows)}


def cmd_complexity(args):
    from .complexity import complexity_report, sigma

    params = _params(args)
    m = _measure(args, params)
    rep = complexity_report(params, m, n_grid=args.grid or 801)
    result = rep.to_dict()
    all_checks = result.pop("checks")
    # e0 < e_th and a single root are statements for large p, q; reported but not enforced
    info = {k: all_checks.pop(k) for k in ("e0_lt_eth", "single_root")}
    result["diagnostics"] = info
    if args.E is not None:
        result["sigma_at_E"] = {"E": args.E, "sigma": float(sigma(params, m, args.E))}
    rows = zip(rep.e_grid, rep.sigma, rep.omega, rep.upper_bound)
    return result, all_checks, {"sigma": (["E", "sigma", "omega", "upper_bound"], rows)}


def cmd_two_point(args):
    from .twopoint import sup_sigma2

    params = _params(args)
    m = _measure(args, params)
    surf = sup_sigma2(params, args.E, grid_res=args.grid or 301, measure=m, E2=args.E2)
    result = surf.to_dict()
    checks = {}
    if args.E2 is None:
        checks["gap_nonpositive"] = surf.gap <= 1e-8
    R, T = np.meshgrid(surf.r_grid, surf.t_grid, indexing="ij")
    rows = zip(R.ravel(), T.ravel(), surf.values.ravel())
    return result, checks, {"sigma2": (["r", "t", "sigma2"], rows)}


def cmd_covariance(args):
    from . import covariance as cov
    from .verify import (corner_checks, det_sigma_L_check, positive_definite_check, sigma_E_identity_check,
                         table_oracle_check)

    params = _params(args)
    bundle = cov.covariance_bundle(params, OverlapPoint(args.r, args.t))
    n = args.grid or 100
    oracle = table_oracle_check(samples=args.samples, seed=args.seed)
    det = det_sigma_L_check(params.p, params.q, n=n)
    ident = sigma_E_identity_check(params.p, params.q, n=n)
    pd = positive_definite_check(params.p, params.q, n=min(n, 50))
    corner = corner_checks(params.p, params.q)
    hl = np.linalg.eigvalsh(cov.hessian_HL(params.p, params.q))
    result = {"bundle": bundle.to_dict(), "table_oracle": oracle, "det_sigma_L": det, "sigma_E_identity": ident,
              "positive_definite": pd, "corner": corner, "hessian_HL_eigenvalues": hl.tolist(),
              "corner_hessian_eigenvalues": np.linalg.eigvalsh(cov.corner_hessian_det(params.p, params.q)).tolist()}
    checks = {"table_matches_oracle": oracle["max_abs_error"] <= 1e-6,
              "det_closed_matches_assembled": det["max_rel_error"] <= 1e-8,
              "sigma_E_identity": ident["max_abs_error"] <= 1e-8,
              "sigma_E_positive_definite": ident["eig_min"] > 0,
              "sigma_E_diagonal_at_most_one": ident["diag_max"] <= 1 + 1e-12,
              "sigma_E_below_unconditioned": ident["loewner_gap_min_eig"] >= -1e-12,
              "sigma_L_positive_definite": pd["sigma_L_min_eig"] > 0,
              "corner_value_and_gradient_vanish": max(corner.values()) <= 1e-8,
              "hessian_HL_positive_definite": bool(hl.min() > 0)}
    g = np.linspace(-0.99, 0.99, n)
    R, T = np.meshgrid(g, g, indexing="ij")
    se = cov.sigma_E_grid(params.p, params.q, R, T)
    dl = cov.det_sigma_L_closed(params.p, params.q, R, T)
    fl = 1.0 / ((2 * np.pi) ** 2 * np.sqrt(dl))
    rows = zip(R.ravel(), T.ravel(), dl.ravel(), fl.ravel(), se[..., 0, 0].ravel(), se[..., 0, 1].ravel(),
               se[..., 1, 1].ravel())
    return result, checks, {"grid": (["r", "t", "det_sigma_L", "f_L", "sigma_E_11", "sigma_E_12", "sigma_E_22"],
                                     rows)}


def cmd_verify_lemmas(args):
    from .verify import verify_lemmas

    params = _params(args)
    m = _measure(args, params)
    rep = verify_lemmas(params, seed=args.seed, det_instances=args.instances, det_n=args.N,
                        det_eps=tuple(args.eps), grid_res=args.grid or 300, workers=args.workers, measure=m)
    c = rep["checks"]
    rep["sigma_hat_at_eth"] = c["sigma_hat_at_eth"]["value"]
    rep["e0_lt_eth"] = c["e0_lt_eth"]["passed"]
    checks = {k: v["passed"] for k, v in c.items()}
    rep["details"] = rep.pop("checks")
    rows = [(k, v["value"], v["passed"]) for k, v in c.items()]
    return rep, checks, {"checks": (["check", "value", "passed"], rows)}


def cmd_mc_spectrum(args):
    from .montecarlo import spectral_check

    params = _params(args)
    m = _measure(args, params)
    runs = [spectral_check(params, N, args.samples, args.seed, workers=args.workers, measure=m,
                           keep_eigenvalues=args.dump_eigenvalues) for N in args.N]
    result = {"runs": [r.to_dict() for r in runs]}
    w1 = [r.w1 for r in runs]
    order = np.argsort(args.N)
    checks = {"w1_at_largest_N": float(w1[order[-1]]) <= args.w1_tol}
    if len(w1) > 1:
        ws = [w1[i] for i in order]
        checks["w1_strictly_decreasing"] = all(a > b for a, b in zip(ws, ws[1:]))
    tables = {"w1": (["N", "w1"], [(args.N[i], w1[i]) for i in order])}
    if args.dump_eigenvalues:
        tables["eigenvalues"] = (["N", "eigenvalue"],
                                 [(r.n, e) for r in runs for e in r.extra["eigenvalues"]])
    return result, checks, tables


def cmd_mc_landscape(args):
    from .complexity import find_e0
    from .montecarlo import ground_state_search, sample_hamiltonian, split_dimensions

    params = _params(args)
    n1, n2 = split_dimensions(params.gamma, args.N)
    ham = sample_hamiltonian(params.p, params.q, n1, n2, args.seed)
    res = ground_state_search(ham, args.restarts, args.seed, workers=args.workers)
    e0 = find_e0(params, _measure(args, params))
    best = res.extra["best_h_over_N"]
    lowest = min(res.ground_states)
    result = res.to_dict()
    result.update({"e0": e0, "band": [-e0 - args.band, -e0 + args.band], "floor": -e0 - args.floor})
    checks = {"best_within_band": abs(best + e0) <= args.band, "none_below_floor": lowest >= -e0 - args.floor}
    x = res.extra
    rows = zip(range(args.restarts), x["h_min"], res.ground_states, x["grad_norm"], x["iterations"],
               x["converged"])
    return result, checks, {"restarts": (["restart", "h_min", "h_over_N", "grad_norm", "iterations", "converged"],
                                         rows)}


HANDLERS = {
    "measure": cmd_measure, "complexity": cmd_complexity, "two-point": cmd_two_point,
    "covariance": cmd_covariance, "verify-lemmas": cmd_verify_lemmas, "mc-spectrum": cmd_mc_spectrum,
    "mc-landscape": cmd_mc_landscape,
}


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.workers is None:
        args.workers = _workers_default()
    try:
        result, checks, tables = HANDLERS[args.command](args)
    except (DomainError, MemoryError) as exc:
        print(f"glass-complexity {args.command}: {exc}", file=sys.stderr)
        return 2
    checks = {k: bool(v) for k, v in checks.items()}
    passed = all(checks.values())
    result = dict(result)
    result["checks"] = checks
    result["passed"] = passed
    doc = envelope(args.command, _base_config(args), result)
    if args.out:
        stem = args.command.replace("-", "_")
        for path in write_outputs(args.out, stem, doc, tables, args.format):
            print(path)
    else:
        print(canonical_json(doc))
    return 0 if passed else 1


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit as exc:  # argparse errors
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
