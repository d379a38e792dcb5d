"""Small-scale Monte Carlo: block random matrices, the bipartite field and a determinant bound.

Every random draw comes from a Philox stream keyed by (master seed, purpose, item, block),
so results do not depend on how work items are spread over workers.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from threadpoolctl import threadpool_limits

from .mde import SpectralMeasure, spectral_density
from .params import DomainError, ModelParams

TENSOR_BUDGET = 50_000_000  # float64 entries
W1_POINTS = 10_000
CDF_POINTS = 20_001

# stream purposes
_SPECTRUM, _TENSOR, _STARTS, _DETBOUND = 1, 2, 3, 4


def default_workers() -> int:
    env = os.environ.get("GLASS_COMPLEXITY_WORKERS")
    return max(1, int(env)) if env else 1


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _run_items(fn, items, workers):
    """Map fn over items; the output order is the item order whatever the worker count."""
    workers = max(1, int(workers or 1))
    with threadpool_limits(limits=1):
        if workers == 1:
            return [fn(it) for it in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# block matrices


@dataclass(frozen=True)
class BlockMatrixSpec:
    n1: int
    n2: int
    v11: float
    v12: float
    v22: float
    diag_boost: bool = True

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 0:
            raise DomainError("block sizes must satisfy n1 >= 1, n2 >= 0")
        if min(self.v11, self.v12, self.v22) < 0:
            raise DomainError("variances must be non-negative")

    @property
    def size(self) -> int:
        return self.n1 + self.n2

    def swapped(self) -> "BlockMatrixSpec":
        return BlockMatrixSpec(self.n2, self.n1, self.v22, self.v12, self.v11, self.diag_boost)

    @classmethod
    def hessian_bulk(cls, params: ModelParams, N: int) -> "BlockMatrixSpec":
        """Blocks of sizes N1-1 and N2-1 with variances (p-1)/(pN), 1/N, (q-1)/(qN)."""
        n1, n2 = split_dimensions(params.gamma, N)
        return cls(n1 - 1, n2 - 1, (params.p - 1) / (params.p * N), 1.0 / N,
                   (params.q - 1) / (params.q * N), True)


def split_dimensions(gamma: float, N: int):
    n1 = int(math.floor(gamma * N + 0.5))
    n1 = min(max(n1, 2), N - 2)
    return n1, N - n1


def _sym_block(z, var, boost):
    s = math.sqrt(var)
    up = np.triu(z, 1) * s
    diag = np.diag(z) * (s * math.sqrt(2.0) if boost else s)
    return up + up.T + np.diag(diag)


def draw_normals(spec: BlockMatrixSpec, seed: int, sample: int = 0, purpose: int = _SPECTRUM):
    """Standard normals for the three blocks, one stream per block."""
    z11 = rng_stream(seed, purpose, sample, 0).standard_normal((spec.n1, spec.n1))
    z12 = rng_stream(seed, purpose, sample, 1).standard_normal((spec.n1, spec.n2))
    z22 = rng_stream(seed, purpose, sample, 2).standard_normal((spec.n2, spec.n2))
    return z11, z12, z22


def block_from_normals(spec: BlockMatrixSpec, z11, z12, z22) -> np.ndarray:
    n1, n = spec.n1, spec.size
    out = np.empty((n, n))
    out[:n1, :n1] = _sym_block(z11, spec.v11, spec.diag_boost)
    if spec.n2:
        off = z12 * math.sqrt(spec.v12)
        out[:n1, n1:] = off
        out[n1:, :n1] = off.T
        out[n1:, n1:] = _sym_block(z22, spec.v22, spec.diag_boost)
    return out


def sample_block_goe(spec: BlockMatrixSpec, rng_seed: int, sample: int = 0) -> np.ndarray:
    return block_from_normals(spec, *draw_normals(spec, rng_seed, sample))


# ---------------------------------------------------------------------------
# spectral check


def _model_quantiles(measure: SpectralMeasure, u):
    x = np.linspace(-measure.edge, measure.edge, CDF_POINTS)
    F = np.maximum.accumulate(measure.cdf(x))
    F[0], F[-1] = 0.0, 1.0
    # drop flat stretches so the inverse is single valued
    keep = np.concatenate([[True], np.diff(F) > 0])
    return np.interp(u, F[keep], x[keep])


def wasserstein1_to_model(eigs, measure: SpectralMeasure, points: int = W1_POINTS) -> float:
    """W1 by quantile coupling: mean |Q_emp(u) - Q_model(u)| on a midpoint grid of u."""
    eigs = np.sort(np.asarray(eigs, dtype=float).ravel())
    u = (np.arange(points) + 0.5) / points
    q_emp = eigs[np.minimum((u * eigs.size).astype(np.int64), eigs.size - 1)]
    return float(np.mean(np.abs(q_emp - _model_quantiles(measure, u))))


@dataclass
class McResult:
    seed: int
    n: int
    samples: int
    eigen_summary: dict = field(default_factory=dict)
    w1: float = float("nan")
    ground_states: list = field(default_factory=list)
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_runtime: bool = False) -> dict:
        out = {"seed": self.seed, "n": self.n, "samples": self.samples, "eigen_summary": self.eigen_summary,
               "w1": self.w1, "ground_states": list(self.ground_states)}
        out.update({k: v for k, v in self.extra.items() if not k.startswith("_")})
        if include_runtime:
            out["runtime"] = self.runtime
        return out


def spectral_check(params: ModelParams, N: int, samples: int, seed: int, workers: int | None = None,
                   measure: SpectralMeasure | None = None, keep_eigenvalues: bool = False) -> McResult:
    if N < 20:
        raise DomainError("N must be at least 20")
    t0 = time.perf_counter()
    if measure is None:
        measure = spectral_density(params)
    spec = BlockMatrixSpec.hessian_bulk(params, N)

    def one(k):
        return np.linalg.eigvalsh(sample_block_goe(spec, seed, k))

    eigs = np.concatenate(_run_items(one, range(samples), workers or default_workers()))
    qs = np.quantile(eigs, [0.0, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 1.0])
    hist, edges = np.histogram(eigs, bins=80, range=(-1.2 * measure.edge, 1.2 * measure.edge), density=True)
    summary = {"quantiles": qs.tolist(), "mean": float(eigs.mean()),
               "histogram": {"edges": edges.tolist(), "density": hist.tolist()}}
    res = McResult(seed=int(seed), n=int(N), samples=int(samples), eigen_summary=summary,
                   w1=wasserstein1_to_model(eigs, measure), runtime=time.perf_counter() - t0,
                   extra={"params": params.to_dict(), "blocks": [spec.n1, spec.n2]})
    if keep_eigenvalues:
        res.extra["eigenvalues"] = np.sort(eigs).tolist()
    return res


# ---------------------------------------------------------------------------
# bipartite Hamiltonian


def _symmetrize_axes(J, axes):
    from itertools import permutations

    perms = list(permutations(axes))
    acc = np.zeros_like(J)
    order = list(range(J.ndim))
    for perm in perms:
        full = order.copy()
        for src, dst in zip(axes, perm):
            full[src] = dst
        acc += np.transpose(J, full)
    return acc / len(perms)


@dataclass
class HamiltonianTensor:
    """h_N(s, t) = <J, s^{(x)p} (x) t^{(x)q}> on unit vectors, J iid N(0,1) then symmetrised per factor."""
    p: int
    q: int
    n1: int
    n2: int
    seed: int
    matrix: np.ndarray  # shape (n1**p, n2**q)

    @property
    def N(self) -> int:
        return self.n1 + self.n2

    def _powers(self, x, k):
        # rows of x^{(x)k}, flattened
        out = np.ones((x.shape[0], 1))
        for _ in range(k):
            out = (out[:, :, None] * x[:, None, :]).reshape(x.shape[0], -1)
        return out

    def energy(self, s, t):
        s, t = np.atleast_2d(s), np.atleast_2d(t)
        A = self._powers(s, self.p) @ self.matrix
        return np.einsum("bj,bj->b", A, self._powers(t, self.q))

    def energy_and_grad(self, s, t):
        """Batched value and Euclidean gradients of h_N (rows are configurations)."""
        s, t = np.atleast_2d(s), np.atleast_2d(t)
        B = s.shape[0]
        Tq = self._powers(t, self.q)
        Sp = self._powers(s, self.p)
        A = Sp @ self.matrix                      # (B, n2**q)
        h = np.einsum("bj,bj->b", A, Tq)
        gt = np.einsum("bij,bj->bi", A.reshape(B, self.n2, -1), self._powers(t, self.q - 1)) * self.q
        C = Tq @ self.matrix.T                    # (B, n1**p)
        gs = np.einsum("bij,bj->bi", C.reshape(B, self.n1, -1), self._powers(s, self.p - 1)) * self.p
        return h, gs, gt

    def hessian(self, s, t):
        """Euclidean Hessian of h_N at a single (s, t), as a (n1+n2) square matrix."""
        s, t = np.asarray(s, float), np.asarray(t, float)
        p, q, n1, n2 = self.p, self.q, self.n1, self.n2
        one = lambda x, k: self._powers(x[None, :], k)[0]
        c = self.matrix @ one(t, q)
        hss = p * (p - 1) * (c.reshape(n1 * n1, -1) @ one(s, p - 2)).reshape(n1, n1)
        d = one(s, p) @ self.matrix
        htt = q * (q - 1) * (d.reshape(n2 * n2, -1) @ one(t, q - 2)).reshape(n2, n2)
        m4 = self.matrix.reshape(n1, n1 ** (p - 1), n2, n2 ** (q - 1))
        hst = p * q * np.einsum("iajb,a,b->ij", m4, one(s, p - 1), one(t, q - 1))
        return np.block([[hss, hst], [hst.T, htt]])


def sample_hamiltonian(p: int, q: int, N1: int, N2: int, seed: int,
                       budget: int = TENSOR_BUDGET) -> HamiltonianTensor:
    if p < 2 or q < 2 or N1 < 2 or N2 < 2:
        raise DomainError("need p, q, N1, N2 >= 2")
    size = float(N1) ** p * float(N2) ** q
    if size > budget:
        raise DomainError(f"tensor with {size:.3g} entries exceeds the budget of {budget:.3g}; "
                          "use smaller p, q or N")
    J = rng_stream(seed, _TENSOR).standard_normal((N1,) * p + (N2,) * q)
    J = _symmetrize_axes(J, tuple(range(p)))
    J = _symmetrize_axes(J, tuple(range(p, p + q)))
    return HamiltonianTensor(p, q, N1, N2, int(seed), np.ascontiguousarray(J.reshape(N1 ** p, N2 ** q)))


def _tangent(x, g):
    return g - np.einsum("bi,bi->b", g, x)[:, None] * x


def _normalize(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _descend(ham: HamiltonianTensor, s, t, tol, max_iter, c1=1e-4):
    """Batched Riemannian gradient descent with per-row Armijo backtracking."""
    B = s.shape[0]
    step = np.full(B, 0.1)
    h, gs, gt = ham.energy_and_grad(s, t)
    rs, rt = _tangent(s, gs), _tangent(t, gt)
    gn2 = np.einsum("bi,bi->b", rs, rs) + np.einsum("bi,bi->b", rt, rt)
    active = np.sqrt(gn2) > tol
    iters = np.zeros(B, dtype=np.int64)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        a = step[idx]
        s_new = _normalize(s[idx] - a[:, None] * rs[idx])
        t_new = _normalize(t[idx] - a[:, None] * rt[idx])
        h_new = ham.energy(s_new, t_new)
        ok = h_new <= h[idx] - c1 * a * gn2[idx]
        acc = idx[ok]
        if acc.size:
            s[acc], t[acc] = s_new[ok], t_new[ok]
            hh, gss, gtt = ham.energy_and_grad(s[acc], t[acc])
            h[acc] = hh
            rs[acc], rt[acc] = _tangent(s[acc], gss), _tangent(t[acc], gtt)
            gn2[acc] = np.einsum("bi,bi->b", rs[acc], rs[acc]) + np.einsum("bi,bi->b", rt[acc], rt[acc])
            step[acc] = np.minimum(step[acc] * 2.0, 10.0)
            iters[acc] += 1
        rej = idx[~ok]
        step[rej] *= 0.5
        stuck = rej[step[rej] < 1e-16]
        active[stuck] = False
        active &= np.sqrt(gn2) > tol
    return s, t, h, np.sqrt(gn2), iters


def _tangent_basis(x):
    # orthonormal basis of x-perp (columns)
    q, _ = np.linalg.qr(np.column_stack([x, np.eye(x.size)]))
    return q[:, 1:x.size]


def _newton_polish(ham: HamiltonianTensor, s, t, tol, max_iter=30):
    """Riemannian Newton on the product of spheres; stops if it would climb or leave a minimum."""
    n1 = ham.n1
    h, gs, gt = (a[0] for a in ham.energy_and_grad(s, t))
    for _ in range(max_iter):
        rs, rt = gs - (gs @ s) * s, gt - (gt @ t) * t
        gnorm = math.sqrt(rs @ rs + rt @ rt)
        if gnorm <= tol:
            break
        Bs, Bt = _tangent_basis(s), _tangent_basis(t)
        B = np.zeros((ham.N, Bs.shape[1] + Bt.shape[1]))
        B[:n1, :Bs.shape[1]], B[n1:, Bs.shape[1]:] = Bs, Bt
        H = B.T @ ham.hessian(s, t) @ B
        shift = np.concatenate([np.full(Bs.shape[1], gs @ s), np.full(Bt.shape[1], gt @ t)])
        H -= np.diag(shift)
        g = B.T @ np.concatenate([rs, rt])
        try:
            # only a positive definite Riemannian Hessian gives a descent step to a minimum
            step = -cho_solve(cho_factor(H), g)
        except np.linalg.LinAlgError:
            break
        d = B @ step
        s_new, t_new = s + d[:n1], t + d[n1:]
        s_new, t_new = s_new / np.linalg.norm(s_new), t_new / np.linalg.norm(t_new)
        h_new, gs_new, gt_new = (a[0] for a in ham.energy_and_grad(s_new, t_new))
        if h_new > h + 1e-10 * max(1.0, abs(h)):
            break
        s, t, h, gs, gt = s_new, t_new, h_new, gs_new, gt_new
    rs, rt = gs - (gs @ s) * s, gt - (gt @ t) * t
    return s, t, h, math.sqrt(rs @ rs + rt @ rt)


def ground_state_search(ham: HamiltonianTensor, restarts: int, seed: int, tol: float = 1e-8,
                        max_iter: int = 20_000, chunk: int = 25, workers: int | None = None,
                        polish_from: float = 1e-4) -> McResult:
    """Minimise h_N over the product of spheres from uniform random starts."""
    t0 = time.perf_counter()
    chunks = [(c, min(chunk, restarts - c)) for c in range(0, restarts, chunk)]

    def run(item):
        start, size = item
        s = np.vstack([rng_stream(seed, _STARTS, start + k, 0).standard_normal(ham.n1) for k in range(size)])
        t = np.vstack([rng_stream(seed, _STARTS, start + k, 1).standard_normal(ham.n2) for k in range(size)])
        s, t, h, gnorm, iters = _descend(ham, _normalize(s), _normalize(t), polish_from, max_iter)
        for k in range(size):
            s[k], t[k], h[k], gnorm[k] = _newton_polish(ham, s[k], t[k], tol)
        return s, t, h, gnorm, iters

    parts = _run_items(run, chunks, workers or default_workers())
    S = np.vstack([p[0] for p in parts])
    T = np.vstack([p[1] for p in parts])
    h = np.concatenate([p[2] for p in parts])
    gnorm = np.concatenate([p[3] for p in parts])
    iters = np.concatenate([p[4] for p in parts])
    converged = gnorm <= tol
    scaled = h / math.sqrt(ham.N)
    best = int(np.argmin(np.where(converged, h, np.inf))) if converged.any() else int(np.argmin(h))
    res = McResult(seed=int(seed), n=ham.N, samples=int(restarts), ground_states=scaled.tolist(),
                   runtime=time.perf_counter() - t0)
    res.extra = {
        "tensor_seed": ham.seed, "p": ham.p, "q": ham.q, "n1": ham.n1, "n2": ham.n2,
        "h_min": h.tolist(), "grad_norm": gnorm.tolist(), "iterations": iters.tolist(),
        "converged": converged.tolist(), "failed_restarts": np.flatnonzero(~converged).tolist(),
        "best_index": best, "best_h_over_N": float(scaled[best]),
    }
    res.extra["_minimisers"] = (S, T)
    return res


def antipodal_pairs(S, T, values, top: int = 10, tol: float = 1e-6):
    """Among the lowest minima, pairs whose configurations differ by (s, t) -> (-s, -t) or a single sign flip."""
    order = np.argsort(values)[:top]
    pairs = []
    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            i, j = order[a], order[b]
            r, u = float(S[i] @ S[j]), float(T[i] @ T[j])
            if abs(abs(r) - 1) < tol and abs(abs(u) - 1) < tol and (r < 0 or u < 0):
                pairs.append((int(i), int(j), r, u))
    return pairs


# ---------------------------------------------------------------------------
# determinant bound


def _w_bound(L, V, v, eps):
    nv2 = float(v @ v)
    vf2 = float(np.sum(V * V))
    lf2 = float(np.sum(L * L))
    Vv2 = float(np.sum((V @ v) ** 2))
    Lv2 = float(np.sum((L @ v) ** 2))
    return math.sqrt(32.0 / nv2 * (vf2 * vf2 / eps ** 2 + lf2) * (Vv2 * vf2 / eps ** 2 + Lv2))


def _logabsdet_shifted(eigs, E, eps):
    return float(np.sum(0.5 * np.log((eigs - E) ** 2 + eps * eps)))


def det_bound_instance(n: int, seed: int, index: int, coupling: bool = True):
    """Random (L, V, G, E, v) with L 2x2, V (n-4)x2, G (n-4)x(n-4), scaled like a normalised GOE."""
    rng = rng_stream(seed, _DETBOUND, index)
    m = n - 4
    scale = 1.0 / math.sqrt(n)
    A = rng.standard_normal((2, 2))
    L = (A + A.T) * scale / math.sqrt(2)
    V = rng.standard_normal((m, 2)) * scale if coupling else np.zeros((m, 2))
    Z = rng.standard_normal((m, m))
    G = (Z + Z.T) * scale / math.sqrt(2)
    E = rng.uniform(-2.5, 2.5)
    L = L - E * np.eye(2)
    v = rng.standard_normal(2)
    return L, V, G, E, v


def _bound_sides(L, V, G, E, v, eps):
    m = G.shape[0]
    M = np.block([[L, V.T], [V, G - E * np.eye(m)]])
    sign, lhs = np.linalg.slogdet(M)
    lhs = -np.inf if sign == 0 else lhs
    rhs = math.log(_w_bound(L, V, v, eps)) + _logabsdet_shifted(np.linalg.eigvalsh(G), E, eps)
    return lhs, rhs


def det_bound_check(n: int, eps, seed: int, instances: int = 1000, coupling: bool = True,
                    workers: int | None = None) -> dict:
    """Compare log|det M| with log(W |det(G - E + i eps)|) on random instances."""
    if n < 6:
        raise DomainError("n must be at least 6")
    eps_list = [float(e) for e in np.atleast_1d(eps)]
    if any(not e > 0 for e in eps_list):
        raise DomainError("eps must be positive")

    def block(item):
        # a chunk of instances, with the linear algebra stacked
        insts = [det_bound_instance(n, seed, k, coupling) for k in range(*item)]
        m = n - 4
        L = np.array([i[0] for i in insts])
        V = np.array([i[1] for i in insts])
        G = np.array([i[2] for i in insts])
        E = np.array([i[3] for i in insts])
        M = np.concatenate([np.concatenate([L, V.transpose(0, 2, 1)], 2),
                            np.concatenate([V, G - E[:, None, None] * np.eye(m)], 2)], 1)
        sign, lhs = np.linalg.slogdet(M)
        lhs = np.where(sign == 0, -np.inf, lhs)
        eigs = np.linalg.eigvalsh(G)
        out = []
        for j, (Lj, Vj, _, Ej, vj) in enumerate(insts):
            out.append([(float(lhs[j]), math.log(_w_bound(Lj, Vj, vj, e)) + _logabsdet_shifted(eigs[j], Ej, e))
                        for e in eps_list])
        return out

    t0 = time.perf_counter()
    chunks = [(a, min(a + 50, instances)) for a in range(0, instances, 50)]
    rows = [r for part in _run_items(block, chunks, workers or default_workers()) for r in part]
    report = {"n": n, "seed": int(seed), "instances": int(instances), "coupling": coupling, "per_eps": []}
    total = 0
    for j, e in enumerate(eps_list):
        margins = np.array([r[j][1] - r[j][0] for r in rows])
        bad = np.flatnonzero(margins < 0)
        total += bad.size
        report["per_eps"].append({"eps": e, "violations": int(bad.size), "violating_instances": bad.tolist(),
                                  "min_log_margin": float(margins.min())})
    report["violations"] = int(total)
    report["passed"] = total == 0
    report["runtime"] = time.perf_counter() - t0
    return report


def ratio_monotonicity_scan(n: int, seed: int, instances: int = 50, doublings: int = 10) -> dict:
    """log(RHS/LHS) along eps = rho * 2^k, k = 0..doublings, with rho the spectral radius of G - E."""
    worst = np.inf
    for k in range(instances):
        L, V, G, E, v = det_bound_instance(n, seed, k)
        rho = float(np.max(np.abs(np.linalg.eigvalsh(G) - E)))
        vals = [np.subtract(*_bound_sides(L, V, G, E, v, rho * 2.0 ** j)[::-1]) for j in range(doublings + 1)]
        worst = min(worst, float(np.min(np.diff(vals))))
    return {"n": n, "instances": instances, "min_increment": worst, "nondecreasing": bool(worst >= -1e-10)}
