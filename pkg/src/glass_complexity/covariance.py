"""Two-point covariances of the rescaled bipartite field and its derivatives.

Derivative operators are written as tuples ``(factor, index)``: factor 0 is a
frame derivative on the first sphere, factor 1 on the second sphere, and
``index`` is the 1-based frame direction. Index 1 is the pivot direction that
points from one configuration toward the other.

The table below gives closed forms for ``E[D_a h(n) D_b h(n')]`` where ``n`` and
``n'`` have overlaps ``r`` and ``t``. The finite-difference oracle differentiates
the explicit chart kernel instead and is used to validate the table.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np

from .params import DomainError, ModelParams, OverlapPoint

SUB, SUP = 0, 1  # first-sphere / second-sphere frame derivative


def _ind(cond) -> float:
    return 1.0 if cond else 0.0


def _pow(x, k):
    # 0**0 = 1 and negative exponents only show up multiplied by zero
    if k < 0:
        if np.ndim(x):
            x = np.asarray(x, dtype=float)
            return np.divide(1.0, x ** -k, out=np.zeros_like(x), where=x != 0)
        return 0.0 if x == 0 else x ** k
    return x ** k


def _co(x):
    """sqrt(1 - x^2), clipped at 0; works on scalars and arrays."""
    if np.ndim(x):
        return np.sqrt(np.maximum(0.0, 1 - x * x))
    return math.sqrt(max(0.0, 1 - x * x))


def _grad_value(p, q, r, t, op):
    s, i = op
    rs, ts = _co(r), _co(t)
    if i != 1:
        return 0.0
    if s == SUB:
        return p * _pow(r, p - 1) * rs * _pow(t, q)
    return q * _pow(t, q - 1) * ts * _pow(r, p)


def _grad_grad(p, q, r, t, a, b):
    (s, i), (u, j) = a, b
    rs, ts = _co(r), _co(t)
    if s == SUB and u == SUB:
        return _pow(t, q) * (p * _pow(r, p - 1) * _ind(i == j != 1)
                             + _ind(i == j == 1) * p * _pow(r, p - 2) * (p * r * r - (p - 1)))
    if s == SUP and u == SUP:
        return _pow(r, p) * (q * _pow(t, q - 1) * _ind(i == j != 1)
                             + _ind(i == j == 1) * q * _pow(t, q - 2) * (q * t * t - (q - 1)))
    return -p * q * _pow(t, q - 1) * _pow(r, p - 1) * rs * ts * _ind(i == j == 1)


def _hess_value(p, q, r, t, a, b):
    (s, i), (u, j) = a, b
    rs, ts = _co(r), _co(t)
    if s == SUB and u == SUB:
        return _pow(t, q) * (-p * _pow(r, p) * _ind(i == j)
                             + p * (p - 1) * _pow(r, p - 2) * rs * rs * _ind(i == j == 1))
    if s == SUP and u == SUP:
        return _pow(r, p) * (-q * _pow(t, q) * _ind(i == j)
                             + q * (q - 1) * _pow(t, q - 2) * ts * ts * _ind(i == j == 1))
    return p * q * _pow(r, p - 1) * _pow(t, q - 1) * rs * ts * _ind(i == j == 1)


def _hess_grad(p, q, r, t, hess, grad):
    """E[D_i D_j h(n) D_k h(n')] with the Hessian at the first point."""
    (s, i), (u, j) = hess
    w, k = grad
    rs, ts = _co(r), _co(t)
    if s == u:
        if s == w:
            # same factor throughout
            if s == SUB:
                P, x, xs, Q, y = p, r, rs, q, t
            else:
                P, x, xs, Q, y = q, t, ts, p, r
            return _pow(y, Q) * (
                _ind(k != 1) * (_ind(i == 1 and j == k) + _ind(j == 1 and i == k)) * P * (P - 1) * xs * _pow(x, P - 2)
                + _ind(k == 1) * (_ind(i == j) * P * P * _pow(x, P - 1) * xs
                                  + _ind(i == j == 1) * P * (P - 1) * _pow(x, P - 3) * xs
                                  * (2 * x * x - (P - 2) * xs * xs)))
        # Hessian on one factor, gradient on the other
        if s == SUP:
            return -p * rs * _pow(r, p - 1) * _ind(k == 1) * (
                -_ind(i == j) * _pow(t, q) * q + _ind(i == j == 1) * q * (q - 1) * _pow(t, q - 2) * ts * ts)
        return -q * ts * _pow(t, q - 1) * _ind(k == 1) * (
            -_ind(i == j) * _pow(r, p) * p + _ind(i == j == 1) * p * (p - 1) * _pow(r, p - 2) * rs * rs)
    # mixed Hessian; frame derivatives on different factors commute
    lo, up = (i, j) if s == SUB else (j, i)
    if w == SUB:
        return q * _ind(up == 1) * _pow(t, q - 1) * ts * (
            p * _pow(r, p - 1) * _ind(lo == k != 1)
            + _ind(lo == k == 1) * p * _pow(r, p - 2) * (p * r * r - (p - 1)))
    return p * _ind(lo == 1) * _pow(r, p - 1) * rs * (
        q * _pow(t, q - 1) * _ind(up == k != 1)
        + _ind(up == k == 1) * q * _pow(t, q - 2) * (q * t * t - (q - 1)))


def table_entry(p: int, q: int, r: float, t: float, ops_a=(), ops_b=()) -> float:
    """Closed-form ``E[D_a h(n) D_b h(n')]`` for derivative orders up to (2,1)/(1,2)."""
    a, b = tuple(ops_a), tuple(ops_b)
    na, nb = len(a), len(b)
    if na == 0 and nb == 0:
        return _pow(r, p) * _pow(t, q)
    if na == 1 and nb == 0:
        return _grad_value(p, q, r, t, a[0])
    if na == 0 and nb == 1:
        return -_grad_value(p, q, r, t, b[0])
    if na == 1 and nb == 1:
        return _grad_grad(p, q, r, t, a[0], b[0])
    if na == 2 and nb == 0:
        return _hess_value(p, q, r, t, a[0], a[1])
    if na == 0 and nb == 2:
        return _hess_value(p, q, r, t, b[0], b[1])
    if na == 2 and nb == 1:
        return _hess_grad(p, q, r, t, a, b[0])
    if na == 1 and nb == 2:
        return -_hess_grad(p, q, r, t, b, a[0])
    raise ValueError(f"no table row for derivative orders ({na}, {nb})")


def derivative_covariance_table(p: int, q: int, r: float, t: float, dim: int = 3) -> dict:
    """All table entries for frame indices ``1..dim`` keyed by ``(ops_a, ops_b)``.

    Entries that the index pattern forces to vanish are included as zeros so
    the independence structure can be read off directly.
    """
    singles = [(s, i) for s in (SUB, SUP) for i in range(1, dim + 1)]
    pairs = [(x, y) for n, x in enumerate(singles) for y in singles[n:]]
    shapes = [((), ())]
    shapes += [((o,), ()) for o in singles] + [((), (o,)) for o in singles]
    shapes += [((o,), (v,)) for o in singles for v in singles]
    shapes += [(pr, ()) for pr in pairs] + [((), pr) for pr in pairs]
    shapes += [(pr, (o,)) for pr in pairs for o in singles]
    shapes += [((o,), pr) for pr in pairs for o in singles]
    return {(a, b): table_entry(p, q, r, t, a, b) for a, b in shapes}


# ---------------------------------------------------------------------------
# explicit chart kernel and the finite-difference oracle


@dataclass(frozen=True)
class SphereKernelPoint:
    x: tuple
    y: tuple

    def __post_init__(self):
        if sum(v * v for v in self.x) >= 1 or sum(v * v for v in self.y) >= 1:
            raise DomainError("chart coordinates must have norm < 1")


def _rho(overlap, x, y, sqrt=math.sqrt):
    os_ = sqrt(1 - overlap * overlap)
    nx = sqrt(1 - sum(v * v for v in x))
    ny = sqrt(1 - sum(v * v for v in y))
    tail = sum(x[i] * y[i] for i in range(1, len(x)))
    return tail + overlap * x[0] * y[0] + os_ * x[0] * ny - os_ * y[0] * nx + overlap * nx * ny


def field_covariance(p, q, r, t, a: SphereKernelPoint, b: SphereKernelPoint) -> float:
    """Covariance of the field at chart points ``a`` (around n) and ``b`` (around n')."""
    return _rho(r, a.x, b.x) ** p * _rho(t, a.y, b.y) ** q


def _kernel_mp(p, q, r, t, coords):
    x, y, z, w = coords
    sq = mpmath.sqrt
    return _rho(r, x, z, sq) ** p * _rho(t, y, w, sq) ** q


def _nested_difference(fun, base, shifts, h):
    """Apply one central difference per entry of ``shifts`` (slot, coord)."""
    if not shifts:
        return fun(base)
    (slot, c), rest = shifts[0], shifts[1:]
    up = [list(v) for v in base]
    dn = [list(v) for v in base]
    up[slot][c] += h
    dn[slot][c] -= h
    return (_nested_difference(fun, up, rest, h) - _nested_difference(fun, dn, rest, h)) / (2 * h)


FD_STEP = 1e-4
FD_DIGITS = 40
CHART_DIM = 3


def fd_covariance_oracle(p, q, r, t, ops_a=(), ops_b=(), step=FD_STEP, dim=CHART_DIM) -> float:
    """Nested central differences of the chart kernel, one Richardson level.

    Runs in extended precision: fourth-order mixed differences at step 1e-4
    lose every digit in double precision (roundoff ~ eps / h**4).
    """
    if len(ops_a) > 2 or len(ops_b) > 2:
        raise ValueError("at most second order per argument")
    with mpmath.workdps(FD_DIGITS):
        rr, tt = mpmath.mpf(r), mpmath.mpf(t)
        zero = [mpmath.mpf(0)] * dim
        # slots: 0 -> x (first factor at n), 1 -> y, 2 -> z (first factor at n'), 3 -> w
        shifts = [(s, i - 1) for s, i in ops_a] + [(2 + s, i - 1) for s, i in ops_b]
        fun = lambda c: _kernel_mp(p, q, rr, tt, c)
        base = [list(zero) for _ in range(4)]
        h = mpmath.mpf(step)
        coarse = _nested_difference(fun, base, shifts, h)
        if not shifts:
            return float(coarse)
        fine = _nested_difference(fun, base, shifts, h / 2)
        return float((4 * fine - coarse) / 3)


# ---------------------------------------------------------------------------
# pivot blocks and Gaussian conditioning

PIVOTS = ((SUB, 1), (SUP, 1))


def assemble_sigma_L(p, q, r, t) -> np.ndarray:
    """Covariance of (E_1 h(n), E^1 h(n), E_1 h(n'), E^1 h(n')), read off the table.

    ``r`` and ``t`` may be arrays of one shape; the result then has shape (..., 4, 4).
    """
    shape = np.broadcast(r, t).shape
    out = np.empty(shape + (4, 4))
    for i, a in enumerate(PIVOTS):
        for j, b in enumerate(PIVOTS):
            same = table_entry(p, q, 1.0, 1.0, (a,), (b,))
            cross = table_entry(p, q, r, t, (a,), (b,))
            out[..., i, j] = out[..., 2 + i, 2 + j] = same
            out[..., i, 2 + j] = out[..., 2 + j, i] = cross
    return out


def _b_polys(p, q, r, t, swapped_linear=False):
    rs2, ts2 = 1 - r * r, 1 - t * t
    b2 = p * rs2 + q * ts2 - 1
    # the linear pair is 2q r^2 + 2p t^2; swapped_linear=True gives 2p r^2 + 2q t^2,
    # which only agrees with the determinant when p == q
    lin = 2 * p * r * r + 2 * q * t * t if swapped_linear else 2 * q * r * r + 2 * p * t * t
    b1 = ((p - 1) ** 2 * t ** 4 + (q - 1) ** 2 * r ** 4
          + r * r * t * t * (2 * p * q * rs2 * ts2 + lin
                             + p * p * (-2 + r * r) * t * t + q * q * (-2 + t * t) * r * r))
    return b1, b2


def det_sigma_L_closed(p, q, r, t, swapped_linear=False):
    """Closed-form determinant of the pivot-gradient covariance (vectorised).

    Sigma_L has the block form [[D, X], [X, D]], so its determinant factors as
    det(D + X) det(D - X); expanding gives the polynomial below.
    """
    return g_L(p, q, np.asarray(r, dtype=float), np.asarray(t, dtype=float), swapped_linear)


def g_L(p, q, r, t, swapped_linear=False):
    """The determinant as a polynomial in (r, t); accepts complex arguments."""
    b1, b2 = _b_polys(p, q, r, t, swapped_linear)
    return p * p * q * q * (1 - r ** (2 * p - 4) * t ** (2 * q - 4) * b1
                            + r ** (4 * p - 4) * t ** (4 * q - 4) * b2 * b2)


def g_L_gradient(p, q, r, t, h=1e-30):
    """Complex-step gradient of g_L (exact to rounding for a polynomial)."""
    return np.array([g_L(p, q, r + 1j * h, t).imag / h, g_L(p, q, r, t + 1j * h).imag / h])


def hessian_HL(p, q) -> np.ndarray:
    """The corner Hessian constant in its commonly quoted form."""
    off = -3 * (p - 1) * (q - 1) - 2
    return 8 * p * p * q * q * np.array([[q * (3 * p - 2), off], [off, p * (3 * q - 2)]], dtype=float)


def corner_hessian_det(p, q, sr=1, st=1) -> np.ndarray:
    """Hessian of the determinant polynomial at the corner (sr, st) in {-1, 1}^2.

    Obtained by differentiating det_sigma_L_closed twice; differs from
    ``hessian_HL`` but is positive definite as well.
    """
    off = sr * st * (3 * (p - 1) * (q - 1) - 1)
    return 8 * p * p * q * q * np.array([[p * (3 * p - 2), off], [off, q * (3 * q - 2)]], dtype=float)


def value_cross_blocks(p, q, r, t):
    """Unconditional energy covariance and the energy/pivot-gradient covariance."""
    v = table_entry(p, q, r, t)
    value_block = np.array([[1.0, v], [v, 1.0]])
    cross = np.zeros((2, 4))
    # row 0: h(n), row 1: h(n'); columns follow assemble_sigma_L
    for c, op in enumerate(PIVOTS):
        cross[0, c] = table_entry(p, q, 1.0, 1.0, (), (op,))
        cross[0, 2 + c] = table_entry(p, q, r, t, (), (op,))
        cross[1, c] = table_entry(p, q, r, t, (op,), ())
        cross[1, 2 + c] = table_entry(p, q, 1.0, 1.0, (), (op,))
    return value_block, cross


def assemble_sigma_E(p, q, r, t) -> np.ndarray:
    """Conditional covariance of the two energies given the pivot gradients."""
    if not (abs(r) < 1 and abs(t) < 1):
        raise DomainError("Sigma_E needs |r|, |t| < 1")
    value_block, cross = value_cross_blocks(p, q, r, t)
    sl = assemble_sigma_L(p, q, r, t)
    try:
        cho = np.linalg.cholesky(sl)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"Sigma_L singular at (r,t)=({r},{t})") from exc
    half = np.linalg.solve(cho, cross.T)
    out = value_block - half.T @ half
    return 0.5 * (out + out.T)


def _real_array(x, dtype):
    return np.asarray(x, dtype=dtype)


def sigma_E_grid(p, q, r, t, dtype=float):
    """Vectorised Sigma_E over arrays ``r``, ``t`` (same shape). Returns (..., 2, 2).

    Sigma_L = [[D, X], [X, D]] with D = diag(p, q), so its inverse is
    [[P + M, P - M], [P - M, P + M]] / 2 with P = (D + X)^-1, M = (D - X)^-1;
    everything reduces to explicit 2x2 algebra, which also runs in long double.
    """
    r = _real_array(r, dtype)
    t = _real_array(t, dtype)
    one = np.ones_like(r)
    rs, ts = np.sqrt(one - r * r), np.sqrt(one - t * t)
    a = t ** q * p * r ** (p - 2) * (p * r * r - (p - 1))
    b = r ** p * q * t ** (q - 2) * (q * t * t - (q - 1))
    c = -p * q * t ** (q - 1) * r ** (p - 1) * rs * ts

    def inv2(m00, m01, m11):
        det = m00 * m11 - m01 * m01
        return m11 / det, -m01 / det, m00 / det

    P = inv2(p + a, c, q + b)
    M = inv2(p - a, -c, q - b)
    gr = p * r ** (p - 1) * rs * t ** q
    gt = q * t ** (q - 1) * ts * r ** p

    def form(A, u0, u1):
        return A[0] * u0 * u0 + 2 * A[1] * u0 * u1 + A[2] * u1 * u1

    # value rows of the cross block: h(n) -> (0, 0, -gr, -gt), h(n') -> (gr, gt, 0, 0)
    both = form(P, gr, gt) + form(M, gr, gt)
    diff = form(P, gr, gt) - form(M, gr, gt)
    out = np.empty(r.shape + (2, 2), dtype=r.dtype)
    out[..., 0, 0] = out[..., 1, 1] = 1 - 0.5 * both
    out[..., 0, 1] = out[..., 1, 0] = r ** p * t ** q + 0.5 * diff
    return out


def f_L(p, q, r, t):
    return 1.0 / ((2 * math.pi) ** 2 * math.sqrt(np.linalg.det(assemble_sigma_L(p, q, r, t))))


@lru_cache(maxsize=None)
def same_point_hessian_cov(p, q, a, b):
    """Same-point covariance of two Hessian entries, from the oracle at r = t = 1."""
    return fd_covariance_oracle(p, q, 1.0, 1.0, a, b)


def conditional_corner_variance(p, q, r, t, return_variance=False):
    """Conditional variance of E_1E_1 h(n) r_* + E_1E^1 h(n) t_* given the pivots.

    Returns the ratio to (2 - r^2 - t^2)^2, or ``(ratio, variance)``.
    """
    rs, ts = math.sqrt(1 - r * r), math.sqrt(1 - t * t)
    h11 = ((SUB, 1), (SUB, 1))
    hmix = ((SUB, 1), (SUP, 1))
    coef = (rs, ts)
    ents = (h11, hmix)
    var = 0.0
    for ca, ea in zip(coef, ents):
        for cb, eb in zip(coef, ents):
            var += ca * cb * same_point_hessian_cov(p, q, ea, eb)
    cov = np.zeros(4)
    for c, e in zip(coef, ents):
        for k, op in enumerate(PIVOTS):
            cov[k] += c * table_entry(p, q, 1.0, 1.0, e, (op,))
            cov[2 + k] += c * table_entry(p, q, r, t, e, (op,))
    sl = assemble_sigma_L(p, q, r, t)
    cond = var - cov @ np.linalg.solve(sl, cov)
    ratio = cond / (2 - r * r - t * t) ** 2
    return (ratio, cond) if return_variance else ratio


@dataclass
class CovarianceBundle:
    params: ModelParams
    pt: OverlapPoint
    sigma_L: np.ndarray
    sigma_E: np.ndarray
    f_L: float
    det_closed: float
    value_block: np.ndarray
    cross_block: np.ndarray
    det_assembled: float = field(default=float("nan"))

    def to_dict(self):
        return {
            "params": self.params.to_dict(),
            "r": self.pt.r,
            "t": self.pt.t,
            "sigma_L": self.sigma_L.tolist(),
            "sigma_E": self.sigma_E.tolist(),
            "f_L": self.f_L,
            "det_closed": self.det_closed,
            "det_assembled": self.det_assembled,
            "value_block": self.value_block.tolist(),
            "cross_block": self.cross_block.tolist(),
        }


def covariance_bundle(params: ModelParams, pt: OverlapPoint) -> CovarianceBundle:
    p, q, r, t = params.p, params.q, pt.r, pt.t
    sl = assemble_sigma_L(p, q, r, t)
    vb, cb = value_cross_blocks(p, q, r, t)
    det = float(np.linalg.det(sl))
    return CovarianceBundle(
        params=params, pt=pt, sigma_L=sl, sigma_E=assemble_sigma_E(p, q, r, t),
        f_L=1.0 / ((2 * math.pi) ** 2 * math.sqrt(det)),
        det_closed=float(det_sigma_L_closed(p, q, r, t)),
        value_block=vb, cross_block=cb, det_assembled=det,
    )
