import math

import numpy as np
import pytest

from glass_complexity import montecarlo as mc
from glass_complexity.mde import measure_from_density, semicircle_density
from glass_complexity.params import DomainError, ModelParams


def test_spec_validation_and_swap():
    with pytest.raises(DomainError):
        mc.BlockMatrixSpec(0, 3, 1, 1, 1)
    with pytest.raises(DomainError):
        mc.BlockMatrixSpec(3, 3, 1, -1, 1)
    spec = mc.BlockMatrixSpec(3, 5, 0.1, 0.2, 0.3)
    assert spec.swapped() == mc.BlockMatrixSpec(5, 3, 0.3, 0.2, 0.1)
    assert spec.size == 8


def test_hessian_bulk_blocks():
    spec = mc.BlockMatrixSpec.hessian_bulk(ModelParams(3, 4, 0.4), 100)
    assert (spec.n1, spec.n2) == (39, 59)
    assert spec.v11 == pytest.approx(2 / 300) and spec.v12 == pytest.approx(1 / 100)
    assert spec.v22 == pytest.approx(3 / 400)
    assert mc.split_dimensions(0.5, 101) == (51, 50)
    assert mc.split_dimensions(0.01, 50) == (2, 48)


def test_sample_is_symmetric_and_reproducible():
    spec = mc.BlockMatrixSpec(7, 4, 0.5, 0.3, 0.2)
    a = mc.sample_block_goe(spec, 5, 2)
    assert np.array_equal(a, a.T)
    assert np.array_equal(a, mc.sample_block_goe(spec, 5, 2))
    assert not np.array_equal(a, mc.sample_block_goe(spec, 5, 3))


def test_block_entry_variances():
    spec = mc.BlockMatrixSpec(2, 2, 0.5, 0.3, 0.2)
    draws = np.array([mc.sample_block_goe(spec, 1, k) for k in range(10_000)])
    n = draws.shape[0]
    checks = [(draws[:, 0, 1], 0.5), (draws[:, 0, 2], 0.3), (draws[:, 2, 3], 0.2),
              (draws[:, 0, 0], 1.0), (draws[:, 3, 3], 0.4)]
    for x, var in checks:
        se = var * math.sqrt(2 / (n - 1))
        assert abs(x.var(ddof=1) - var) <= 3 * se
    # the coupling block is independent of the diagonal blocks
    assert abs(np.corrcoef(draws[:, 0, 2], draws[:, 0, 1])[0, 1]) < 4 / math.sqrt(n)


def test_plain_goe_matches_semicircle():
    n = 400
    spec = mc.BlockMatrixSpec(n, 0, 1 / n, 1 / n, 1 / n)
    eigs = np.linalg.eigvalsh(mc.sample_block_goe(spec, 3))
    sc = measure_from_density(semicircle_density(1.0), 2.0)
    assert mc.wasserstein1_to_model(eigs, sc) <= 0.05


def test_w1_of_exact_quantiles_is_small():
    sc = measure_from_density(semicircle_density(1.0), 2.0)
    u = (np.arange(20000) + 0.5) / 20000
    exact = mc._model_quantiles(sc, u)
    assert mc.wasserstein1_to_model(exact, sc) < 1e-4
    assert mc.wasserstein1_to_model(exact + 0.1, sc) == pytest.approx(0.1, abs=1e-3)


def test_swap_relabelling_gives_same_spectrum():
    spec = mc.BlockMatrixSpec(6, 9, 0.3, 0.1, 0.5)
    z11, z12, z22 = mc.draw_normals(spec, 9)
    a = np.linalg.eigvalsh(mc.block_from_normals(spec, z11, z12, z22))
    b = np.linalg.eigvalsh(mc.block_from_normals(spec.swapped(), z22, z12.T, z11))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_spectral_check_small_and_deterministic(m333):
    p = ModelParams(3, 3, 0.5)
    a = mc.spectral_check(p, 60, 4, seed=2, workers=1, measure=m333)
    b = mc.spectral_check(p, 60, 4, seed=2, workers=3, measure=m333)
    assert a.to_dict() == b.to_dict()
    assert a.extra["blocks"] == [29, 29]
    assert "runtime" not in a.to_dict() and "runtime" in a.to_dict(include_runtime=True)
    with pytest.raises(DomainError):
        mc.spectral_check(p, 10, 1, seed=0, measure=m333)


def test_w1_decreases_for_asymmetric_model(measure):
    p = ModelParams(2, 3, 0.4)
    m = measure(2, 3, 0.4)
    w = [mc.spectral_check(p, N, 20, seed=0, measure=m).w1 for N in (100, 200, 400)]
    assert w[0] > w[1] > w[2]
    assert w[2] <= 0.05


def test_keep_eigenvalues_flag(m333):
    res = mc.spectral_check(ModelParams(3, 3, 0.5), 30, 2, seed=1, measure=m333, keep_eigenvalues=True)
    assert len(res.extra["eigenvalues"]) == 2 * 28


def random_unit(rng, n, size=None):
    x = rng.standard_normal((size, n) if size else n)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def test_hamiltonian_unit_variance_and_covariance():
    rng = np.random.default_rng(0)
    n1 = n2 = 4
    s, t = random_unit(rng, n1), random_unit(rng, n2)
    # a second point with overlaps (r, u) with the first
    r, u = 0.7, -0.6
    def tilt(x, c):
        w = rng.standard_normal(x.size)
        w -= (w @ x) * x
        return c * x + math.sqrt(1 - c * c) * w / np.linalg.norm(w)
    s2, t2 = tilt(s, r), tilt(t, u)
    vals = np.array([[mc.sample_hamiltonian(2, 2, n1, n2, k).energy(a, b)[0] for a, b in ((s, t), (s2, t2))]
                     for k in range(1000)])
    var = vals[:, 0].var(ddof=1)
    assert abs(var - 1) <= 3 * math.sqrt(2 / 999)
    c = np.mean(vals[:, 0] * vals[:, 1])
    assert abs(c - r ** 2 * u ** 2) <= 4 * math.sqrt((1 + (r * u) ** 4) / 1000)


def test_hamiltonian_budget():
    with pytest.raises(DomainError, match="budget"):
        mc.sample_hamiltonian(3, 3, 100, 100, 0)
    with pytest.raises(DomainError):
        mc.sample_hamiltonian(1, 3, 5, 5, 0)


@pytest.mark.parametrize("pq", [(2, 3), (3, 3)])
def test_gradient_and_hessian_match_finite_differences(pq):
    ham = mc.sample_hamiltonian(*pq, 5, 6, seed=4)
    rng = np.random.default_rng(1)
    for _ in range(10):
        s, t = random_unit(rng, 5), random_unit(rng, 6)
        _, gs, gt = ham.energy_and_grad(s, t)
        g = np.concatenate([gs[0], gt[0]])
        x = np.concatenate([s, t])
        f = lambda y: ham.energy(y[:5], y[5:])[0]
        h = 1e-6
        fd = np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(11)])
        assert np.max(np.abs(fd - g)) <= 1e-6 * max(1.0, np.max(np.abs(g)))
        # Riemannian gradient: the tangent part of the Euclidean one
        rs = mc._tangent(s[None], gs)[0]
        assert abs(rs @ s) < 1e-12
        H = ham.hessian(s, t)
        gfun = lambda y: np.concatenate([a[0] for a in ham.energy_and_grad(y[:5], y[5:])[1:]])
        fdH = np.array([(gfun(x + h * e) - gfun(x - h * e)) / (2 * h) for e in np.eye(11)])
        assert np.max(np.abs(fdH - H)) <= 1e-5 * max(1.0, np.max(np.abs(H)))


def test_ground_state_search_small():
    ham = mc.sample_hamiltonian(2, 2, 6, 6, seed=3)
    a = mc.ground_state_search(ham, restarts=30, seed=8, chunk=7, workers=1)
    b = mc.ground_state_search(ham, restarts=30, seed=8, chunk=7, workers=3)
    assert a.to_dict() == b.to_dict()
    gn = np.array(a.extra["grad_norm"])
    conv = np.array(a.extra["converged"])
    assert np.all(gn[conv] <= 1e-8) and conv.sum() >= 25
    assert a.extra["best_h_over_N"] == min(np.array(a.ground_states)[conv])
    S, T = a.extra["_minimisers"]
    assert np.allclose(np.linalg.norm(S, axis=1), 1) and np.allclose(np.linalg.norm(T, axis=1), 1)
    # p and q even: h is invariant under s -> -s and t -> -t separately, so minima come in sign pairs
    pairs = mc.antipodal_pairs(S, T, np.array(a.ground_states), top=30)
    assert pairs


def test_field_parity():
    ham = mc.sample_hamiltonian(3, 3, 5, 5, seed=0)
    rng = np.random.default_rng(2)
    s, t = random_unit(rng, 5), random_unit(rng, 5)
    e = ham.energy(s, t)[0]
    assert ham.energy(-s, -t)[0] == pytest.approx(e, abs=1e-14)   # (-1)^(p+q) = 1
    assert ham.energy(-s, t)[0] == pytest.approx(-e, abs=1e-14)


def test_det_bound_small():
    rep = mc.det_bound_check(12, [0.1, 1.0], seed=3, instances=200, workers=2)
    assert rep["passed"] and rep["violations"] == 0
    rep2 = mc.det_bound_check(12, [0.1, 1.0], seed=3, instances=200, workers=1)
    rep.pop("runtime"), rep2.pop("runtime")
    assert rep == rep2


def test_det_bound_without_coupling():
    rep = mc.det_bound_check(10, [0.01, 1.0], seed=0, instances=200, coupling=False)
    assert rep["passed"]
    L, V, G, E, v = mc.det_bound_instance(10, 0, 0, coupling=False)
    assert not V.any()
    # with V = 0 the determinant factors and the L part alone is covered by W
    assert abs(np.linalg.det(L)) <= mc._w_bound(L, V, v, 1.0)


def test_det_bound_ratio_nondecreasing_in_eps():
    rep = mc.ratio_monotonicity_scan(12, seed=1, instances=30)
    assert rep["nondecreasing"]


def test_det_bound_domain():
    with pytest.raises(DomainError):
        mc.det_bound_check(5, 1.0, 0)
    with pytest.raises(DomainError):
        mc.det_bound_check(10, [0.0], 0)


def test_streams_are_keyed():
    a = mc.rng_stream(1, 2, 3).standard_normal(4)
    assert np.array_equal(a, mc.rng_stream(1, 2, 3).standard_normal(4))
    assert not np.array_equal(a, mc.rng_stream(1, 2, 4).standard_normal(4))


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv("GLASS_COMPLEXITY_WORKERS", "3")
    assert mc.default_workers() == 3
    monkeypatch.delenv("GLASS_COMPLEXITY_WORKERS")
    assert mc.default_workers() == 1
