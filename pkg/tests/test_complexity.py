import math

import numpy as np
import pytest
from scipy import integrate

from glass_complexity.complexity import (RootNotFoundError, c1_times_3, complexity_report, constant_C, f_gamma,
                                         find_e0, log_potential, log_potential_gridded, omega_sc,
                                         qhat_coefficient, qhat_unipartite, regularized_log_potential, sigma,
                                         sigma_hat, sigma_upper_bound, sign_changes, theta, threshold_eth)
from glass_complexity.mde import measure_from_density, semicircle_density, spectral_density
from glass_complexity.params import DomainError, ModelParams


def semicircle_quadrature(E, variance=1.0):
    """Brute-force int log|x - E| rho_sc(x) dx with the log point passed to quad."""
    rad = 2 * math.sqrt(variance)
    rho = semicircle_density(variance)
    f = lambda x: math.log(abs(x - E)) * float(rho(x)) if x != E else 0.0
    pts = [E] if -rad < E < rad else None
    val, _ = integrate.quad(f, -rad, rad, points=pts, limit=400, epsabs=1e-13, epsrel=1e-13)
    return val


def test_constant_C_examples():
    assert constant_C(ModelParams(2, 2, 0.5)) == pytest.approx(0.5 * (1 + math.log(4)), abs=1e-14)
    assert constant_C(ModelParams(96, 96, 0.5)) == pytest.approx(0.5 * (1 + math.log(192)), abs=1e-14)
    assert abs(constant_C(ModelParams(96, 96, 0.5)) - 3.128748) < 1e-6
    p = ModelParams(3, 7, 0.3)
    assert constant_C(p) == pytest.approx(constant_C(p.swapped()), abs=1e-14)


def test_omega_sc_values():
    assert omega_sc(0.0) == -0.5
    assert omega_sc(2.0) == pytest.approx(0.5, abs=1e-15)
    # both branches meet at |E| = 2
    assert abs(omega_sc(2 - 1e-12) - omega_sc(2 + 1e-12)) < 1e-5
    assert omega_sc(-2.7) == omega_sc(2.7)


@pytest.mark.parametrize("E", [0.0, 0.7, 1.9, 2.0, 3.0, 5.5, -3.0])
def test_omega_sc_matches_quadrature(E):
    assert abs(omega_sc(E) - semicircle_quadrature(E)) <= 1e-8


def test_omega_sc_large_E():
    assert abs(omega_sc(1e6) - math.log(1e6)) < 1e-6


def test_log_potential_scaling_on_collapsed_measure(m333):
    s = 5 / 6
    expected = math.log(math.sqrt(s)) + omega_sc(3 / math.sqrt(s))
    assert abs(log_potential(m333, 3.0) - expected) <= 1e-4


def test_log_potential_dilation_identity_on_semicircle():
    for a in (0.5, 1.3, 4.0):
        m = measure_from_density(semicircle_density(a * a), 2 * a)
        for E in (-3.1, 0.0, 0.4, 2.5):
            assert abs(log_potential(m, E) - (math.log(a) + omega_sc(E / a))) <= 1e-8


def test_log_potential_large_E_and_evenness(measure):
    m = measure(2, 3, 0.4)
    assert abs(log_potential(m, 1e6) - math.log(1e6)) <= 1e-6
    es = np.linspace(0, 4, 41)
    assert np.max(np.abs(log_potential(m, es) - log_potential(m, -es))) <= 1e-8


def test_series_and_gridded_routes_agree(measure):
    m = measure(2, 3, 0.4)
    es = np.array([0.0, 0.5, 1.5, 2.5, 4.0])
    assert np.max(np.abs(log_potential(m, es) - log_potential_gridded(m, es))) < 1e-4


def test_regularized_log_potential(m333):
    E = 2 * m333.edge
    eps = 1e-3
    dist = E - m333.edge
    om = log_potential(m333, E)
    assert 0 <= regularized_log_potential(m333, E, eps) - om <= eps ** 2 / (2 * dist ** 2)
    es = np.linspace(-3, 3, 13)
    for e in (1e-3, 0.1, 1.0):
        r = regularized_log_potential(m333, es, e)
        assert np.max(np.abs(r - r[::-1])) <= 1e-8
        assert np.all(r >= log_potential(m333, es) - 1e-12)
        assert np.all(regularized_log_potential(m333, es, 2 * e) >= r)
    with pytest.raises(DomainError):
        regularized_log_potential(m333, 0.0, 0.0)


def test_theta_sigma_relation(m333):
    p = ModelParams(3, 3, 0.5)
    for E in (-2.5, -1.0, 0.3):
        assert theta(p, m333, E) == pytest.approx(-0.5 * E * E + log_potential(m333, E), abs=1e-14)
        assert sigma(p, m333, E) == pytest.approx(constant_C(p) + theta(p, m333, E), abs=1e-14)
        assert abs(sigma(p, m333, E) - sigma(p, m333, -E)) <= 1e-8


def test_threshold_examples():
    assert threshold_eth(ModelParams(96, 96, 0.3)) == pytest.approx(math.sqrt(2 * math.log(95)), abs=1e-15)
    assert threshold_eth(ModelParams(2, 2, 0.5)) == 0.0
    for g in (0.2, 0.5, 0.9):
        assert abs(threshold_eth(ModelParams(10, 10, g)) - 2.09629) < 1e-5


def test_threshold_value_to_three_decimals():
    # the quoted 3.017... is a truncation of sqrt(2 log 95) = 3.01790...
    e = threshold_eth(ModelParams(96, 96, 0.5))
    assert math.floor(e * 1000) / 1000 == 3.017


def test_sigma_upper_bound(measure):
    for key in [(3, 3, 0.5), (96, 96, 0.5)]:
        params = ModelParams(*key)
        rep = complexity_report(params, measure(*key))
        assert np.all(rep.sigma <= rep.upper_bound + 1e-8)
    p = ModelParams(5, 4, 0.3)
    assert sigma_upper_bound(p, 0.0) == pytest.approx(constant_C(p) - 0.5, abs=1e-14)
    es = np.linspace(0, 5, 11)
    assert np.array_equal(sigma_upper_bound(p, es), sigma_upper_bound(p, -es))


def test_sigma_hat_constant():
    assert abs(sigma_hat(0.5, math.sqrt(2 * math.log(95))) - (-0.002782)) <= 1e-5
    with pytest.raises(DomainError):
        sigma_hat(1.0, 3.0)


def test_f_gamma_properties():
    assert f_gamma(0.0, 3.0) == pytest.approx(1.0, abs=1e-15)
    assert f_gamma(1e-9, 3.0) == pytest.approx(1.0, abs=1e-4)
    for g in np.linspace(0.01, 0.99, 25):
        assert f_gamma(g, 3.0) == pytest.approx(f_gamma(1 - g, 3.0), abs=1e-13)
    gammas = np.arange(0, 1.0005, 1e-3)
    assert max(f_gamma(float(g), 3.0) for g in gammas) <= 1 + 1e-9
    with pytest.raises(DomainError):
        f_gamma(0.5, 1.0)


def test_unipartite_constants():
    assert abs(qhat_coefficient() - (-0.036)) <= 1e-3
    r = np.linspace(1e-3, 0.61, 200)
    # the coefficient bounds qhat(r) / r^2 from above on the interval
    assert np.all(qhat_unipartite(10, r) / r ** 2 <= qhat_coefficient() + 1e-12)
    assert abs(c1_times_3() - 2.98) <= 1e-2
    assert c1_times_3() > 2 * math.sqrt(2)


def test_find_e0_root_and_report(m333):
    params = ModelParams(3, 3, 0.5)
    e0 = find_e0(params, m333)
    assert e0 > m333.edge
    assert abs(sigma(params, m333, -e0)) <= 1e-8
    rep = complexity_report(params, m333)
    checks = rep.checks()
    assert checks["sigma_even"] and checks["sigma_negative_left_of_e0"]
    assert checks["sigma_below_upper_bound"] and checks["e_inf_lt_e0"]
    np.testing.assert_allclose(rep.sigma, rep.c_const - rep.e_grid ** 2 / 2 + rep.omega, atol=1e-14)
    assert abs(rep.e_zero - 1.95866599895) < 1e-8


def test_sigma_is_concave_left_of_edge(m333):
    # Omega'' = -int (x-E)^-2 dmu < 0 and -E^2/2 is concave, so Sigma is concave there
    params = ModelParams(3, 3, 0.5)
    es = np.linspace(-6, -m333.edge - 1e-2, 400)
    sec = np.diff(sigma(params, m333, es), 2)
    assert sec.max() <= 1e-8


def test_e0_symmetry_under_swap(measure):
    a = find_e0(ModelParams(96, 96, 0.3), measure(96, 96, 0.3))
    b = find_e0(ModelParams(96, 96, 0.7), measure(96, 96, 0.7))
    assert abs(a - b) <= 1e-6


def test_e0_between_edge_and_threshold(measure):
    params = ModelParams(96, 96, 0.5)
    m = measure(96, 96, 0.5)
    e0 = find_e0(params, m)
    assert m.edge < e0 < threshold_eth(params)
    # dense scan oracle for the root
    es = np.linspace(m.edge + 1e-4, 4.0, 4001)
    vals = sigma(params, m, -es)
    k = np.flatnonzero(np.diff(np.sign(vals)))[-1]
    assert es[k] <= e0 <= es[k + 1]


def test_no_sign_change_raises():
    # a wide semicircle: -E^2/2 dominates beyond the edge, so Sigma < 0 there
    params = ModelParams(3, 3, 0.5)
    m = measure_from_density(semicircle_density(100.0), 20.0)
    roots, bracket = sign_changes(params, m)
    assert roots == [] and bracket[0] < bracket[1]
    with pytest.raises(RootNotFoundError):
        find_e0(params, m)
