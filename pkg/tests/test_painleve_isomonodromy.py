import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.special import k0, k1

from massive_sholo import painleve_isomonodromy as pi


@pytest.fixture(scope="module")
def lam():
    return pi.shoot_connection()


@pytest.fixture(scope="module")
def sol(lam):
    return pi.solve_h0(-12.0, -1e-4, 4000, lam)


def test_short_distance_constant_via_glaisher():
    # zeta'(-1) = 1/12 - ln A with A the Glaisher-Kinkelin constant
    alt = 2 ** (1 / 6) * math.exp(-1 / 8) * float(mpmath.glaisher) ** 1.5
    assert pi.short_distance_constant() == pytest.approx(alt, rel=1e-14)
    assert pi.massless_two_point(0.5) == pytest.approx(pi.short_distance_constant() ** 2)


@pytest.mark.parametrize("r_min", [-3.0, -6.0])
def test_tail_integral_matches_quadrature(r_min):
    lam = 0.3
    f = lambda s: s * 16 * lam ** 2 * (k1(-4 * s) ** 2 - k0(-4 * s) ** 2)
    ref = quad(f, -np.inf, r_min, epsabs=0, epsrel=1e-12)[0]
    assert pi.tail_integral(lam, r_min) == pytest.approx(ref, rel=1e-9)


@given(st.floats(0.0, 1.0), st.floats(-8.0, -1.0))
def test_tail_integral_quadratic_in_amplitude(lam, r):
    assert pi.tail_integral(2 * lam, r) == pytest.approx(4 * pi.tail_integral(lam, r), rel=1e-12, abs=1e-300)


def test_zero_amplitude_is_trivial():
    s = pi.solve_h0(-12.0, -0.02, 50, 0.0)
    assert np.all(s.h0 == 0.0)


def test_classifier_brackets(lam):
    assert pi.classify_trajectory(0.9 * lam) == "decays"
    assert pi.classify_trajectory(1.1 * lam) == "blows_up"
    with pytest.raises(pi.PainleveBlowUp):
        pi.solve_h0(-12.0, -1e-3, 200, 1.5 * lam)


def test_connection_amplitude(lam):
    assert lam == pytest.approx(1 / math.pi, abs=1e-9)
    with pytest.raises(ValueError):
        pi.shoot_connection(target="other")


def test_separatrix_log_growth(sol):
    # d h0 / d ln|r| creeps towards -1/2 (slowly, with logarithmic corrections)
    slopes = [r * sol.at(r)[1] for r in (-1e-1, -1e-2, -1e-3, -1e-4)]
    assert all(x > y > -0.5 for x, y in zip(slopes, slopes[1:]))


def test_residuals(sol):
    rep = pi.residual_report(sol)
    for key in ("ode", "painleve3_exp", "final_identity", "eq1", "eq2", "eq3"):
        assert rep[key] < 1e-7, key
    for key in ("eq4", "eq5", "r1"):
        assert rep[key] < 1e-12, key
    assert rep["painleve3_log"] > 1.0


def test_short_distance_normalisation(sol):
    L0 = pi.short_distance_offset(sol)
    prev = math.inf
    for am in (1e-2, 1e-3, 1e-4):
        tp = pi.two_point(am, -1.0, sol, L0)
        gap = abs(tp.normalised - 1)
        assert gap < prev
        prev = gap
        assert tp.free_value / tp.plus_value == pytest.approx(math.tanh(sol.at(-am)[0]), rel=1e-12)


def test_two_point_decays(sol):
    L0 = pi.short_distance_offset(sol)
    # the plus correlation settles on a constant; its connected part and the free one decay
    tps = [pi.two_point(a, -1.0, sol, L0) for a in (0.5, 1, 2, 4, 8)]
    conn = [t.plus_value - tps[-1].plus_value for t in tps[:-1]]
    assert all(x > y for x, y in zip(conn, conn[1:]))
    free = [t.free_value / t.plus_value for t in tps]
    assert all(x > y for x, y in zip(free, free[1:]))
    with pytest.raises(ValueError):
        pi.two_point(1.0, 1.0, sol, L0)


def test_log_derivative_matches_fd(sol):
    L0 = pi.short_distance_offset(sol)
    m, a, h = -1.0, 0.7, 1e-4
    lnp = lambda x: math.log(pi.two_point(x, m, sol, L0).plus_value)
    fd = (lnp(a + h) - lnp(a - h)) / (2 * h)
    assert fd == pytest.approx(m * pi.log_two_point_derivative(sol, a * m), rel=1e-6)
    assert pi.log_derivative_A(sol, a * m) == pytest.approx(-0.5 * pi.log_two_point_derivative(sol, a * m), rel=1e-12)
    assert pi.full_plane_A1(sol, m, -a, a) == pytest.approx(m * pi.log_derivative_A(sol, m * a))


def test_grid_derivative_exactness():
    r = np.linspace(-3, -1, 41)
    d = pi.grid_derivative(r, r ** 4)
    assert np.nanmax(np.abs(d - 4 * r ** 3)) < 1e-10
    g = pi.geometric_grid(-5.0, -0.1, 400)
    d = pi.grid_derivative(g, np.sin(g))
    assert np.nanmax(np.abs(d - np.cos(g))) < 1e-6
    assert np.isnan(d[:2]).all() and np.isnan(d[-2:]).all()
    with pytest.raises(ValueError):
        pi.grid_derivative(np.array([-3, -2.5, -1.5, -1.2, -1.0, -0.5]), np.zeros(6))
    with pytest.raises(ValueError):
        pi.grid_derivative(np.linspace(-3, -1, 11), np.sin(20 * np.linspace(-3, -1, 11)), max_error=1e-8)


def test_coefficient_system_uses_supplied_Y():
    r = np.linspace(-2, -1, 21)
    A, B, C = 0.1 * r, 0.3 + 0 * r, 0.2 + 0 * r
    auto = pi.coefficient_system_residuals(r, A, B, C)
    assert np.nanmax(np.abs(auto["eq5"])) < 1e-14
    m = -0.5
    D1 = np.zeros_like(r)
    Ei = -auto["Y"] * m * m
    given_ = pi.coefficient_system_residuals(r, A, B, C, D1=D1, Ei=Ei, m=m)
    assert np.allclose(given_["Y"], auto["Y"])
    with pytest.raises(ValueError):
        pi.coefficient_system_residuals(r, A, B, C, D1=D1, Ei=Ei)


@given(st.floats(-1, 1), st.floats(-1, 1))
def test_correlation_ratio_of_gradient_field(c, d):
    # A1 = d_x phi, Ai = -d_y phi integrates to exp(phi(end) - phi(start))
    phi = lambda x, y: c * x * x + d * y
    t = np.linspace(0, 1, 2001)
    x, y = -1 + 2 * t, 0.5 * t
    ratio = pi.correlation_ratio(x + 1j * y, 2 * c * x, -d + 0 * y)
    assert ratio == pytest.approx(math.exp(phi(x[-1], y[-1]) - phi(x[0], y[0])), rel=1e-6)


def test_correlation_ratio_rejects_nonfinite():
    with pytest.raises(ValueError):
        pi.correlation_ratio([0, 1j], [np.nan, 0], [0, 0])
