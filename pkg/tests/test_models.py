import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from conftest import ORACLES, frac
from smcmc.errors import DomainError, InvalidGeometryError, ModelError
from smcmc.models import (
    EXP_CLAMP,
    DispersionParams,
    GHSkewedTPoissonModel,
    GridGeometry,
    LinearGaussianModel,
    build_spatial_covariance,
    log_bessel_k,
    log_bessel_k_ratio,
    simulate_trajectory,
)


# --- geometry and dispersion -------------------------------------------------


@pytest.mark.parametrize("d", [2, 10, 0, -4])
def test_non_square_dimension_rejected(d):
    with pytest.raises(InvalidGeometryError):
        GridGeometry.square(d)


def test_duplicate_coordinates_rejected():
    coords = np.array([[1, 1], [1, 2], [2, 1], [1, 1]], dtype=float)
    with pytest.raises(InvalidGeometryError):
        GridGeometry(4, coords)


def test_grid_layout():
    geom = GridGeometry.square(9)
    assert geom.coords.shape == (9, 2)
    assert geom.coords.min() == 1 and geom.coords.max() == 3


@pytest.mark.parametrize("d", [4, 16, 64, 144, 400])
def test_covariance_exactly_symmetric_and_spd(d):
    cov = build_spatial_covariance(GridGeometry.square(d), DispersionParams(3.0, 0.01, 20.0))
    assert np.array_equal(cov, cov.T)
    np.linalg.cholesky(cov)
    assert np.allclose(np.diag(cov), 3.01)


def test_covariance_entries():
    cov = build_spatial_covariance(GridGeometry.square(4), DispersionParams(3.0, 0.01, 20.0))
    # (1,1) and (2,2) are sqrt(2) apart
    assert cov[0, 3] == pytest.approx(3.0 * math.exp(-2.0 / 20.0), rel=1e-15)
    assert cov[0, 1] == pytest.approx(3.0 * math.exp(-1.0 / 20.0), rel=1e-15)


def test_bad_dispersion():
    with pytest.raises(ModelError):
        DispersionParams(3.0, 0.01, 0.0)


# --- log Bessel K --------------------------------------------------------------


@pytest.mark.parametrize("case", ORACLES["bessel"], ids=lambda c: f"K{c['order']}({c['z']})")
def test_log_bessel_against_high_precision(case):
    got = log_bessel_k(case["order"], case["z"])
    ref = float(case["log_k"])
    assert abs(got - ref) <= 1e-10 * abs(ref)


def test_half_order_closed_form():
    for z in [1e-3, 0.1, 1.0, 7.5, 300.0]:
        exact = 0.5 * math.log(math.pi / (2 * z)) - z
        assert log_bessel_k(0.5, z) == pytest.approx(exact, rel=1e-13, abs=1e-13)


@given(order=st.floats(0, 300), z=st.floats(1e-8, 1e6))
@settings(max_examples=200, deadline=None)
def test_reflection_symmetry_bit_identical(order, z):
    assert log_bessel_k(-order, z) == log_bessel_k(order, z)


@given(order=st.floats(0.0, 120.0), z=st.floats(0.05, 500.0))
@settings(max_examples=200, deadline=None)
def test_scalar_and_array_paths_agree(order, z):
    arr = log_bessel_k(order, np.array([z, z]))
    assert np.all(np.isfinite(arr))
    assert arr[0] == pytest.approx(log_bessel_k(order, z), rel=1e-12, abs=1e-12)


@given(order=st.floats(0.0, 60.0), z=st.floats(0.1, 200.0))
@settings(max_examples=100, deadline=None)
def test_ratio_satisfies_recurrence(order, z):
    # K_{a+1} = K_{a-1} + 2a/z K_a  =>  r(a) = 1/r(a-1) + 2a/z
    if order < 1:
        return
    _, r_prev = log_bessel_k_ratio(order - 1, z)
    _, r = log_bessel_k_ratio(order, z)
    assert r == pytest.approx(1.0 / r_prev + 2 * order / z, rel=1e-9)


@pytest.mark.parametrize("z", [0.0, -1.0, float("nan")])
def test_bessel_domain(z):
    with pytest.raises(DomainError):
        log_bessel_k(1.0, z)
    with pytest.raises(DomainError):
        log_bessel_k(1.0, np.array([1.0, z]))


# --- linear-Gaussian model -----------------------------------------------------


def test_simulation_deterministic(gauss4):
    a = simulate_trajectory(gauss4, 5, np.random.default_rng(3))
    b = simulate_trajectory(gauss4, 5, np.random.default_rng(3))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_simulation_requires_positive_horizon(gauss4, rng):
    with pytest.raises(ValueError):
        simulate_trajectory(gauss4, 0, rng)


def test_noiseless_limit():
    x0 = np.array([1.0, -2.0, 0.5, 3.0])
    model = LinearGaussianModel(0.9, 1e-30 * np.eye(4), 0.0, x0=x0)
    xs, ys = simulate_trajectory(model, 6, np.random.default_rng(0))
    expected = np.array([0.9**t * x0 for t in range(1, 7)])
    assert np.allclose(xs, expected, atol=1e-12)
    assert np.allclose(ys, xs)


def test_lag_one_autocorrelation():
    model = LinearGaussianModel(0.9, np.eye(1), 1.0)
    xs, _ = simulate_trajectory(model, 40000, np.random.default_rng(11))
    x = xs[:, 0]
    rho = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert rho == pytest.approx(0.9, abs=0.01)


def test_linear_gaussian_hessian_example():
    model = LinearGaussianModel(0.9, np.eye(1), 1.0)
    assert model.neg_expected_hessian(np.zeros(1)) == pytest.approx(np.array([[2.0]]))


def test_batched_densities(gauss4, gh4, rng):
    for model in (gauss4, gh4):
        xp = rng.standard_normal((5, 4))
        x = rng.standard_normal((5, 4))
        batch = model.transition_logpdf(x, xp)
        single = [model.transition_logpdf(x[i], xp[i]) for i in range(5)]
        assert np.allclose(batch, single, rtol=1e-12)
        lp, g = model.transition_logpdf_grad(x, xp)
        assert g.shape == (5, 4)
        assert np.allclose(lp, batch, rtol=1e-12)


# --- GH skewed-t / Poisson model ------------------------------------------------


def test_sigma_tilde_hand_value():
    model = GHSkewedTPoissonModel(0.9, np.eye(1), 7.0, 0.3)
    assert model.state_cov[0, 0] == pytest.approx(frac(ORACLES["sigma_tilde_nu7_g03"]), rel=1e-14)
    assert model.state_cov[0, 0] == pytest.approx(1.5176, rel=1e-12)


def test_sigma_tilde_gaussian_limit():
    model = GHSkewedTPoissonModel(0.9, np.eye(4), 1e9, 0.0)
    assert np.allclose(model.state_cov, np.eye(4), atol=1e-8)


@pytest.mark.parametrize("nu", [4.0, 3.0, 1.0])
def test_nu_at_most_four_rejected(nu):
    with pytest.raises(ModelError):
        GHSkewedTPoissonModel(0.9, np.eye(2), nu, 0.3)


def test_skewed_t_parameterization():
    model = GHSkewedTPoissonModel.on_grid(4, nu=7.0)
    assert model.gh_index == -3.5 and model.chi == 7.0 and model.psi == 0.0
    assert model.bessel_order == pytest.approx(3.5 + 2.0)


def _mvt_log_kernel(x, sigma, nu):
    q = x @ np.linalg.solve(sigma, x)
    return -0.5 * (nu + len(x)) * math.log1p(q / nu)


def test_tiny_skew_matches_multivariate_t():
    sigma = build_spatial_covariance(GridGeometry.square(4), DispersionParams())
    pts = np.random.default_rng(5).standard_normal((20, 4)) * 2
    zero = np.zeros(4)
    for nu in (5.0, 9.0, 30.0):
        model = GHSkewedTPoissonModel(0.0, sigma, nu, 1e-7)
        for x in pts:
            got = model.transition_logpdf(x, zero) - model.transition_logpdf(zero, zero)
            ref = _mvt_log_kernel(x, sigma, nu) - _mvt_log_kernel(zero, sigma, nu)
            assert got == pytest.approx(ref, abs=1e-5)


def test_heavy_tail_approaches_gaussian_monotonically():
    # fixed grid of points with Mahalanobis quadratic form q < d, where the
    # heavy-tail kernel converges to -q/2 from one side
    sigma = build_spatial_covariance(GridGeometry.square(4), DispersionParams())
    dirs = np.random.default_rng(6).standard_normal((8, 4))
    zero = np.zeros(4)
    pts = []
    for u, q in zip(dirs, np.linspace(0.25, 3.5, 8)):
        pts.append(u * math.sqrt(q / (u @ np.linalg.solve(sigma, u))))
    gauss = np.array([-0.5 * x @ np.linalg.solve(sigma, x) for x in pts])
    prev = None
    for nu in (5.0, 10.0, 20.0, 50.0, 200.0, 1000.0):
        model = GHSkewedTPoissonModel(0.0, sigma, nu, 0.0)
        diff = np.array([model.transition_logpdf(x, zero) - model.transition_logpdf(zero, zero) for x in pts])
        gap = np.abs(diff - gauss)
        if prev is not None:
            assert np.all(gap < prev)
        prev = gap
    assert prev.max() < 0.02


def test_gh_sampler_moments():
    sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
    model = GHSkewedTPoissonModel(0.0, sigma, 9.0, np.array([0.3, -0.2]))
    x = model.transition_sample(np.zeros((400000, 2)), np.random.default_rng(8))
    nu = 9.0
    mean = model.gamma * nu / (nu - 2)
    se = x.std(axis=0) / math.sqrt(len(x))
    assert np.all(np.abs(x.mean(axis=0) - mean) < 4 * se)
    assert np.allclose(np.cov(x.T), model.state_cov, rtol=0.05)


def test_poisson_observations_are_counts(gh4, rng):
    _, ys = simulate_trajectory(gh4, 10, rng)
    assert np.all(ys >= 0) and np.array_equal(ys, np.round(ys))


def test_negative_counts_rejected(gh4):
    with pytest.raises(DomainError):
        gh4.observation_logpdf(np.array([1.0, -1.0, 0.0, 2.0]), np.zeros(4))


def test_rate_clamp_counts_saturation(gh4):
    x = np.full(4, 3.0 * EXP_CLAMP + 30.0)
    lp = gh4.observation_logpdf(np.zeros(4), x)
    assert np.isfinite(lp)
    assert gh4.saturations["poisson_rate"] == 4


def test_poisson_linearization(gh4):
    eta = np.array([0.3, -1.0, 2.0, 0.0])
    H, e, R = gh4.linearize(eta)
    rate = np.exp(eta / 3.0)
    assert np.allclose(np.diag(H), rate / 3.0)
    assert np.allclose(H @ eta + e, rate)
    assert np.allclose(R, np.diag(rate))


def test_gh_preconditioner_matrix(gh4):
    x = np.array([0.1, 0.2, -0.3, 1.0])
    gam = gh4.neg_expected_hessian(x)
    expect = np.diag(np.exp(x / 3.0) / 9.0) + np.linalg.inv(gh4.state_cov)
    assert np.allclose(gam, expect, rtol=1e-10)


# --- gradients and score identity ----------------------------------------------


def _fd_grad(f, x, h=1e-5):
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0)


@pytest.mark.parametrize("gamma", [0.3, 0.0])
def test_gh_transition_gradient(gamma, rng):
    model = GHSkewedTPoissonModel.on_grid(9, nu=7.0, gamma=gamma)
    for _ in range(30):
        xp = rng.standard_normal(9)
        x = model.alpha * xp + 2 * rng.standard_normal(9)
        _, g = model.transition_logpdf_grad(x, xp)
        assert _rel_err(g, _fd_grad(lambda z: model.transition_logpdf(z, xp), x)) < 1e-5


@pytest.mark.parametrize("which", ["gauss", "gh"])
def test_observation_score_identity(which, gauss4, gh4):
    model = gauss4 if which == "gauss" else gh4
    r = np.random.default_rng(12)
    x = np.array([0.5, -1.0, 2.0, 0.0])
    ys = model.observation_sample(np.repeat(x[None], 20000, axis=0), r)
    g = np.array([model.observation_logpdf_grad(y, x)[1] for y in ys])
    se = g.std(axis=0) / math.sqrt(len(g))
    assert np.all(np.abs(g.mean(axis=0)) < 3.5 * se)
