import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from conftest import ORACLES, frac
from smcmc.errors import FlowDegenerateError, FlowDivergedError
from smcmc.flow import (
    FlowInputs,
    FlowMap,
    edh_flow,
    edh_step_params,
    flow_apply,
    flow_proposal_logpdf,
    lambda_schedule,
    ledh_flow_for_particle,
    ledh_flows,
    t_function,
)
from smcmc.models import LinearGaussianModel


def scalar_inputs(P=1.0, H=1.0, R=1.0, y=0.0, e=0.0):
    lin = lambda eta: (np.array([[H]]), np.array([e]), np.array([[R]]))  # noqa: E731
    return FlowInputs(np.array([[P]]), np.array([y]), lin)


# --- schedule -------------------------------------------------------------------


def test_single_step_schedule():
    s = lambda_schedule(1, 3.7)
    assert s.eps.tolist() == [1.0] and s.lambdas.tolist() == [1.0]


def test_uniform_split():
    assert lambda_schedule(2, 1.0).eps.tolist() == [0.5, 0.5]


def test_geometric_schedule_oracle():
    expect = [frac(v) for v in ORACLES["schedule_3_2"]]
    assert np.allclose(lambda_schedule(3, 2.0).eps, expect, rtol=1e-15)


@given(n=st.integers(1, 300), ratio=st.floats(0.05, 20.0))
@settings(max_examples=200, deadline=None)
def test_schedule_invariants(n, ratio):
    if (n - 1) * abs(math.log(ratio)) > 744:
        with pytest.raises(ValueError, match="underflows"):
            lambda_schedule(n, ratio)
        return
    s = lambda_schedule(n, ratio)
    assert len(s) == n
    assert np.all(s.eps > 0)
    assert abs(s.eps.sum() - 1.0) <= 1e-12
    assert s.lambdas[-1] == 1.0
    assert np.all(np.diff(s.lambdas) >= 0)
    if s.eps.min() > 1e-15:
        assert np.all(np.diff(s.lambdas) > 0)
    assert np.allclose(np.cumsum(s.eps), s.lambdas, atol=1e-12)


def test_default_schedule_grows():
    s = lambda_schedule(29, 1.2)
    assert np.allclose(s.eps[1:] / s.eps[:-1], 1.2)


def test_huge_ratio_does_not_overflow():
    s = lambda_schedule(200, 20.0)
    assert np.all(np.isfinite(s.eps)) and s.eps[-1] == pytest.approx(0.95)


@pytest.mark.parametrize("n,ratio", [(0, 1.0), (3, 0.0), (3, -1.0)])
def test_schedule_rejects_bad_input(n, ratio):
    with pytest.raises(ValueError):
        lambda_schedule(n, ratio)


# --- drift ------------------------------------------------------------------------


def test_drift_scalar_hand_value():
    A, _ = edh_step_params(0.5, scalar_inputs(), np.zeros(1), np.zeros(1))
    assert A[0, 0] == pytest.approx(-1.0 / 3.0, rel=1e-15)


def test_drift_small_lambda_limit():
    A, _ = edh_step_params(1e-12, scalar_inputs(), np.zeros(1), np.zeros(1))
    assert A[0, 0] == pytest.approx(-0.5, rel=1e-10)


def test_zero_data_zero_drift_offset():
    _, b = edh_step_params(0.7, scalar_inputs(y=0.0, e=0.0), np.zeros(1), np.zeros(1))
    assert b[0] == 0.0


def test_singular_innovation_reports_lambda():
    model = LinearGaussianModel(0.9, np.eye(2), 0.0)
    inputs = FlowInputs(model.process_cov, np.zeros(2), model.linearize)
    with pytest.raises(FlowDegenerateError) as info:
        edh_step_params(0.25, inputs, np.zeros(2), np.zeros(2))
    assert info.value.lam == 0.25


def test_single_step_is_one_euler_step():
    inputs = scalar_inputs(y=1.3)
    m = np.array([0.4])
    fmap = t_function(m, inputs, lambda_schedule(1))
    A, b = edh_step_params(1.0, inputs, m, m)
    assert fmap.C[0, 0] == pytest.approx(1 + A[0, 0])
    assert fmap.D[0] == pytest.approx(b[0])


def test_two_step_hand_recursion():
    o = ORACLES["scalar_flow"]
    inputs = scalar_inputs(y=frac(o["y"]))
    fmap = t_function(np.array([frac(o["m"])]), inputs, lambda_schedule(2, 1.0))
    assert fmap.C[0, 0] == pytest.approx(frac(o["C"]), rel=1e-14)
    assert fmap.D[0] == pytest.approx(frac(o["D"]), rel=1e-14)
    assert fmap.log_abs_det_C == pytest.approx(math.log(frac(o["C"])), rel=1e-14)


def test_uninformative_observation_leaves_prior():
    model = LinearGaussianModel(0.9, np.eye(3), 1e14)
    fmap = edh_flow(np.ones((5, 3)), model, np.array([4.0, -2.0, 1.0]), lambda_schedule(29))
    assert np.allclose(fmap.C, np.eye(3), atol=1e-12)
    assert np.allclose(fmap.D, 0.0, atol=1e-12)


# --- flow map application ----------------------------------------------------------


def test_identity_map():
    fmap = FlowMap.identity(3)
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(flow_apply(fmap, x), x)
    assert np.array_equal(flow_apply(fmap, x, invert=True), x)


def test_scalar_map_arithmetic():
    fmap = FlowMap(np.array([[2.0]]), np.array([1.0]), math.log(2.0))
    assert flow_apply(fmap, np.array([3.0]))[0] == 7.0
    assert flow_apply(fmap, np.array([7.0]), invert=True)[0] == pytest.approx(3.0, abs=1e-15)


def test_batched_apply_matches_rows(rng):
    C = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
    fmap = FlowMap(C, rng.standard_normal(3), float(np.linalg.slogdet(C)[1]))
    eta = rng.standard_normal((7, 3))
    x = flow_apply(fmap, eta)
    for i in range(7):
        assert np.allclose(x[i], C @ eta[i] + fmap.D)
    assert np.allclose(flow_apply(fmap, x, invert=True), eta, atol=1e-12)


def test_proposal_density_identity_map(gauss4, rng):
    eta = rng.standard_normal(4)
    xp = rng.standard_normal(4)
    assert flow_proposal_logpdf(FlowMap.identity(4), eta, xp, gauss4) == gauss4.transition_logpdf(eta, xp)


def test_proposal_density_scalar_jacobian():
    model = LinearGaussianModel(0.9, np.eye(1), 1.0)
    fmap = FlowMap(np.array([[2.0]]), np.array([0.0]), math.log(2.0))
    eta, xp = np.array([0.3]), np.array([1.0])
    assert flow_proposal_logpdf(fmap, eta, xp, model) == pytest.approx(
        model.transition_logpdf(eta, xp) - math.log(2.0)
    )


def test_proposal_density_integrates_to_one():
    model = LinearGaussianModel(0.9, np.array([[1.5]]), 1.0)
    fmap = edh_flow(np.array([[0.5]]), model, np.array([2.0]), lambda_schedule(29))
    r = np.random.default_rng(2)
    # integrate q against a wide Gaussian reference
    ref_sd = 3.0
    x = r.normal(0.0, ref_sd, size=100000)
    eta = flow_apply(fmap, x[:, None], invert=True)
    log_norm = -0.5 * math.log(2 * math.pi * 1.5)
    log_q = flow_proposal_logpdf(fmap, eta, np.array([0.5]), model) + log_norm
    log_r = -0.5 * (x / ref_sd) ** 2 - math.log(ref_sd * math.sqrt(2 * math.pi))
    w = np.exp(log_q - log_r)
    assert abs(w.mean() - 1.0) < 3 * w.std() / math.sqrt(len(w))


# --- LEDH ---------------------------------------------------------------------------


def test_ledh_equal_particles_match_edh(gh4):
    xp = np.array([0.3, -0.5, 1.0, 0.0])
    y = np.array([1.0, 0.0, 3.0, 2.0])
    sched = lambda_schedule(29)
    shared = edh_flow(np.repeat(xp[None], 6, axis=0), gh4, y, sched)
    for fmap in ledh_flows(np.repeat(xp[None], 6, axis=0), gh4, y, sched):
        assert np.array_equal(fmap.C, shared.C) and np.array_equal(fmap.D, shared.D)


def test_ledh_linear_model_shares_c(gauss4, rng):
    prev = rng.standard_normal((5, 4))
    maps = ledh_flows(prev, gauss4, rng.standard_normal(4), lambda_schedule(29))
    for fmap in maps[1:]:
        assert np.allclose(fmap.C, maps[0].C, rtol=1e-13, atol=1e-14)
    assert not np.allclose(maps[1].D, maps[0].D)


def test_ledh_batch_isolation(gauss4, rng):
    prev = rng.standard_normal((100, 4))
    prev[37] = np.inf
    maps = ledh_flows(prev, gauss4, rng.standard_normal(4), lambda_schedule(29))
    failures = [i for i, m in enumerate(maps) if not isinstance(m, FlowMap)]
    assert failures == [37]
    assert isinstance(maps[37], FlowDivergedError)


def test_ledh_single_particle_equals_batch(gh4, rng):
    xp = rng.standard_normal(4)
    y = np.array([0.0, 1.0, 1.0, 4.0])
    a = ledh_flow_for_particle(xp, gh4, y, lambda_schedule(10))
    b = ledh_flows(xp[None], gh4, y, lambda_schedule(10))[0]
    assert np.array_equal(a.C, b.C) and a.log_abs_det_C == b.log_abs_det_C


@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6), n=st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_incremental_log_det_matches_direct(seed, d, n):
    r = np.random.default_rng(seed)
    L = r.standard_normal((d, d))
    model = LinearGaussianModel(r.uniform(-1, 1), L @ L.T + 0.1 * np.eye(d), r.uniform(0.05, 4.0))
    fmap = t_function(r.standard_normal(d), FlowInputs(model.cov, r.standard_normal(d) * 3, model.linearize),
                      lambda_schedule(n, r.uniform(0.5, 1.5)))
    sign, ld = np.linalg.slogdet(fmap.C)
    assert sign != 0
    assert abs(ld - fmap.log_abs_det_C) < 1e-6


def test_affine_pushforward_converges_to_kalman_posterior():
    from smcmc.baselines import GaussianBelief, kalman_step

    model = LinearGaussianModel.on_grid(9, obs_var=1.0)
    r = np.random.default_rng(3)
    xp = r.standard_normal(9)
    y = model.observation_sample(model.transition_sample(xp, r), r)
    post = kalman_step(GaussianBelief(xp, np.zeros((9, 9))), y, model)
    errs = []
    for n in (100, 1000):
        fmap = edh_flow(xp[None], model, y, lambda_schedule(n, 1.0))
        mean = fmap.C @ model.propagate_mean(xp) + fmap.D
        cov = fmap.C @ model.process_cov @ fmap.C.T
        errs.append(max(np.abs(mean - post.mean).max(), np.abs(cov - post.cov).max()))
    # first-order Euler: ten times the steps, about a tenth of the error
    assert errs[1] < 0.15 * errs[0]
    assert errs[1] < 1e-2
