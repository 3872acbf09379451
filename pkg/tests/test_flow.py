import numpy as np
import pytest

from extflow import flow, grid
from extflow.constants import ConstantParams, SolverOptions, minimize_constant
from extflow.errors import MetricDegenerate
from extflow.scenarios import random_smooth_fields

from conftest import smooth_field, smooth_metric


def flat_state(gm, phi_value=0.0):
    return flow.FlowState(0.0, grid.MetricField.flat(gm), np.full(gm.shape, phi_value))


def bump_state(gm, amp=0.05, phi_amp=None):
    X1, X2 = gm.coords()
    phi_amp = amp if phi_amp is None else phi_amp
    return flow.FlowState(0.0, grid.MetricField.conformal(amp * np.sin(X1) * np.sin(X2)), phi_amp * np.cos(X1))


def test_params_validation():
    with pytest.raises(ValueError):
        flow.FlowParams(alpha=-1)
    with pytest.raises(ValueError):
        flow.FlowParams(cfl=1.5)
    with pytest.raises(ValueError):
        flow.FlowParams(t_end=0)


@pytest.mark.parametrize("normalized", [False, True])
@pytest.mark.parametrize("deturck", [False, True])
def test_flat_fixed_point(normalized, deturck):
    gm = grid.GridManifold(16, 16)
    st0 = flat_state(gm, 0.4)
    fp = flow.FlowParams(alpha=1.0, normalized=normalized, deturck=deturck)
    dg, dphi = flow.extended_flow_rhs(gm, st0, fp)
    assert np.max(np.abs(dg)) == 0.0 and np.max(np.abs(dphi)) == 0.0
    st = flow.evolve(gm, st0, fp, 100)
    assert np.max(np.abs(st.g.g - st0.g.g)) <= 1e-12
    assert np.max(np.abs(st.phi - st0.phi)) <= 1e-12
    assert st.r == 0.0


def test_alpha_zero_decouples(rng):
    gm = grid.GridManifold(16, 16)
    g = smooth_metric(gm, rng)
    st = flow.FlowState(0.0, g, smooth_field(gm, rng))
    dg, dphi = flow.extended_flow_rhs(gm, st, flow.FlowParams(alpha=0.0, deturck=False))
    assert np.array_equal(dg, -2.0 * grid.ricci(gm, g))
    assert np.array_equal(dphi, grid.laplace_beltrami(gm, g, st.phi))


def _conformal_rhs_error(N):
    gm = grid.GridManifold(N, N)
    X1, X2 = gm.coords()
    psi = 0.1 * np.sin(X1) * np.sin(X2)
    st = flow.FlowState(0.0, grid.MetricField.conformal(psi), np.zeros(gm.shape))
    dg, _ = flow.extended_flow_rhs(gm, st, flow.FlowParams(alpha=1.0, deturck=False))
    lap0 = -2 * psi  # flat Laplacian of sin x1 sin x2
    exact = 2 * lap0 * np.eye(2)[:, :, None, None]
    return np.max(np.abs(dg - exact))


def test_conformal_rhs_second_order():
    e32, e64 = _conformal_rhs_error(32), _conformal_rhs_error(64)
    assert e64 < 2e-3
    assert 3.3 <= e32 / e64 <= 4.7


def test_normalized_trace_integrates_to_zero(rng):
    gm = grid.GridManifold(16, 16)
    st = flow.FlowState(0.0, smooth_metric(gm, rng), smooth_field(gm, rng))
    dg, _, r = flow.normalized_flow_rhs(gm, st, flow.FlowParams(alpha=1.0, normalized=True, deturck=False))
    half_trace = 0.5 * np.einsum("ij...,ij...->...", st.g.g_inv, dg)
    assert abs(np.sum(half_trace * st.g.sqrt_det) * gm.cell_area) < 1e-10
    cc = grid.coupled_curvature(gm, st.g, st.phi, 1.0)
    assert r == pytest.approx(np.sum(cc.s_scalar * st.g.sqrt_det) / np.sum(st.g.sqrt_det), abs=1e-14)


def test_gauss_bonnet_r_vanishes_alpha_zero(rng):
    gm = grid.GridManifold(32, 32)
    st = flow.FlowState(0.0, grid.MetricField.conformal(0.2 * smooth_field(gm, rng)), np.zeros(gm.shape))
    _, _, r = flow.normalized_flow_rhs(gm, st, flow.FlowParams(alpha=0.0, normalized=True))
    assert abs(r) < 1e-8


def test_deturck_vanishes_on_constant_metrics():
    gm = grid.GridManifold(16, 16)
    one = np.ones(gm.shape)
    for g in (grid.MetricField.flat(gm), grid.MetricField.from_components(2.0 * one, 0 * one, 5.0 * one)):
        corr, W = flow.deturck_correction(gm, g)
        assert np.max(np.abs(corr)) == 0.0 and np.max(np.abs(W)) == 0.0


def test_deturck_extends_stability():
    gm = grid.GridManifold(32, 32)
    g, phi = random_smooth_fields(gm, 0.2, seed=3)
    st = flow.FlowState(0.0, g, phi)
    plain = flow.FlowParams(alpha=1.0, deturck=False, cfl=0.4, dt_max=1.0)
    gauged = flow.FlowParams(alpha=1.0, deturck=True, cfl=0.4, dt_max=1.0)
    dt = flow.stable_dt(gm, g, plain)
    n_plain = flow.survival_steps(gm, st, plain, dt, 2000)
    assert n_plain < 2000
    n_gauged = flow.survival_steps(gm, st, gauged, dt, 10 * n_plain + 1)
    assert n_gauged >= 10 * n_plain


def test_stable_dt_formula(rng):
    gm = grid.GridManifold(16, 32)
    g = smooth_metric(gm, rng)
    fp = flow.FlowParams(cfl=0.3, dt_max=10.0)
    h = min(gm.h1, gm.h2)
    assert flow.stable_dt(gm, g, fp) == pytest.approx(0.3 * h * h / g.inv_norm_max())
    assert flow.stable_dt(gm, g, flow.FlowParams(dt_max=1e-6)) == 1e-6


def test_half_period_symmetry_preserved():
    gm = grid.GridManifold(32, 32)
    X1, X2 = gm.coords()
    st = flow.FlowState(0.0, grid.MetricField.conformal(0.1 * np.sin(2 * X1) * np.cos(X2)), 0.1 * np.cos(2 * X1 + X2))
    fp = flow.FlowParams(alpha=1.0, dt_max=1e-3)
    st = flow.evolve(gm, st, fp, 20)
    half = gm.N1 // 2
    assert np.max(np.abs(np.roll(st.g.g, half, 2) - st.g.g)) <= 1e-10
    assert np.max(np.abs(np.roll(st.phi, half, 0) - st.phi)) <= 1e-10


@pytest.mark.parametrize("deturck", [False, True])
def test_phi_maximum_principle(deturck):
    gm = grid.GridManifold(32, 32)
    st = bump_state(gm, 0.1)
    fp = flow.FlowParams(alpha=1.0, deturck=deturck)
    hi, lo = st.phi.max(), st.phi.min()
    for _ in range(30):
        st = flow.step(gm, st, fp)
        assert st.phi.max() <= hi + 1e-10 and st.phi.min() >= lo - 1e-10
        hi, lo = st.phi.max(), st.phi.min()


def test_heat_decay_rate():
    # flat g with alpha = 0 stays flat; phi = 0.1 sin x1 decays like exp(-t)
    gm = grid.GridManifold(64, 64)
    X1, _ = gm.coords()
    st = flow.FlowState(0.0, grid.MetricField.flat(gm), 0.1 * np.sin(X1))
    fp = flow.FlowParams(alpha=0.0, dt_max=1e-2)
    n = 250
    dt = 0.5 / n
    worst = 0.0
    for _ in range(n):
        st = flow.step(gm, st, fp, dt)
        worst = max(worst, np.max(np.abs(st.phi - 0.1 * np.sin(X1) * np.exp(-st.t))))
    assert st.t == pytest.approx(0.5)
    assert np.max(np.abs(st.g.g - np.eye(2)[:, :, None, None])) == 0.0
    assert worst <= 1e-4


def test_rk4_order_in_lambda():
    gm = grid.GridManifold(16, 16)
    st0 = bump_state(gm, 0.1)
    fp = flow.FlowParams(alpha=1.0, cfl=1.0, dt_max=1.0)
    T = 0.12
    lams = []
    for n in (4, 8, 16):
        st = flow.evolve(gm, st0, fp, n, T / n)
        res = minimize_constant(gm, st.g, st.phi, ConstantParams(), 1.0, SolverOptions(tol=1e-12, max_iters=5000, restarts=0))
        lams.append(res.lam)
    ratio = (lams[0] - lams[1]) / (lams[1] - lams[2])
    assert 8 <= ratio <= 24


def test_normalized_volume_conserved():
    gm = grid.GridManifold(32, 32)
    st = flow.with_r(gm, bump_state(gm, 0.1), flow.FlowParams(normalized=True))
    fp = flow.FlowParams(alpha=1.0, normalized=True, dt_max=1e-3)
    v0 = st.volume(gm)
    st = flow.evolve(gm, st, fp, 50)
    assert abs(st.volume(gm) - v0) / v0 / st.t <= 1e-6


def test_degenerate_metric_aborts_with_last_state():
    gm = grid.GridManifold(16, 16)
    X1, X2 = gm.coords()
    st = flow.FlowState(0.0, grid.MetricField.conformal(0.2 * np.sin(X1) * np.sin(X2)), np.zeros(gm.shape))
    with pytest.raises(MetricDegenerate) as info:
        flow.step(gm, st, flow.FlowParams(alpha=1.0), dt=50.0)
    assert info.value.last_state is st
