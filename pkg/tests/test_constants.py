import logging

import numpy as np
import pytest
import scipy.linalg as sla

from extflow import grid
from extflow.constants import (
    ConstantParams,
    EnergyFunctional,
    SolverOptions,
    energy,
    linear_lowest_eigenpair,
    minimize_constant,
    minimize_constant_strict,
)
from extflow.errors import NoConvergence, NonFinite
from extflow.scenarios import random_smooth_fields

from conftest import smooth_field, smooth_metric

LOG_2PI = np.log(2 * np.pi)


def flat(N=16, phi=0.0):
    gm = grid.GridManifold(N, N)
    return gm, grid.MetricField.flat(gm), np.full(gm.shape, phi)


def positive_normalized(fn, rng, gm):
    return fn.normalize(1.0 + 0.3 * smooth_field(gm, rng))


def test_params_derived():
    p = ConstantParams(a=1.0, b=2.0, c=0.5, d=0.25)
    assert p.a_prime == 1.5 and p.b_prime == 1.75
    with pytest.raises(ValueError):
        ConstantParams(measure="volume")


def test_energy_constant_flat():
    gm, g, phi = flat()
    V = 4 * np.pi**2
    u = np.full(gm.shape, V**-0.5)
    assert energy(gm, g, phi, u, ConstantParams(), 1.0) == pytest.approx(-LOG_2PI, abs=1e-12)
    assert energy(gm, g, phi, u, ConstantParams(a=2.0), 1.0) == pytest.approx(-np.log(V), abs=1e-12)


def test_pure_dirichlet_energy(rng):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    p = ConstantParams(a=0.0, b=0.0)
    fn = EnergyFunctional(gm, g, phi, p, 1.0)
    assert fn.energy(fn.normalize(np.ones(gm.shape))) == pytest.approx(0.0, abs=1e-14)
    assert fn.energy(positive_normalized(fn, rng, gm)) > 1e-3


@pytest.mark.parametrize("measure", grid.MEASURES)
def test_two_quadratures_agree(rng, measure):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    fn = EnergyFunctional(gm, g, phi, ConstantParams(measure=measure), 1.0)
    u = positive_normalized(fn, rng, gm)
    assert abs(fn.energy(u) - fn.energy_operator_form(u)) < 1e-8


@pytest.mark.parametrize("measure", grid.MEASURES)
def test_gradient_central_difference_second_order(rng, measure):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    fn = EnergyFunctional(gm, g, phi, ConstantParams(measure=measure), 1.0)
    u = positive_normalized(fn, rng, gm)
    du = smooth_field(gm, rng)
    exact = np.sum(fn.mass * fn.gradient(u) * du)
    errs = []
    for eps in (1e-3, 1e-4):
        fd = (fn.energy(u + eps * du) - fn.energy(u - eps * du)) / (2 * eps)
        errs.append(abs(fd - exact))
    assert errs[1] < 1e-6 * max(1.0, abs(exact))
    assert 50 <= errs[0] / errs[1] <= 200


def test_energy_change_matches_difference(rng):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    fn = EnergyFunctional(gm, g, phi, ConstantParams(), 1.0)
    u = positive_normalized(fn, rng, gm)
    v = u * (1 + 0.01 * smooth_field(gm, rng))
    assert fn.energy_change(u, v) == pytest.approx(fn.energy(v) - fn.energy(u), rel=1e-9, abs=1e-13)


def test_floor_violation_raises():
    gm, g, phi = flat(8)
    u = np.ones(gm.shape)
    u[0, 0] = 0.0
    with pytest.raises(NonFinite):
        energy(gm, g, phi, u, ConstantParams(), 1.0)


def test_flat_minimizer_is_constant():
    gm, g, phi = flat(16)
    res = minimize_constant(gm, g, phi, ConstantParams(), 1.0, SolverOptions(restarts=3))
    assert res.restarts_used == 3 and res.converged
    assert res.lam == pytest.approx(-LOG_2PI, abs=1e-4)
    assert np.max(np.abs(res.u - 1 / (2 * np.pi))) <= 1e-5
    assert res.el_residual <= 1e-8


def test_restarts_all_reach_constant_global_minimum():
    # brute-force check of global status: independent random starts all land on -log(2 pi)
    gm, g, phi = flat(16)
    for seed in range(3):
        res = minimize_constant(gm, g, phi, ConstantParams(), 1.0, SolverOptions(restarts=3, seed=seed),
                                u0=1 + 0.5 * smooth_field(gm, np.random.default_rng(seed)))
        assert res.lam == pytest.approx(-LOG_2PI, abs=1e-8)


def test_scaling_in_a_prime_on_flat_data():
    gm, g, phi = flat(16)
    l1 = minimize_constant(gm, g, phi, ConstantParams(a=1.0), 1.0).lam
    l2 = minimize_constant(gm, g, phi, ConstantParams(a=2.0), 1.0).lam
    assert l2 == pytest.approx(2 * l1, abs=1e-8)


@pytest.mark.parametrize("measure", grid.MEASURES)
def test_minimizer_invariants(rng, measure):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), 0.3 * smooth_field(gm, rng)
    p = ConstantParams(measure=measure)
    res = minimize_constant(gm, g, phi, p, 1.0, SolverOptions(restarts=2, seed=1))
    fn = EnergyFunctional(gm, g, phi, p, 1.0)
    assert res.converged and res.el_residual <= 1e-8
    assert abs(fn.norm_sq(res.u) - 1) <= 1e-10
    assert np.min(res.u) >= 1e-12
    assert res.lam == pytest.approx(fn.energy(res.u), abs=1e-14)
    # accepted line-search iterates never increase the energy
    hist = np.asarray(res.energy_history)
    assert np.all(np.diff(hist) <= 0)


def test_a_prime_zero_matches_linear(rng):
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), 0.3 * smooth_field(gm, rng)
    p = ConstantParams(a=0.0, b=1.0)
    res = minimize_constant(gm, g, phi, p, 1.0, SolverOptions(tol=1e-10))
    lam_b, u_b = linear_lowest_eigenpair(gm, g, phi, p, 1.0)
    assert abs(res.lam - lam_b) <= 1e-8
    assert np.max(np.abs(res.u - u_b)) < 1e-6


def test_strict_variant_raises():
    gm = grid.GridManifold(16, 16)
    rng = np.random.default_rng(0)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    with pytest.raises(NoConvergence) as info:
        minimize_constant_strict(gm, g, phi, ConstantParams(), 1.0, SolverOptions(tol=1e-14, max_iters=2, restarts=0))
    assert info.value.result is not None and not info.value.result.converged


def test_restart_disagreement_is_logged(caplog, rng):
    # a non-converged run from different starts lands on different energies
    gm = grid.GridManifold(16, 16)
    g, phi = smooth_metric(gm, rng), smooth_field(gm, rng)
    with caplog.at_level(logging.WARNING, logger="extflow.constants"):
        minimize_constant(gm, g, phi, ConstantParams(), 1.0, SolverOptions(max_iters=1, restarts=2))
    assert "restarts disagree" in caplog.text


def test_linear_flat_kernel():
    gm, g, phi = flat(16)
    lam, u = linear_lowest_eigenpair(gm, g, phi, ConstantParams(b=3.0), 1.0)
    assert abs(lam) < 1e-12
    assert np.max(np.abs(u - 1 / (2 * np.pi))) < 1e-10


def test_linear_constant_potential_hook():
    gm, g, phi = flat(16)
    lam, _ = linear_lowest_eigenpair(gm, g, phi, ConstantParams(), 1.0, potential=2.5)
    assert lam == pytest.approx(2.5, abs=1e-10)


def dense_reference(gm, g, phi, params, alpha):
    fn = EnergyFunctional(gm, g, phi, params, alpha)
    m = fn.mass.ravel()
    A = fn.form.K.toarray() + np.diag(m * fn.V.ravel())
    w, v = sla.eigh(A, np.diag(m))
    return w[0], v[:, 0].reshape(gm.shape)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_linear_matches_dense(seed):
    gm = grid.GridManifold(16, 16)
    g, phi = random_smooth_fields(gm, 0.2, seed)
    p = ConstantParams()
    lam, u = linear_lowest_eigenpair(gm, g, phi, p, 1.0)
    ref, _ = dense_reference(gm, g, phi, p, 1.0)
    assert abs(lam - ref) <= 1e-8
    fn = EnergyFunctional(gm, g, phi, p, 1.0)
    r = -fn.form.apply(u) + fn.V * u - lam * u
    assert np.sqrt(np.sum(fn.mass * r * r)) <= 1e-8
    assert np.all(u > 0) and abs(fn.norm_sq(u) - 1) < 1e-12
