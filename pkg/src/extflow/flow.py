"""Explicit RK4 integration of the extended (List) Ricci flow.

    dg/dt   = -2 S_ij            (+ (2r/n) g_ij when normalized)
    dphi/dt = Delta phi

with S_ij = Ric_ij - alpha dphi_i dphi_j and r the plain-volume mean of S.
An optional DeTurck term L_W g (flat background) makes the metric equation
strictly parabolic; phi is transported along the same field W so the pair
stays diffeomorphic to the ungauged solution.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import grid
from .errors import MetricDegenerate, NonFinite


@dataclass(frozen=True)
class FlowParams:
    alpha: float = 1.0
    normalized: bool = False
    deturck: bool = True
    cfl: float = 0.2
    t_end: float = 1e-3
    dt_max: float = 1e-4

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError("alpha must be >= 0")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")


@dataclass(frozen=True)
class FlowState:
    t: float
    g: grid.MetricField
    phi: np.ndarray
    r: float = 0.0

    def volume(self, gm):
        return float(np.sum(self.g.sqrt_det) * gm.cell_area)


def plain_mean(gm, g, field):
    return float(np.sum(field * g.sqrt_det) / np.sum(g.sqrt_det))


def deturck_vector(gm, g, gamma=None):
    """W^k = g^{pq} Gamma^k_pq against the flat background (whose symbols vanish)."""
    if gamma is None:
        gamma = grid.christoffel(gm, g)
    return np.einsum("pq...,kpq...->k...", g.g_inv, gamma)


def deturck_correction(gm, g, gamma=None):
    """L_W g = nabla_i W_j + nabla_j W_i."""
    if gamma is None:
        gamma = grid.christoffel(gm, g)
    W_up = deturck_vector(gm, g, gamma)
    W = np.einsum("jk...,k...->j...", g.g, W_up)
    dW = grid.gradient(gm, W)  # [i, j] = d_i W_j
    cov = dW - np.einsum("kij...,k...->ij...", gamma, W)
    return cov + np.swapaxes(cov, 0, 1), W_up


def _rhs(gm, g, phi, params):
    cc = grid.coupled_curvature(gm, g, phi, params.alpha)
    dg = -2.0 * cc.s_tensor
    dphi = cc.lap_phi.copy()
    if params.deturck:
        corr, W_up = deturck_correction(gm, g, cc.gamma)
        dg = dg + corr
        dphi = dphi + np.einsum("k...,k...->...", W_up, cc.grad_phi)
    return dg, dphi, cc


def extended_flow_rhs(gm, state, params):
    """Right-hand side (dg, dphi) of the unnormalized flow."""
    dg, dphi, _ = _rhs(gm, state.g, state.phi, params)
    return dg, dphi


def normalized_flow_rhs(gm, state, params):
    """Right-hand side (dg, dphi, r) with the volume-preserving trace term."""
    dg, dphi, cc = _rhs(gm, state.g, state.phi, params)
    r = plain_mean(gm, state.g, cc.s_scalar)
    dg = dg + (2.0 * r / gm.n) * state.g.g
    return dg, dphi, r


def stable_dt(gm, g, params):
    """min(dt_max, cfl * min(h)^2 / max_node |g^{-1}|)."""
    h = min(gm.h1, gm.h2)
    return min(params.dt_max, params.cfl * h * h / g.inv_norm_max())


def _evaluate(gm, g_arr, phi, t, params):
    if not (np.all(np.isfinite(g_arr)) and np.all(np.isfinite(phi))):
        raise NonFinite(f"non-finite field at t={t:.6g}")
    g = grid.MetricField(g_arr)
    if params.normalized:
        dg, dphi, r = normalized_flow_rhs(gm, FlowState(t, g, phi), params)
    else:
        dg, dphi = extended_flow_rhs(gm, FlowState(t, g, phi), params)
        r = 0.0
    return dg, dphi, r


def step(gm, state, params, dt=None):
    """One classical RK4 step; the returned state carries r at its own time.

    Degenerate or non-finite stages raise with ``last_state`` set to the
    input state.
    """
    if dt is None:
        dt = stable_dt(gm, state.g, params)
    g0, p0, t = state.g.g, state.phi, state.t
    try:
        k1g, k1p, _ = _evaluate(gm, g0, p0, t, params)
        k2g, k2p, _ = _evaluate(gm, g0 + 0.5 * dt * k1g, p0 + 0.5 * dt * k1p, t + 0.5 * dt, params)
        k3g, k3p, _ = _evaluate(gm, g0 + 0.5 * dt * k2g, p0 + 0.5 * dt * k2p, t + 0.5 * dt, params)
        k4g, k4p, _ = _evaluate(gm, g0 + dt * k3g, p0 + dt * k3p, t + dt, params)
        g_new = g0 + dt / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
        p_new = p0 + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        if not (np.all(np.isfinite(g_new)) and np.all(np.isfinite(p_new))):
            raise NonFinite(f"non-finite field after step to t={t + dt:.6g}")
        g_new = grid.MetricField(g_new)
    except (MetricDegenerate, NonFinite) as exc:
        exc.last_state = state
        raise
    new = FlowState(t + dt, g_new, p_new)
    if params.normalized:
        cc = grid.coupled_curvature(gm, g_new, p_new, params.alpha)
        new = replace(new, r=plain_mean(gm, g_new, cc.s_scalar))
    return new


def evolve(gm, state, params, n_steps, dt=None):
    for _ in range(n_steps):
        state = step(gm, state, params, dt)
    return state


def with_r(gm, state, params):
    """Return ``state`` with r filled in (for freshly built initial data)."""
    if not params.normalized:
        return state
    cc = grid.coupled_curvature(gm, state.g, state.phi, params.alpha)
    return replace(state, r=plain_mean(gm, state.g, cc.s_scalar))


def survival_steps(gm, state, params, dt, max_steps, blowup=1e3):
    """Steps completed before the metric degenerates or exceeds ``blowup``."""
    for n in range(max_steps):
        try:
            state = step(gm, state, params, dt)
        except (MetricDegenerate, NonFinite):
            return n
        if np.max(np.abs(state.g.g)) > blowup:
            return n + 1
    return max_steps
