"""Initial data for the flow runs."""

import numpy as np

from . import grid
from .flow import FlowState

MIN_EIG = 0.5


def grid_from_config(cfg):
    c = cfg.grid
    return grid.GridManifold(c.N1, c.N2, c.L1, c.L2)


def _fourier_field(gm, rng, max_mode=3):
    """Random real trigonometric polynomial with sup norm at most 1."""
    x1, x2 = gm.coords()
    k1s = 2 * np.pi / gm.L1
    k2s = 2 * np.pi / gm.L2
    out = np.zeros(gm.shape)
    total = 0.0
    for m1 in range(0, max_mode + 1):
        for m2 in range(-max_mode, max_mode + 1):
            if m1 == 0 and m2 <= 0:
                continue
            c, s = rng.normal(size=2)
            out += c * np.cos(m1 * k1s * x1 + m2 * k2s * x2) + s * np.sin(m1 * k1s * x1 + m2 * k2s * x2)
            total += abs(c) + abs(s)
    return out / total


def random_smooth_fields(gm, amplitude, seed):
    """Low-mode perturbations of (delta, 0), filtered to keep g >= MIN_EIG.

    Each metric component gets amplitude * (trig polynomial of modes <= 3 with
    sup norm <= 1); the eigenvalue filter then rescales the perturbation at
    any node whose smallest eigenvalue would fall below ``MIN_EIG``.
    """
    rng = np.random.default_rng(seed)
    h11, h12, h22 = (amplitude * _fourier_field(gm, rng) for _ in range(3))
    phi = amplitude * _fourier_field(gm, rng)
    # eigenvalues of delta + h are 1 + eig(h); |eig(h)| <= sqrt(((h11-h22)/2)^2 + h12^2) + |h11+h22|/2
    half_tr = 0.5 * (h11 + h22)
    rad = np.sqrt((0.5 * (h11 - h22)) ** 2 + h12**2)
    low = half_tr - rad
    scale = np.where(low < MIN_EIG - 1, (1 - MIN_EIG) / np.maximum(-low, 1e-300), 1.0)
    g = grid.MetricField.from_components(1 + scale * h11, scale * h12, 1 + scale * h22)
    return g, phi


def build_scenario(cfg):
    """Return ``(grid, FlowState)`` for the configured initial data."""
    gm = grid_from_config(cfg)
    sc = cfg.scenario
    x1, x2 = gm.coords()
    if sc.kind == "flat":
        g = grid.MetricField.flat(gm)
        phi = np.zeros(gm.shape)
    elif sc.kind == "conformal_bump":
        k1, k2 = 2 * np.pi / gm.L1, 2 * np.pi / gm.L2
        psi = sc.amplitude * np.sin(k1 * x1) * np.sin(k2 * x2)
        g = grid.MetricField.conformal(psi)
        phi = sc.amplitude * np.cos(k1 * x1)
    elif sc.kind == "random_smooth":
        g, phi = random_smooth_fields(gm, sc.amplitude, sc.seed)
    else:
        raise ValueError(sc.kind)
    return gm, FlowState(0.0, g, phi)
