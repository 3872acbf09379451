"""Discrete differential geometry on a periodic 2D grid.

Fields live on an ``(N1, N2)`` node array, axis 0 being the x1 direction.
Tensors carry their indices first: a covariant 2-tensor has shape
``(2, 2, N1, N2)``, a covector ``(2, N1, N2)``, Christoffel symbols
``(2, 2, 2, N1, N2)`` indexed ``[k, i, j]`` for Gamma^k_ij.

All stencils are second-order centered differences built from ``np.roll``,
so every operator commutes exactly with periodic shifts of the input.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import MetricDegenerate, NonFinite

DET_FLOOR = 1e-10
COND_CEIL = 1e8

MEASURES = ("weighted", "plain")


@dataclass(frozen=True)
class GridManifold:
    """Flat torus [0, L1) x [0, L2) sampled on an N1 x N2 node lattice."""

    N1: int
    N2: int
    L1: float = 2 * np.pi
    L2: float = 2 * np.pi

    n = 2

    def __post_init__(self):
        for name in ("N1", "N2"):
            N = getattr(self, name)
            if int(N) != N or N < 8 or N % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {N}")
        if not (self.L1 > 0 and self.L2 > 0):
            raise ValueError("period lengths must be positive")

    @property
    def h1(self):
        return self.L1 / self.N1

    @property
    def h2(self):
        return self.L2 / self.N2

    @property
    def shape(self):
        return (self.N1, self.N2)

    @property
    def cell_area(self):
        return self.h1 * self.h2

    def coords(self):
        """Node coordinates ``(x1, x2)`` as two ``(N1, N2)`` arrays."""
        x1 = np.arange(self.N1) * self.h1
        x2 = np.arange(self.N2) * self.h2
        return np.meshgrid(x1, x2, indexing="ij")


class MetricField:
    """Per-node symmetric positive-definite 2x2 metric with cached inverse.

    Construction validates every node; a singular or badly conditioned node
    raises :class:`MetricDegenerate`, a NaN/Inf raises :class:`NonFinite`.
    """

    def __init__(self, g):
        g = np.array(g, dtype=float)
        if g.ndim != 4 or g.shape[:2] != (2, 2):
            raise ValueError(f"metric must have shape (2, 2, N1, N2), got {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFinite("metric contains non-finite entries")
        if np.max(np.abs(g[0, 1] - g[1, 0])) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise ValueError("metric is not symmetric")
        off = 0.5 * (g[0, 1] + g[1, 0])
        g[0, 1] = off
        g[1, 0] = off

        det = g[0, 0] * g[1, 1] - off * off
        half_tr = 0.5 * (g[0, 0] + g[1, 1])
        disc = np.sqrt(np.maximum(half_tr**2 - det, 0.0))
        lo, hi = half_tr - disc, half_tr + disc
        bad = (det <= DET_FLOOR) | (lo <= 0)
        if np.any(bad):
            node = np.unravel_index(np.argmax(bad), det.shape)
            raise MetricDegenerate(f"det g = {det[node]:.3e} at node {node}")
        cond = hi / lo
        if np.any(cond > COND_CEIL):
            node = np.unravel_index(np.argmax(cond), det.shape)
            raise MetricDegenerate(f"cond g = {cond[node]:.3e} at node {node}")

        ginv = np.empty_like(g)
        ginv[0, 0] = g[1, 1] / det
        ginv[1, 1] = g[0, 0] / det
        ginv[0, 1] = ginv[1, 0] = -off / det

        self.g = g
        self.g_inv = ginv
        self.det = det
        self.sqrt_det = np.sqrt(det)
        self.eig_min = lo
        self.eig_max = hi
        for arr in (self.g, self.g_inv, self.det, self.sqrt_det):
            arr.setflags(write=False)

    @classmethod
    def from_components(cls, g11, g12, g22):
        g11, g12, g22 = np.broadcast_arrays(
            np.asarray(g11, float), np.asarray(g12, float), np.asarray(g22, float)
        )
        return cls(np.array([[g11, g12], [g12, g22]]))

    @classmethod
    def flat(cls, gm):
        ones = np.ones(gm.shape)
        return cls.from_components(ones, 0 * ones, ones)

    @classmethod
    def conformal(cls, psi):
        """The metric e^{2 psi} delta."""
        e = np.exp(2 * np.asarray(psi, float))
        return cls.from_components(e, 0 * e, e)

    @property
    def shape(self):
        return self.g.shape[2:]

    def inv_norm_max(self):
        """max over nodes of the spectral norm of g^{-1}."""
        return float(np.max(1.0 / self.eig_min))


# ---------------------------------------------------------------------------
# stencils


def _dc(f, axis, h):
    return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) / (2 * h)


def gradient(gm, f):
    """Centered partial derivatives of ``f``; new leading axis of length 2."""
    return np.stack([_dc(f, -2, gm.h1), _dc(f, -1, gm.h2)])


def second_partials(gm, f):
    """Centered second partials d_i d_j f, shape ``(2, 2, N1, N2)``."""
    h1, h2 = gm.h1, gm.h2
    f11 = (np.roll(f, -1, 0) - 2 * f + np.roll(f, 1, 0)) / h1**2
    f22 = (np.roll(f, -1, 1) - 2 * f + np.roll(f, 1, 1)) / h2**2
    fpp = np.roll(f, (-1, -1), (0, 1))
    fpm = np.roll(f, (-1, 1), (0, 1))
    fmp = np.roll(f, (1, -1), (0, 1))
    fmm = np.roll(f, (1, 1), (0, 1))
    f12 = (fpp - fpm - fmp + fmm) / (4 * h1 * h2)
    return np.array([[f11, f12], [f12, f22]])


def christoffel(gm, g):
    """Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""
    dg = gradient(gm, g.g)  # [l, i, j]
    low = 0.5 * (
        np.einsum("ijl...->lij...", dg)
        + np.einsum("jil...->lij...", dg)
        - dg
    )
    return np.einsum("kl...,lij...->kij...", g.g_inv, low)


def ricci(gm, g, gamma=None, form="gauss"):
    """Ricci tensor of ``g``.

    ``form="christoffel"`` contracts the general expression
    R_ij = d_k G^k_ij - d_i G^k_kj + G^k_kl G^l_ij - G^k_il G^l_kj.
    ``form="gauss"`` (default) uses Ric = K g with the Gauss curvature written
    as a divergence of Christoffel data, so the discrete integral of
    K sqrt(det g) over the torus vanishes to round-off.
    """
    if gamma is None:
        gamma = christoffel(gm, g)
    if form == "christoffel":
        dgam = gradient(gm, gamma)  # [m, k, i, j]
        term1 = np.einsum("kkij...->ij...", dgam)
        term2 = np.einsum("ikkj...->ij...", dgam)
        term3 = np.einsum("kkl...,lij...->ij...", gamma, gamma)
        term4 = np.einsum("kil...,lkj...->ij...", gamma, gamma)
        ric = term1 - term2 + term3 - term4
        return 0.5 * (ric + np.swapaxes(ric, 0, 1))
    if form == "gauss":
        K = gauss_curvature(gm, g, gamma)
        return K * g.g
    raise ValueError(f"unknown ricci form {form!r}")


def gauss_curvature(gm, g, gamma=None):
    # K sqrt(W) = d_2(sqrt(W)/E G^2_11) - d_1(sqrt(W)/E G^2_12)
    if gamma is None:
        gamma = christoffel(gm, g)
    c = g.sqrt_det / g.g[0, 0]
    flux = _dc(c * gamma[1, 0, 0], 1, gm.h2) - _dc(c * gamma[1, 0, 1], 0, gm.h1)
    return flux / g.sqrt_det


def scalar_curvature(gm, g, **kw):
    return np.einsum("ij...,ij...->...", g.g_inv, ricci(gm, g, **kw))


@dataclass(frozen=True)
class CoupledCurvature:
    ric: np.ndarray
    s_tensor: np.ndarray
    s_scalar: np.ndarray
    r_scalar: np.ndarray
    grad_phi: np.ndarray
    lap_phi: np.ndarray
    gamma: np.ndarray


def coupled_curvature(gm, g, phi, alpha, form="gauss"):
    """S_ij = Ric_ij - alpha d_i phi d_j phi and its trace S = R - alpha |grad phi|^2."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    gamma = christoffel(gm, g)
    ric = ricci(gm, g, gamma, form=form)
    dphi = gradient(gm, phi)
    s_tensor = ric - alpha * np.einsum("i...,j...->ij...", dphi, dphi) if alpha else ric.copy()
    R = np.einsum("ij...,ij...->...", g.g_inv, ric)
    S = np.einsum("ij...,ij...->...", g.g_inv, s_tensor)
    lap = laplace_beltrami(gm, g, phi, gamma)
    return CoupledCurvature(ric, s_tensor, S, R, dphi, lap, gamma)


def covariant_hessian(gm, g, f, gamma=None):
    """f_ij = d_i d_j f - Gamma^k_ij d_k f."""
    if gamma is None:
        gamma = christoffel(gm, g)
    return second_partials(gm, f) - np.einsum("kij...,k...->ij...", gamma, gradient(gm, f))


def laplace_beltrami(gm, g, f, gamma=None):
    return np.einsum("ij...,ij...->...", g.g_inv, covariant_hessian(gm, g, f, gamma))


def covector_dot(g, a, b):
    """g^{ij} a_i b_j per node."""
    return np.einsum("ij...,i...,j...->...", g.g_inv, a, b)


def witten_laplacian(gm, g, phi, u, gamma=None):
    """Stencil form Delta u - <grad phi, grad u>."""
    return laplace_beltrami(gm, g, u, gamma) - covector_dot(g, gradient(gm, phi), gradient(gm, u))


def tensor_dot(g, A, B):
    """<A, B> = g^{ik} g^{jl} A_ij B_kl per node."""
    return np.einsum("ik...,jl...,ij...,kl...->...", g.g_inv, g.g_inv, A, B)


def tensor_norm_sq(g, T):
    return tensor_dot(g, T, T)


def measure_weight(g, phi, measure="weighted"):
    """Density of the integration measure with respect to dx1 dx2."""
    if measure == "weighted":
        return np.exp(-np.asarray(phi)) * g.sqrt_det
    if measure == "plain":
        return g.sqrt_det.copy()
    raise ValueError(f"unknown measure {measure!r}")


def weighted_integral(gm, g, phi, field, measure="weighted"):
    """Riemann sum of ``field`` against e^{-phi} dmu_g or dmu_g."""
    w = measure_weight(g, phi, measure)
    return float(np.sum(np.asarray(field) * w) * gm.cell_area)


# ---------------------------------------------------------------------------
# divergence-form operator


def _shift_matrix(gm, axis, step):
    idx = np.arange(gm.N1 * gm.N2).reshape(gm.shape)
    cols = np.roll(idx, -step, axis).ravel()
    n = idx.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), cols)), shape=(n, n))


def _one_sided(gm, axis, sign):
    h = gm.h1 if axis == 0 else gm.h2
    I = sp.identity(gm.N1 * gm.N2, format="csr")
    if sign > 0:
        return (_shift_matrix(gm, axis, 1) - I) / h
    return (I - _shift_matrix(gm, axis, -1)) / h


class DivergenceForm:
    """Symmetric discretization of the weighted Dirichlet form.

    The energy is the average over the four one-sided quadrants

        Q(u) = 1/4 sum_{s1,s2} sum_nodes w g^{ij} D^{s_i}_i u D^{s_j}_j u h1 h2

    and ``K`` is its matrix, so ``u @ K @ u == Q(u)`` and the induced operator
    ``-K u / (w h1 h2)`` is self-adjoint for the inner product weighted by the
    node masses. The kernel is exactly the constants.
    """

    def __init__(self, gm, g, weight):
        self.gm = gm
        self.weight = np.asarray(weight, float)
        self.mass = self.weight * gm.cell_area
        self.coef = g.g_inv * self.mass
        c = [[sp.diags(self.coef[i, j].ravel()) for j in range(2)] for i in range(2)]
        D = {(ax, s): _one_sided(gm, ax, s) for ax in (0, 1) for s in (1, -1)}
        K = 0
        for s in (1, -1):
            K = K + 0.5 * (D[0, s].T @ c[0][0] @ D[0, s]) + 0.5 * (D[1, s].T @ c[1][1] @ D[1, s])
        for s1 in (1, -1):
            for s2 in (1, -1):
                cross = D[0, s1].T @ c[0][1] @ D[1, s2]
                K = K + 0.25 * (cross + cross.T)
        self.K = sp.csr_matrix(K)

    def _quadrant_diffs(self, u):
        h1, h2 = self.gm.h1, self.gm.h2
        fwd1 = (np.roll(u, -1, 0) - u) / h1
        bwd1 = (u - np.roll(u, 1, 0)) / h1
        fwd2 = (np.roll(u, -1, 1) - u) / h2
        bwd2 = (u - np.roll(u, 1, 1)) / h2
        return (fwd1, bwd1), (fwd2, bwd2)

    def dirichlet(self, u):
        """Q(u) evaluated directly from one-sided differences (no matrix)."""
        c = self.coef
        d1s, d2s = self._quadrant_diffs(u)
        total = 0.0
        for d1 in d1s:
            for d2 in d2s:
                total += np.sum(c[0, 0] * d1 * d1 + 2 * c[0, 1] * d1 * d2 + c[1, 1] * d2 * d2)
        return 0.25 * total

    def stiffness(self, u):
        return (self.K @ np.ravel(u)).reshape(self.gm.shape)

    def apply(self, u):
        """Divergence-form (weighted) Laplacian of ``u``."""
        return -self.stiffness(u) / self.mass

    def inner(self, u, v):
        return float(np.sum(self.mass * u * v))


def witten_form(gm, g, phi, measure="weighted"):
    """Divergence-form Dirichlet operator for the chosen measure."""
    return DivergenceForm(gm, g, measure_weight(g, phi, measure))
