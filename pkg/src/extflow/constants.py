"""The modified geometric constant and its linear companion.

For a' = a + c and b' = b - d the constant is

    lambda = inf { E(u) : u > 0, int u^2 dm = 1 },
    E(u)   = int ( |grad u|^2 + a' u^2 log u + V u^2 ) dm,

where dm is e^{-phi} dmu_g ("weighted") or dmu_g ("plain"). In the weighted
measure V = b' S and the quadratic part is exactly int -u Delta_phi u dm. In
the plain measure -u Delta_phi u integrates to |grad u|^2 - (Delta phi / 2) u^2,
so V = b' S - Delta phi / 2. A minimizer solves

    -Delta_phi u + a' u log u + b' S u = lambda u,   lambda = E(u).

The linear constant drops the u log u term and is the lowest eigenvalue of
the same quadratic form.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import grid
from .errors import LinearSolveFailure, NoConvergence, NonFinite

log = logging.getLogger(__name__)

U_FLOOR = 1e-12


@dataclass(frozen=True)
class ConstantParams:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    d: float = 0.0
    measure: str = "weighted"

    def __post_init__(self):
        if self.measure not in grid.MEASURES:
            raise ValueError(f"measure must be one of {grid.MEASURES}")
        if not (np.isfinite(self.a_prime) and np.isfinite(self.b_prime)):
            raise ValueError("a + c and b - d must be finite")

    @property
    def a_prime(self):
        return self.a + self.c

    @property
    def b_prime(self):
        return self.b - self.d


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iters: int = 2000
    restarts: int = 3
    seed: int = 0


@dataclass
class ConstantResult:
    lam: float
    u: np.ndarray
    el_residual: float
    iters: int
    restarts_used: int
    converged: bool = True
    energy_history: list = field(default_factory=list, repr=False)


class EnergyFunctional:
    """E(u) and its Euler-Lagrange operator on a fixed (g, phi)."""

    def __init__(self, gm, g, phi, params, alpha, potential=None):
        self.gm = gm
        self.params = params
        self.a_prime = params.a_prime
        self.form = grid.witten_form(gm, g, phi, params.measure)
        self.mass = self.form.mass
        if potential is None:
            cc = grid.coupled_curvature(gm, g, phi, alpha)
            potential = params.b_prime * cc.s_scalar
            if params.measure == "plain":
                potential = potential - 0.5 * cc.lap_phi
        self.V = np.broadcast_to(np.asarray(potential, float), gm.shape)
        self._gbar = np.array(
            [[np.sum(self.form.coef[i, j]) / np.sum(self.mass) for j in range(2)] for i in range(2)]
        )
        self._symbol = None

    # -- functional ---------------------------------------------------------

    def _check(self, u):
        if not np.all(np.isfinite(u)):
            raise NonFinite("u contains non-finite values")
        if np.min(u) < U_FLOOR:
            raise NonFinite(f"u has values below the floor {U_FLOOR:g}")

    def _u2logu(self, u):
        return u * u * np.log(np.maximum(u, U_FLOOR))

    def energy(self, u):
        """Integrated-by-parts form: Dirichlet quadrants + potential + entropy."""
        self._check(u)
        pot = np.sum(self.mass * (self.a_prime * self._u2logu(u) + self.V * u * u))
        return self.form.dirichlet(u) + float(pot)

    def energy_operator_form(self, u):
        """Same value via int (-u Delta_phi u + a' u^2 log u + V u^2) dm."""
        self._check(u)
        lap = self.form.apply(u)
        return float(np.sum(self.mass * (-u * lap + self.a_prime * self._u2logu(u) + self.V * u * u)))

    def energy_change(self, u, v, multiplier=0.0):
        """E(v) - E(u) computed from the increment to avoid cancellation.

        With ``multiplier`` = lambda + a'/2 this is the change of the
        Lagrangian E - multiplier * (N - 1), which equals the constrained
        energy change while staying blind to round-off in the normalization.
        """
        delta = v - u
        Ku = self.form.stiffness(u)
        Kd = self.form.stiffness(delta)
        quad = 2 * np.sum(delta * Ku) + np.sum(delta * Kd)
        lin = (2 * u + delta) * delta
        ent = lin * np.log(v) + u * u * np.log1p(delta / u)
        pot = np.sum(self.mass * ((self.V - multiplier) * lin + self.a_prime * ent))
        return float(quad + pot)

    def norm_sq(self, u):
        return float(np.sum(self.mass * u * u))

    def normalize(self, u):
        return u / np.sqrt(self.norm_sq(u))

    def hamiltonian(self, u):
        """-Delta_phi u + a' u log u + V u."""
        return -self.form.apply(u) + self.a_prime * u * np.log(np.maximum(u, U_FLOOR)) + self.V * u

    def gradient(self, u):
        """L2(dm) gradient of E at u (unconstrained)."""
        return 2 * (self.hamiltonian(u) + 0.5 * self.a_prime * u)

    def residual(self, u, lam=None):
        Hu = self.hamiltonian(u)
        if lam is None:
            lam = float(np.sum(self.mass * u * Hu))
        r = Hu - lam * u
        return r, float(np.sqrt(np.sum(self.mass * r * r)))

    # -- preconditioner -----------------------------------------------------

    def precondition(self, r, shift=1.0):
        """Apply (gbar^{ij}-Laplacian + shift)^{-1} by FFT on the flat torus."""
        if self._symbol is None:
            gm = self.gm
            k1 = 2 * np.pi * np.fft.fftfreq(gm.N1, d=gm.h1)
            k2 = 2 * np.pi * np.fft.rfftfreq(gm.N2, d=gm.h2)
            K1, K2 = np.meshgrid(k1, k2, indexing="ij")
            s1 = (2 * np.sin(K1 * gm.h1 / 2) / gm.h1) ** 2
            s2 = (2 * np.sin(K2 * gm.h2 / 2) / gm.h2) ** 2
            c12 = np.sin(K1 * gm.h1) / gm.h1 * np.sin(K2 * gm.h2) / gm.h2
            gb = self._gbar
            self._symbol = gb[0, 0] * s1 + 2 * gb[0, 1] * c12 + gb[1, 1] * s2
        return np.fft.irfft2(np.fft.rfft2(r) / (self._symbol + shift), s=r.shape)


def energy(gm, g, phi, u, params, alpha):
    return EnergyFunctional(gm, g, phi, params, alpha).energy(np.asarray(u, float))


def el_residual(gm, g, phi, u, params, alpha, lam=None):
    return EnergyFunctional(gm, g, phi, params, alpha).residual(np.asarray(u, float), lam)[1]


def _random_start(gm, rng):
    x1, x2 = gm.coords()
    pert = np.zeros(gm.shape)
    for k1 in range(0, 3):
        for k2 in range(-2, 3):
            if k1 == 0 and k2 <= 0:
                continue
            amp, ph = rng.normal(scale=0.15), rng.uniform(0, 2 * np.pi)
            pert += amp * np.cos(k1 * x1 * 2 * np.pi / gm.L1 + k2 * x2 * 2 * np.pi / gm.L2 + ph)
    return np.exp(pert)


def _descend(fn, u, tol, max_iters):
    u = fn.normalize(np.maximum(u, U_FLOOR))
    E = fn.energy(u)
    history = [E]
    step = 1.0
    for _ in range(max_iters):
        r, res = fn.residual(u)
        if res <= tol:
            break
        mult = float(np.sum(fn.mass * u * fn.hamiltonian(u))) + 0.5 * fn.a_prime
        p = fn.precondition(r)
        p -= np.sum(fn.mass * p * u) * u
        slope = 2 * np.sum(fn.mass * r * p)
        if not slope > 0:
            p, slope = r, 2 * res * res
        s = min(2 * step, 4.0)
        while True:
            v = fn.normalize(np.maximum(u - s * p, U_FLOOR))
            dE = fn.energy_change(u, v, mult)
            if dE <= -1e-4 * s * slope:
                break
            s *= 0.5
            if s < 1e-14:
                break
        if s < 1e-14:
            log.debug("line search stalled at residual %.3e", res)
            break
        u, E, step = v, E + dE, s
        history.append(E)
    r, res = fn.residual(u)
    return u, fn.energy(u), res, len(history) - 1, history


def minimize_constant(gm, g, phi, params, alpha, opts=None, u0=None, potential=None):
    """Projected, preconditioned gradient descent for lambda_{a'}^{b'}.

    Each step moves along the FFT-preconditioned residual, clamps at the
    positivity floor and renormalizes; the step length backtracks until the
    energy drops (Armijo). Starts from ``u0`` (or a constant) plus
    ``opts.restarts`` seeded random positive starts, and keeps the lowest
    energy. A result above tolerance is returned with ``converged=False``.
    """
    opts = opts or SolverOptions()
    fn = EnergyFunctional(gm, g, phi, params, alpha, potential)
    rng = np.random.default_rng(opts.seed)
    starts = [np.ones(gm.shape) if u0 is None else np.asarray(u0, float)]
    starts += [_random_start(gm, rng) for _ in range(opts.restarts)]

    best = None
    lams = []
    for k, start in enumerate(starts):
        u, lam, res, iters, hist = _descend(fn, start, opts.tol, opts.max_iters)
        lams.append(lam)
        cand = ConstantResult(lam, u, res, iters, k, res <= opts.tol, hist)
        if best is None or lam < best.lam:
            best = cand
    best.restarts_used = len(starts) - 1
    if len(lams) > 1 and max(lams) - min(lams) > 1e-6:
        log.warning("restarts disagree: lambda spread %.3e", max(lams) - min(lams))
    if not best.converged:
        log.warning("minimizer residual %.3e above tolerance %.1e", best.el_residual, opts.tol)
    return best


def minimize_constant_strict(*args, **kw):
    """Like :func:`minimize_constant` but raises NoConvergence instead of flagging."""
    res = minimize_constant(*args, **kw)
    if not res.converged:
        raise NoConvergence(f"EL residual {res.el_residual:.3e} above tolerance", res)
    return res


def gershgorin_lower_bound(B):
    B = sp.csr_matrix(B)
    diag = B.diagonal()
    off = np.asarray(abs(B).sum(axis=1)).ravel() - np.abs(diag)
    return float(np.min(diag - off))


def linear_lowest_eigenpair(gm, g, phi, params, alpha, potential=None, tol=1e-11, max_iter=20000):
    """Lowest eigenpair of -Delta_phi + b' S by shifted inverse iteration.

    The operator is symmetrized with the node masses, shifted one unit below
    its Gershgorin lower bound, factored once and iterated. The eigenvector is
    normalized in L2(dm) and made positive.
    """
    fn = EnergyFunctional(gm, g, phi, params, alpha, potential)
    m = fn.mass.ravel()
    A = fn.form.K + sp.diags(m * fn.V.ravel())
    sq = 1 / np.sqrt(m)
    B = sp.csr_matrix(sp.diags(sq) @ A @ sp.diags(sq))
    shift = gershgorin_lower_bound(B) - 1.0
    n = B.shape[0]
    try:
        lu = splu(sp.csc_matrix(B - shift * sp.identity(n)))
    except RuntimeError as exc:
        raise LinearSolveFailure(f"factorization failed: {exc}") from exc

    x = np.sqrt(m)
    x /= np.linalg.norm(x)
    res_hist = []
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        if not np.all(np.isfinite(y)):
            raise LinearSolveFailure("inner solve produced non-finite values")
        x = y / np.linalg.norm(y)
        Bx = B @ x
        lam = float(x @ Bx)
        res = float(np.linalg.norm(Bx - lam * x))
        if res <= tol:
            break
        res_hist.append(res)
        if it > 200 and res >= 0.999 * res_hist[-101]:
            raise LinearSolveFailure(f"inverse iteration stagnated at residual {res:.3e}")
    else:
        raise LinearSolveFailure(f"no convergence in {max_iter} iterations (residual {res:.3e})")
    u = (x * sq).reshape(gm.shape)
    if np.sum(u) < 0:
        u = -u
    return lam, u
