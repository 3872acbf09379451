"""Term-by-term evaluation of the evolution formulas and monotone trackers.

The right-hand side of the claimed evolution law for lambda_{a'}^{b'} is the
sum of eight integrals (plus two extra terms under the normalized flow),
with e^{-f} = u^2 for the minimizer u and every tensor contracted with the
current metric:

    t1 =  1/2 int |S_ij + f_ij + phi_ij + (a'/2) g_ij|^2 e^{-f}
    t2 = -n a'^2 / 8
    t3 = -1/2 int |phi_ij|^2 e^{-f}
    t4 = -int <S_ij, phi_ij> e^{-f}
    t5 =  (2b' - 1/2) int |S_ij|^2 e^{-f}
    t6 =  (2b' - 1/2) int alpha |Delta phi|^2 e^{-f}
    t7 =  1/2 int alpha |Delta phi - <grad phi, grad f>|^2 e^{-f}
    t8 =  int alpha <grad phi, grad f> |grad phi|^2 e^{-f}
    t9 = -(2r/n) lambda^{b'}          (normalized flow only)
    t10 = -(a'/2) r                   (normalized flow only)

These are compared with a central-difference derivative of the computed
lambda(t) series, and with an independent first-variation (envelope)
derivative evaluated from the discrete energy at fixed u.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import grid
from .constants import EnergyFunctional
from .errors import InsufficientSamples, NonPositive, ParamDomain

MONOTONE_TOL = 1e-8


def compute_f(u):
    """f = -2 log u, so that u^2 = e^{-f}."""
    u = np.asarray(u, float)
    if np.any(~(u > 0)):
        raise NonPositive("u must be strictly positive to define f")
    return -2.0 * np.log(u)


@dataclass(frozen=True)
class RhsBreakdown:
    t1: float
    t2: float
    t3: float
    t4: float
    t5: float
    t6: float
    t7: float
    t8: float
    t9: float = 0.0
    t10: float = 0.0

    @property
    def terms(self):
        return (self.t1, self.t2, self.t3, self.t4, self.t5, self.t6, self.t7, self.t8, self.t9, self.t10)

    @property
    def total(self):
        total = 0.0
        for term in self.terms:
            total += term
        return total

    def as_dict(self):
        out = asdict(self)
        out["total"] = self.total
        return out


def theorem1_rhs(gm, g, phi, u, params, alpha, measure=None):
    measure = measure or params.measure
    a_p, b_p, n = params.a_prime, params.b_prime, gm.n
    cc = grid.coupled_curvature(gm, g, phi, alpha)
    f = compute_f(u)
    f_h = grid.covariant_hessian(gm, g, f, cc.gamma)
    phi_h = grid.covariant_hessian(gm, g, phi, cc.gamma)
    dens = np.asarray(u) ** 2 * grid.measure_weight(g, phi, measure) * gm.cell_area

    def integral(x):
        return float(np.sum(x * dens))

    A = cc.s_tensor + f_h + phi_h + 0.5 * a_p * g.g
    grad_f = grid.gradient(gm, f)
    phi_f = grid.covector_dot(g, cc.grad_phi, grad_f)
    phi_sq = grid.covector_dot(g, cc.grad_phi, cc.grad_phi)
    lap = cc.lap_phi
    return RhsBreakdown(
        t1=0.5 * integral(grid.tensor_norm_sq(g, A)),
        t2=-n * a_p**2 / 8.0,
        t3=-0.5 * integral(grid.tensor_norm_sq(g, phi_h)),
        t4=-integral(grid.tensor_dot(g, cc.s_tensor, phi_h)),
        t5=(2 * b_p - 0.5) * integral(grid.tensor_norm_sq(g, cc.s_tensor)),
        t6=(2 * b_p - 0.5) * alpha * integral(lap**2),
        t7=0.5 * alpha * integral((lap - phi_f) ** 2),
        t8=alpha * integral(phi_f * phi_sq),
    )


def theorem3_rhs(gm, g, phi, u, params, alpha, r, lam_b, measure=None):
    base = theorem1_rhs(gm, g, phi, u, params, alpha, measure)
    return RhsBreakdown(
        *base.terms[:8],
        t9=-(2.0 * r / gm.n) * lam_b,
        t10=-0.5 * params.a_prime * r,
    )


def first_variation(gm, g, phi, u, lam, dg, dphi, params, alpha, eps=1e-6):
    """d lambda/dt along (dg, dphi) from the envelope identity.

    With u the constrained minimizer and mu = lambda + a'/2 its multiplier,
    d lambda = d_t E[u] - mu d_t N[u], u held fixed; both partial derivatives
    are taken by central differences of the discrete functional.
    """
    vals = []
    for s in (eps, -eps):
        gs = grid.MetricField(g.g + s * dg)
        fn = EnergyFunctional(gm, gs, phi + s * dphi, params, alpha)
        vals.append((fn.energy(u), fn.norm_sq(u)))
    dE = (vals[0][0] - vals[1][0]) / (2 * eps)
    dN = (vals[0][1] - vals[1][1]) / (2 * eps)
    return dE - (lam + 0.5 * params.a_prime) * dN


def fd_dlambda_dt(lams, times):
    """Central differences inside, one-sided at the ends.

    Returns ``(deriv, confident)``; endpoint entries are first order and
    flagged ``False``.
    """
    lams = np.asarray(lams, float)
    times = np.asarray(times, float)
    if lams.size < 3 or lams.size != times.size:
        raise InsufficientSamples("need at least 3 matching samples")
    dts = np.diff(times)
    if np.any(dts <= 0) or np.ptp(dts) > 1e-9 * np.max(np.abs(times)) + 1e-15:
        raise InsufficientSamples("samples must be uniformly spaced in time")
    deriv = np.empty_like(lams)
    deriv[1:-1] = (lams[2:] - lams[:-2]) / (times[2:] - times[:-2])
    deriv[0] = (lams[1] - lams[0]) / dts[0]
    deriv[-1] = (lams[-1] - lams[-2]) / dts[-1]
    confident = np.ones(lams.size, bool)
    confident[[0, -1]] = False
    return deriv, confident


def condition_check(gm, g, phi, params, alpha):
    """Pointwise tensor inequality of the monotonicity theorems.

    margin = |S_ij - phi_ij/(4b'-1)| - 2 sqrt(b'/(4b'-1)) |phi_ij| per node.
    """
    b_p = params.b_prime
    if not b_p > 0.25:
        raise ParamDomain(f"b - d = {b_p:g} <= 1/4: condition undefined")
    cc = grid.coupled_curvature(gm, g, phi, alpha)
    phi_h = grid.covariant_hessian(gm, g, phi, cc.gamma)
    k = 4 * b_p - 1
    lhs = np.sqrt(np.maximum(grid.tensor_norm_sq(g, cc.s_tensor - phi_h / k), 0.0))
    rhs = 2 * np.sqrt(b_p / k) * np.sqrt(np.maximum(grid.tensor_norm_sq(g, phi_h), 0.0))
    margin = lhs - rhs
    return bool(np.min(margin) >= 0), margin


def monotone_q2(lams, times, a_prime, n=2):
    return np.asarray(lams, float) + n * a_prime**2 / 8.0 * np.asarray(times, float)


def trapezoid_cumulative(values, times):
    values = np.asarray(values, float)
    times = np.asarray(times, float)
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * (values[1:] + values[:-1]) * np.diff(times))
    return out


def monotone_q4(lams, times, a_prime, rs, lam_bs, n=2):
    integrand = 0.5 * a_prime * np.asarray(rs, float) + 2.0 * np.asarray(rs, float) / n * np.asarray(lam_bs, float)
    return monotone_q2(lams, times, a_prime, n) + trapezoid_cumulative(integrand, times)


def nondecreasing(series, tol=MONOTONE_TOL, mask=None):
    diffs = np.diff(np.asarray(series, float))
    if mask is not None:
        diffs = diffs[np.asarray(mask, bool)]
    return bool(np.all(diffs >= -tol))


def increasing(series, mask=None):
    diffs = np.diff(np.asarray(series, float))
    if mask is not None:
        diffs = diffs[np.asarray(mask, bool)]
    return bool(np.all(diffs > 0))


def classify(series, tol=MONOTONE_TOL):
    """One-word monotonicity label for a series."""
    diffs = np.diff(np.asarray(series, float))
    if np.all(diffs > 0):
        return "increasing"
    if np.all(diffs >= -tol):
        return "nondecreasing"
    if np.all(diffs <= tol):
        return "decreasing"
    return "non-monotone"


@dataclass
class VerificationReport:
    """Per-sample series of one run; all lists have equal length."""

    times: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    lam_b: list = field(default_factory=list)
    r: list = field(default_factory=list)
    vol: list = field(default_factory=list)
    el_residual: list = field(default_factory=list)
    lam_other: list = field(default_factory=list)
    rhs: dict = field(default_factory=lambda: {m: [] for m in grid.MEASURES})
    envelope: list = field(default_factory=list)
    condition_ok: list = field(default_factory=list)
    condition_margin: list = field(default_factory=list)
    a_prime: float = 0.0
    n: int = 2
    measure: str = "weighted"

    def fd(self, other=False):
        return fd_dlambda_dt(self.lam_other if other else self.lam, self.times)

    def q2(self):
        return monotone_q2(self.lam, self.times, self.a_prime, self.n)

    def q4(self):
        return monotone_q4(self.lam, self.times, self.a_prime, self.r, self.lam_b, self.n)


def track_monotone(report):
    """Weak and strict monotonicity verdicts for q2 and q4.

    ``*_when_condition`` restrict to steps whose two endpoints both satisfy
    the pointwise condition (``None`` flags mean the condition is undefined).
    """
    q2, q4 = report.q2(), report.q4()
    flags = report.condition_ok
    cond_steps = None
    if flags and all(f is not None for f in flags):
        cond_steps = np.array([flags[i] and flags[i + 1] for i in range(len(flags) - 1)], bool)
    verdict = {
        "q2_nondecreasing": nondecreasing(q2),
        "q2_increasing": increasing(q2),
        "q4_nondecreasing": nondecreasing(q4),
        "q4_increasing": increasing(q4),
        "q2_verdict": classify(q2),
        "q4_verdict": classify(q4),
        "condition_defined": cond_steps is not None,
        "condition_steps": int(cond_steps.sum()) if cond_steps is not None else 0,
    }
    if cond_steps is not None:
        verdict["q2_nondecreasing_when_condition"] = nondecreasing(q2, mask=cond_steps)
        verdict["q4_nondecreasing_when_condition"] = nondecreasing(q4, mask=cond_steps)
    return verdict
