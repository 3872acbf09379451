"""Experiment orchestration: run, resume, sweep and verify."""

import copy
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from . import grid, harness
from . import io as fio
from .constants import ConstantParams, SolverOptions, linear_lowest_eigenpair, minimize_constant
from .errors import ConfigInvalid, ExtflowError, ParamDomain
from .flow import FlowParams, FlowState, extended_flow_rhs, normalized_flow_rhs, stable_dt, step, with_r
from .scenarios import build_scenario, grid_from_config

log = logging.getLogger(__name__)

RHS_REL_TOL = 0.05
EL_RESIDUAL_MAX = 1e-6
VOLUME_DRIFT_MAX = 1e-6


def _other(measure):
    return "plain" if measure == "weighted" else "weighted"


def flow_params(cfg):
    f = cfg.flow
    return FlowParams(f.alpha, f.normalized, f.deturck, f.cfl, f.t_end, f.dt_max)


def constant_params(cfg, measure=None):
    c = cfg.constants
    return ConstantParams(c.a, c.b, c.c, c.d, measure or cfg.measure)


def thread_count():
    env = os.environ.get("EXTFLOW_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigInvalid("must be a positive integer", "EXTFLOW_THREADS") from None
        if n < 1:
            raise ConfigInvalid("must be a positive integer", "EXTFLOW_THREADS")
        return n
    return os.cpu_count() or 1


class Run:
    """Resumable flow + measurement loop for one configuration."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.fp = flow_params(cfg)
        self.measures = (cfg.measure, _other(cfg.measure))
        self.cparams = {m: constant_params(cfg, m) for m in self.measures}
        self.samples = []
        self.u = {m: None for m in self.measures}
        self.step_index = 0
        self.status = "ok"
        self.error = None

    @classmethod
    def start(cls, cfg):
        self = cls(cfg)
        self.gm, state = build_scenario(cfg)
        self.state = with_r(self.gm, state, self.fp)
        self.dt = stable_dt(self.gm, self.state.g, self.fp)
        self.n_steps = max(1, math.ceil(cfg.flow.t_end / self.dt - 1e-9))
        return self

    @classmethod
    def from_checkpoint(cls, path):
        header, arrays = fio.load_checkpoint(path)
        cfg = cfgmod.from_dict(header["config"])
        self = cls(cfg)
        self.gm = grid_from_config(cfg)
        g = grid.MetricField.from_components(arrays["g11"], arrays["g12"], arrays["g22"])
        self.state = with_r(self.gm, FlowState(header["t"], g, arrays["phi"]), self.fp)
        self.dt = header["dt"]
        self.n_steps = header["n_steps"]
        self.step_index = header["step_index"]
        self.samples = header["samples"]
        for m in self.measures:
            self.u[m] = arrays[f"u_{m}"]
        return self

    # -- measurement --------------------------------------------------------

    def _solver_opts(self):
        s = self.cfg.solver
        restarts = s.restarts if not self.samples else 0
        return SolverOptions(s.tol, s.max_iters, restarts, seed=self.cfg.scenario.seed)

    def measure(self):
        gm, st, fp = self.gm, self.state, self.fp
        alpha = fp.alpha
        rec = {"t": st.t, "step": self.step_index}
        if fp.normalized:
            dg, dphi, _ = normalized_flow_rhs(gm, st, fp)
        else:
            dg, dphi = extended_flow_rhs(gm, st, fp)
        primary = self.cfg.measure
        lam_b, _ = linear_lowest_eigenpair(gm, st.g, st.phi, self.cparams[primary], alpha)
        rec["lambda_b"] = lam_b
        rec["r"] = st.r
        rec["vol"] = st.volume(gm)
        for m in self.measures:
            cp = self.cparams[m]
            res = minimize_constant(gm, st.g, st.phi, cp, alpha, self._solver_opts(), u0=self.u[m])
            self.u[m] = res.u
            if fp.normalized:
                lb = lam_b if m == primary else linear_lowest_eigenpair(gm, st.g, st.phi, cp, alpha)[0]
                rhs = harness.theorem3_rhs(gm, st.g, st.phi, res.u, cp, alpha, st.r, lb)
            else:
                rhs = harness.theorem1_rhs(gm, st.g, st.phi, res.u, cp, alpha)
            rec[f"lambda_{m}"] = res.lam
            rec[f"el_residual_{m}"] = res.el_residual
            rec[f"iters_{m}"] = res.iters
            rec[f"rhs_{m}"] = list(rhs.terms)
            rec[f"total_{m}"] = rhs.total
            rec[f"envelope_{m}"] = harness.first_variation(gm, st.g, st.phi, res.u, res.lam, dg, dphi, cp, alpha)
        try:
            ok, margin = harness.condition_check(gm, st.g, st.phi, self.cparams[primary], alpha)
            rec["cond_ok"] = ok
            rec["cond_margin_min"] = float(np.min(margin))
        except ParamDomain:
            rec["cond_ok"] = None
            rec["cond_margin_min"] = None
        self.samples.append(rec)

    # -- loop ---------------------------------------------------------------

    def checkpoint_path(self):
        return os.path.join(self.cfg.output.dir, "checkpoints", f"ckpt_{self.step_index:08d}.bin")

    def save_checkpoint(self):
        path = self.checkpoint_path()
        os.makedirs(os.path.dirname(path), exist_ok=True)
        g = self.state.g.g
        header = {
            "config": self.cfg.to_dict(),
            "t": self.state.t,
            "dt": self.dt,
            "n_steps": self.n_steps,
            "step_index": self.step_index,
            "lambda": self.samples[-1][f"lambda_{self.cfg.measure}"] if self.samples else None,
            "lambda_b": self.samples[-1]["lambda_b"] if self.samples else None,
            "samples": self.samples,
        }
        arrays = {"g11": g[0, 0], "g12": g[0, 1], "g22": g[1, 1], "phi": self.state.phi}
        for m in self.measures:
            arrays[f"u_{m}"] = self.u[m] if self.u[m] is not None else np.full(self.gm.shape, np.nan)
        fio.save_checkpoint(path, header, arrays)
        return path

    def execute(self):
        every = self.cfg.flow.sample_every
        ck_every = self.cfg.output.checkpoint_every
        try:
            if not self.samples:
                self.measure()
            while self.step_index < self.n_steps:
                self.state = step(self.gm, self.state, self.fp, dt=self.dt)
                self.step_index += 1
                if self.step_index % every == 0:
                    self.measure()
                    if ck_every and (len(self.samples) - 1) % ck_every == 0:
                        self.save_checkpoint()
        except ExtflowError as exc:
            self.status = "failed"
            self.error = f"{type(exc).__name__}: {exc}"
            log.error("run failed at t=%.6g: %s", self.state.t, self.error)
            raise
        finally:
            self.write_outputs()
        return self.report()

    # -- reporting ----------------------------------------------------------

    def series(self, key):
        return np.array([s[key] if s[key] is not None else np.nan for s in self.samples], float)

    def report(self):
        cfg = self.cfg
        m0 = cfg.measure
        times = self.series("t")
        a_p = self.cparams[m0].a_prime
        out = {
            "status": self.status,
            "error": self.error,
            "config": cfg.to_dict(),
            "measure": m0,
            "dt": self.dt,
            "times": times,
            "lambda_b": self.series("lambda_b"),
            "r": self.series("r"),
            "vol": self.series("vol"),
            "cond_ok": [s["cond_ok"] for s in self.samples],
            "cond_margin_min": self.series("cond_margin_min"),
            "lambda": {},
            "fd_dlambda": {},
            "rhs_total": {},
            "envelope": {},
            "el_residual": {},
        }
        for m in self.measures:
            out["lambda"][m] = self.series(f"lambda_{m}")
            out["rhs_total"][m] = self.series(f"total_{m}")
            out["envelope"][m] = self.series(f"envelope_{m}")
            out["el_residual"][m] = self.series(f"el_residual_{m}")
        out["rhs_terms"] = np.array([s[f"rhs_{m0}"] for s in self.samples]) if self.samples else []

        rep = harness.VerificationReport(
            times=list(times),
            lam=list(out["lambda"][m0]),
            lam_b=list(out["lambda_b"]),
            r=list(out["r"] if self.fp.normalized else np.zeros_like(times)),
            condition_ok=out["cond_ok"],
            a_prime=a_p,
        )
        out["q2"] = rep.q2() if self.samples else []
        out["q4"] = rep.q4() if self.samples else []
        out["verdicts"] = harness.track_monotone(rep) if len(self.samples) >= 2 else {}

        adjud = {}
        if len(self.samples) >= 3:
            for m in self.measures:
                fd, _ = harness.fd_dlambda_dt(out["lambda"][m], times)
                out["fd_dlambda"][m] = fd
                rel = np.abs(fd - out["rhs_total"][m]) / np.maximum(np.abs(fd), 1e-10)
                inner = rel[1:-1]
                adjud[m] = {"max_rel_mismatch": float(np.max(inner)), "within_tol": bool(np.all(inner <= RHS_REL_TOL))}
            passing = [m for m in self.measures if adjud[m]["within_tol"]]
            best = min(self.measures, key=lambda m: adjud[m]["max_rel_mismatch"])
            adjud["adjudicated"] = passing[0] if len(passing) == 1 else best
            adjud["unique"] = len(passing) == 1
        out["adjudication"] = adjud

        terms = np.asarray(out["rhs_terms"])
        checks = {}
        if terms.size:
            checks["t1_nonnegative"] = bool(np.all(terms[:, 0] >= 0))
            checks["t7_nonnegative"] = bool(np.all(terms[:, 6] >= 0))
            checks["el_residual_max"] = float(np.max(out["el_residual"][m0]))
        if len(times) >= 2 and times[-1] > times[0]:
            vol = out["vol"]
            checks["volume_drift_per_time"] = float(abs(vol[-1] - vol[0]) / vol[0] / (times[-1] - times[0]))
        out["checks"] = checks
        return out

    def csv_rows(self, rep):
        rows = []
        m0 = self.cfg.measure
        fd = rep["fd_dlambda"].get(m0)
        for k, s in enumerate(self.samples):
            row = {
                "t": s["t"],
                "lambda": s[f"lambda_{m0}"],
                "lambda_b": s["lambda_b"],
                "fd_dlambda": fd[k] if fd is not None else float("nan"),
                "total_weighted": s["total_weighted"],
                "total_plain": s["total_plain"],
                "q2": rep["q2"][k],
                "q4": rep["q4"][k],
                "cond_ok": s["cond_ok"],
                "cond_margin_min": s["cond_margin_min"],
                "vol": s["vol"],
                "r": s["r"],
            }
            for j, term in enumerate(s[f"rhs_{m0}"], start=1):
                row[f"t{j}"] = term
            rows.append(row)
        return rows

    def write_outputs(self):
        out_dir = self.cfg.output.dir
        os.makedirs(out_dir, exist_ok=True)
        rep = self.report()
        formats = self.cfg.output.formats
        if "csv" in formats:
            fio.write_csv(os.path.join(out_dir, "timeseries.csv"), self.csv_rows(rep))
        if "json" in formats:
            fio.write_json(os.path.join(out_dir, "report.json"), rep)
        if "svg" in formats and self.samples:
            fio.write_svg(
                os.path.join(out_dir, "series.svg"),
                rep["times"],
                {"lambda": rep["lambda"][self.cfg.measure], "q2": rep["q2"], "q4": rep["q4"]},
                title=f"{self.cfg.scenario.kind} ({self.cfg.measure} measure)",
            )
        if self.cfg.output.checkpoint_every and self.samples:
            self.save_checkpoint()


def run(cfg):
    """Evolve, measure and write outputs; returns the report dict."""
    return Run.start(cfg).execute()


def resume(path, out_dir=None):
    r = Run.from_checkpoint(path)
    if out_dir:
        r.cfg = copy.deepcopy(r.cfg)
        r.cfg.output.dir = out_dir
    return r.execute()


def _with_axis(cfg, axis, value, out_dir):
    new = copy.deepcopy(cfg)
    if axis in ("a", "b", "c", "d"):
        new.constants = replace(new.constants, **{axis: float(value)})
    elif axis == "alpha":
        new.flow = replace(new.flow, alpha=float(value))
    elif axis == "amplitude":
        new.scenario = replace(new.scenario, amplitude=float(value))
    new.output = replace(new.output, dir=out_dir)
    return cfgmod.validate(new)


def _sweep_one(args):
    cfg, axis, value = args
    row = {"axis": axis, "value": value}
    try:
        rep = run(cfg)
        row["status"] = rep["status"]
    except ExtflowError as exc:
        row["status"] = f"failed: {type(exc).__name__}"
        rep = None
    b_prime = cfg.constants.b - cfg.constants.d
    row["condition_defined"] = b_prime > 0.25
    if rep is not None:
        flags = [f for f in rep["cond_ok"] if f is not None]
        row["condition_ok_fraction"] = (sum(flags) / len(flags)) if flags else float("nan")
        margins = np.asarray(rep["cond_margin_min"], float)
        row["min_margin"] = float(np.nanmin(margins)) if np.any(np.isfinite(margins)) else float("nan")
        v = rep["verdicts"]
        row["q2_nondecreasing"] = v.get("q2_nondecreasing")
        row["q4_nondecreasing"] = v.get("q4_nondecreasing")
        row["lambda0"] = float(rep["lambda"][cfg.measure][0])
    return row


SWEEP_COLUMNS = [
    "axis", "value", "status", "condition_defined", "condition_ok_fraction",
    "min_margin", "q2_nondecreasing", "q4_nondecreasing", "lambda0",
]


def sweep(cfg, axis, values):
    """One run per value along ``axis``; writes ``sweep.csv`` in the base dir."""
    if axis not in cfgmod.SWEEP_AXES:
        raise ConfigInvalid(f"must be one of {cfgmod.SWEEP_AXES}", "axis")
    values = list(values)
    if not values:
        raise ConfigInvalid("at least one value required", "values")
    base = cfg.output.dir
    jobs = [(_with_axis(cfg, axis, v, os.path.join(base, f"{axis}_{i:02d}")), axis, v) for i, v in enumerate(values)]
    workers = min(thread_count(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    os.makedirs(base, exist_ok=True)
    fio.write_csv(os.path.join(base, "sweep.csv"), rows, SWEEP_COLUMNS)
    return rows


def acceptance_checks(rep, normalized):
    """Pass/fail lines used by ``verify``."""
    checks = []
    adj = rep.get("adjudication", {})
    if adj:
        m = adj["adjudicated"]
        checks.append((f"rhs_matches_fd[{m}]", adj[m]["within_tol"], f"max rel mismatch {adj[m]['max_rel_mismatch']:.3e}"))
    c = rep.get("checks", {})
    if "t1_nonnegative" in c:
        checks.append(("t1_t7_nonnegative", c["t1_nonnegative"] and c["t7_nonnegative"], ""))
        checks.append(("el_residual", c["el_residual_max"] <= EL_RESIDUAL_MAX, f"max {c['el_residual_max']:.3e}"))
    v = rep.get("verdicts", {})
    key = "q4" if normalized else "q2"
    if v.get("condition_defined"):
        checks.append(
            (f"{key}_monotone_when_condition", v[f"{key}_nondecreasing_when_condition"], f"{v['condition_steps']} steps")
        )
    if normalized and "volume_drift_per_time" in c:
        d = c["volume_drift_per_time"]
        checks.append(("volume_drift", d <= VOLUME_DRIFT_MAX, f"{d:.3e} per unit time"))
    return checks


def verify(cfg):
    rep = run(cfg)
    return rep, acceptance_checks(rep, cfg.flow.normalized)
