"""Strict JSON experiment configuration.

Every section is optional and falls back to its defaults, but unknown keys,
wrong types and out-of-domain values raise :class:`ConfigInvalid` naming the
offending field path (e.g. ``flow.cfl``).
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigInvalid

SCENARIOS = ("flat", "conformal_bump", "random_smooth")
FORMATS = ("csv", "json", "svg")
SWEEP_AXES = ("a", "b", "c", "d", "alpha", "amplitude")


@dataclass
class GridConfig:
    N1: int = 64
    N2: int = 64
    L1: float = 2 * math.pi
    L2: float = 2 * math.pi


@dataclass
class FlowConfig:
    alpha: float = 1.0
    normalized: bool = False
    deturck: bool = True
    cfl: float = 0.2
    dt_max: float = 1e-4
    t_end: float = 9e-4
    sample_every: int = 1


@dataclass
class ConstantsConfig:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0
    d: float = 0.0


@dataclass
class ScenarioConfig:
    kind: str = "conformal_bump"
    amplitude: float = 0.05
    seed: int = 0


@dataclass
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 2000
    restarts: int = 3


@dataclass
class OutputConfig:
    dir: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json", "svg"])
    checkpoint_every: int = 0


@dataclass
class ExperimentConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    constants: ConstantsConfig = field(default_factory=ConstantsConfig)
    measure: str = "weighted"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)


_SECTIONS = {
    "grid": GridConfig,
    "flow": FlowConfig,
    "constants": ConstantsConfig,
    "scenario": ScenarioConfig,
    "solver": SolverConfig,
    "output": OutputConfig,
}


def _coerce(value, typ, path):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid("expected a boolean", path)
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigInvalid("expected an integer", path)
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid("expected a number", path)
        if not math.isfinite(value):
            raise ConfigInvalid("must be finite", path)
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigInvalid("expected a string", path)
        return value
    if typ is list:
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigInvalid("expected a list of strings", path)
        return list(value)
    raise TypeError(typ)


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigInvalid("expected an object", prefix)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigInvalid("unknown key", f"{prefix}.{key}" if prefix else key)
    kwargs = {}
    for name, f in known.items():
        if name in data:
            path = f"{prefix}.{name}" if prefix else name
            if name in _SECTIONS:
                kwargs[name] = _build(_SECTIONS[name], data[name], path)
            else:
                kwargs[name] = _coerce(data[name], f.type, path)
    return cls(**kwargs)


def _check(cond, message, path):
    if not cond:
        raise ConfigInvalid(message, path)


def validate(cfg):
    g = cfg.grid
    for name in ("N1", "N2"):
        N = getattr(g, name)
        _check(N >= 8 and N % 2 == 0, "must be an even integer >= 8", f"grid.{name}")
    _check(g.L1 > 0, "must be positive", "grid.L1")
    _check(g.L2 > 0, "must be positive", "grid.L2")
    fl = cfg.flow
    _check(fl.alpha >= 0, "must be >= 0", "flow.alpha")
    _check(0 < fl.cfl <= 1, "must lie in (0, 1]", "flow.cfl")
    _check(fl.dt_max > 0, "must be positive", "flow.dt_max")
    _check(fl.t_end > 0, "must be positive", "flow.t_end")
    _check(fl.sample_every >= 1, "must be >= 1", "flow.sample_every")
    _check(cfg.measure in ("weighted", "plain"), "must be 'weighted' or 'plain'", "measure")
    sc = cfg.scenario
    _check(sc.kind in SCENARIOS, f"must be one of {SCENARIOS}", "scenario.kind")
    _check(0 <= sc.amplitude <= 0.25, "must lie in [0, 0.25]", "scenario.amplitude")
    _check(sc.seed >= 0, "must be >= 0", "scenario.seed")
    so = cfg.solver
    _check(so.tol > 0, "must be positive", "solver.tol")
    _check(so.max_iters >= 1, "must be >= 1", "solver.max_iters")
    _check(so.restarts >= 0, "must be >= 0", "solver.restarts")
    out = cfg.output
    _check(bool(out.dir), "must be non-empty", "output.dir")
    _check(all(f in FORMATS for f in out.formats), f"entries must be in {FORMATS}", "output.formats")
    _check(out.checkpoint_every >= 0, "must be >= 0", "output.checkpoint_every")
    return cfg


def from_dict(data):
    return validate(_build(ExperimentConfig, data, ""))


def load(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"malformed JSON: {exc}") from exc
    return from_dict(data)
