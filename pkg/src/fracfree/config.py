"""Scenario configuration files.

Grammar: one ``key = value`` per line, where ``key`` is a dotted name such as
``grid.points`` and ``value`` is a JSON literal (number, string, boolean,
list or object).  ``#`` starts a comment line; blank lines are ignored.
Every problem found (syntax, unknown or duplicate keys, constraint
violations) is collected and raised together in one :class:`ConfigError`.

Keys and defaults::

    grid.dimension          1 or 2 (required)
    grid.half_width         2.0
    grid.points             201 in 1D, 65 in 2D
    domain.parts            list of {"kind": "ball", "center": [...], "radius": r}
                            or {"kind": "box", "lo": [...], "hi": [...]} (required)
    obstacle.amplitude      1.0
    obstacle.center         origin
    obstacle.radius         required
    problem.alpha           required, in (0, 1)
    problem.gamma           required, > 0 and below |box \\ Omega|
    problem.allow_zero_gamma  false
    schedule.sigma0, schedule.delta0            0.1
    schedule.rho                                0.5
    schedule.sigma_min, schedule.delta_min      1e-3
    schedule.epsilon_grid   [0.1]
    solver.grad_tol         1e-5
    solver.max_iters        20000
    solver.vol_tol          0.05
    solver.clamp_safeguard  true
    diagnostics.enabled     true
    diagnostics.shrink      0.25
    diagnostics.holder_stride  0 (automatic)
    output.directory        "out"
    seed                    0
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields

from .grid import Ball, Box, DomainSpec, GridSpec, ObstacleSpec, sample_obstacle
from .solver import ContinuationSchedule, Scenario, SolveConfig

KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class DiagnosticsConfig:
    enabled: bool = True
    shrink: float = 0.25
    holder_stride: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    grid: GridSpec
    domain: DomainSpec
    obstacle: ObstacleSpec
    alpha: float
    gamma: float
    allow_zero_gamma: bool = False
    schedule: ContinuationSchedule = field(default_factory=ContinuationSchedule)
    solver: SolveConfig = field(default_factory=SolveConfig)
    vol_tol: float = 0.05
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    output_dir: str = "out"
    seed: int = 0

    def scenario(self) -> Scenario:
        return Scenario(self.grid, self.domain, self.obstacle, self.alpha, self.gamma, self.allow_zero_gamma)

    def with_grid(self, points: int) -> "ScenarioConfig":
        from dataclasses import replace

        return replace(self, grid=GridSpec(self.grid.dimension, self.grid.half_width, points))


# --- parsing --------------------------------------------------------------------------


def _tokenize(text: str, errors: list) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {lineno}, column 1: expected 'key = value'")
            continue
        eq = line.index("=")
        key = line[:eq].strip()
        if not KEY_RE.match(key):
            col = len(line) - len(line.lstrip()) + 1
            errors.append(f"line {lineno}, column {col}: invalid key {key!r}")
            continue
        vtext = line[eq + 1:]
        start = eq + 1 + (len(vtext) - len(vtext.lstrip()))
        try:
            value = json.loads(vtext)
        except json.JSONDecodeError as exc:
            errors.append(f"line {lineno}, column {start + exc.colno}: invalid value for {key}: {exc.msg}")
            continue
        if key in raw:
            errors.append(f"line {lineno}, column 1: duplicate key {key} (first set on line {raw[key][1]})")
            continue
        raw[key] = (value, lineno)
    return raw


class _Reader:
    """Typed access to the raw key table that records every problem."""

    def __init__(self, raw: dict, errors: list):
        self.raw, self.errors, self.used = raw, errors, set()

    def _where(self, key):
        return f"{key} (line {self.raw[key][1]})" if key in self.raw else key

    def get(self, key, kind, default=None, required=False):
        self.used.add(key)
        if key not in self.raw:
            if required:
                self.errors.append(f"{key}: required key missing")
            return default
        value = self.raw[key][0]
        try:
            return kind(value)
        except (TypeError, ValueError) as exc:
            self.errors.append(f"{self._where(key)}: {exc}")
            return default

    def check(self, key, ok: bool, message: str):
        if not ok:
            self.errors.append(f"{self._where(key)}: {message}")
        return ok


def _num(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {json.dumps(v)}")
    return float(v)


def _int(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"expected an integer, got {json.dumps(v)}")
    return v


def _bool(v) -> bool:
    if not isinstance(v, bool):
        raise TypeError(f"expected true or false, got {json.dumps(v)}")
    return v


def _str(v) -> str:
    if not isinstance(v, str):
        raise TypeError(f"expected a string, got {json.dumps(v)}")
    return v


def _vec(v) -> tuple[float, ...]:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return (float(v),)
    if not isinstance(v, list) or not v:
        raise TypeError(f"expected a non-empty list of numbers, got {json.dumps(v)}")
    return tuple(_num(x) for x in v)


def _parts(v) -> tuple:
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list of primitives")
    out = []
    for i, p in enumerate(v):
        if not isinstance(p, dict) or p.get("kind") not in ("ball", "box"):
            raise ValueError(f"primitive {i}: expected an object with kind 'ball' or 'box'")
        if p["kind"] == "ball":
            if set(p) != {"kind", "center", "radius"}:
                raise ValueError(f"primitive {i}: a ball needs exactly 'center' and 'radius'")
            out.append(Ball(_vec(p["center"]), _num(p["radius"])))
        else:
            if set(p) != {"kind", "lo", "hi"}:
                raise ValueError(f"primitive {i}: a box needs exactly 'lo' and 'hi'")
            out.append(Box(_vec(p["lo"]), _vec(p["hi"])))
    return tuple(out)


def _open_unit(r: _Reader, key: str, v):
    if v is not None:
        r.check(key, 0.0 < v < 1.0, f"must lie in (0, 1), got {v}")


def parse_config(text: str) -> ScenarioConfig:
    errors: list[str] = []
    raw = _tokenize(text, errors)
    r = _Reader(raw, errors)

    dim = r.get("grid.dimension", _int, required=True)
    if dim is not None and not r.check("grid.dimension", dim in (1, 2), f"must be 1 or 2, got {dim}"):
        dim = None
    L = r.get("grid.half_width", _num, 2.0)
    N = r.get("grid.points", _int, 201 if dim != 2 else 65)
    grid = None
    if r.check("grid.half_width", L is not None and L > 0, f"must be positive, got {L}") and \
            r.check("grid.points", N is not None and N >= 3, f"must be >= 3, got {N}") and dim is not None:
        grid = GridSpec(dim, L, N)

    domain = None
    parts = r.get("domain.parts", _parts, required=True)
    if parts is not None:
        try:
            domain = DomainSpec(parts)
            if grid is not None:
                domain.validate(grid)
        except ValueError as exc:
            r.check("domain.parts", False, str(exc))
            domain = None

    obstacle = None
    amp = r.get("obstacle.amplitude", _num, 1.0)
    center = r.get("obstacle.center", _vec, (0.0,) * (dim or 1))
    rad = r.get("obstacle.radius", _num, required=True)
    if dim is not None and center is not None:
        r.check("obstacle.center", len(center) == dim, f"needs {dim} coordinates, got {len(center)}")
    if amp is not None and rad is not None and center is not None:
        try:
            obstacle = ObstacleSpec(amp, center, rad)
            if grid is not None and domain is not None and len(center) == dim:
                sample_obstacle(obstacle, grid, domain)
        except ValueError as exc:
            r.check("obstacle.radius", False, str(exc))
            obstacle = None

    alpha = r.get("problem.alpha", _num, required=True)
    if alpha is not None:
        r.check("problem.alpha", 0.0 < alpha < 1.0, f"must lie in (0, 1), got {alpha}")
    allow_zero = r.get("problem.allow_zero_gamma", _bool, False)
    gamma = r.get("problem.gamma", _num, required=True)
    if gamma is not None:
        if gamma == 0 and allow_zero:
            pass
        elif r.check("problem.gamma", gamma > 0, f"must be positive, got {gamma}") and \
                grid is not None and domain is not None:
            import numpy as np

            from .grid import indicator_omega

            cap = grid.cell_volume * float(np.count_nonzero(indicator_omega(domain, grid) == 0))
            r.check("problem.gamma", gamma < cap,
                    f"unreachable volume: gamma = {gamma} but |box \\ Omega| = {cap:.6g} on this grid")

    sched_kw = {}
    for name, default in (("sigma0", 0.1), ("delta0", 0.1), ("rho", 0.5), ("sigma_min", 1e-3), ("delta_min", 1e-3)):
        v = r.get(f"schedule.{name}", _num, default)
        _open_unit(r, f"schedule.{name}", v)
        sched_kw[name] = v
    eg = r.get("schedule.epsilon_grid", _vec, (0.1,))
    if eg is not None:
        ok = all(0 < e < 1 for e in eg) and all(b < a for a, b in zip(eg, eg[1:]))
        r.check("schedule.epsilon_grid", ok, "must be strictly decreasing with entries in (0, 1)")
    sched_kw["epsilon_grid"] = eg
    schedule = None
    if None not in sched_kw.values():
        try:
            schedule = ContinuationSchedule(**sched_kw)
        except ValueError as exc:
            r.check("schedule", False, str(exc))

    solver_kw = dict(
        grad_tol=r.get("solver.grad_tol", _num, 1e-5),
        max_iters=r.get("solver.max_iters", _int, 20000),
        clamp_safeguard=r.get("solver.clamp_safeguard", _bool, True),
    )
    vol_tol = r.get("solver.vol_tol", _num, 0.05)
    if vol_tol is not None:
        r.check("solver.vol_tol", vol_tol > 0, f"must be positive, got {vol_tol}")
    solver = None
    if None not in solver_kw.values():
        try:
            solver = SolveConfig(**solver_kw)
        except ValueError as exc:
            r.check("solver", False, str(exc))

    diag = DiagnosticsConfig(
        enabled=r.get("diagnostics.enabled", _bool, True),
        shrink=r.get("diagnostics.shrink", _num, 0.25),
        holder_stride=r.get("diagnostics.holder_stride", _int, 0),
    )
    if diag.shrink is not None:
        r.check("diagnostics.shrink", 0 < diag.shrink < 1, f"must lie in (0, 1), got {diag.shrink}")
    if diag.holder_stride is not None:
        r.check("diagnostics.holder_stride", diag.holder_stride >= 0, "must be >= 0 (0 = automatic)")
    out = r.get("output.directory", _str, "out")
    seed = r.get("seed", _int, 0)

    for key in sorted(set(raw) - r.used):
        errors.append(f"line {raw[key][1]}, column 1: unknown key {key}")
    if errors:
        raise ConfigError(errors)
    return ScenarioConfig(grid, domain, obstacle, alpha, gamma, allow_zero, schedule, solver, vol_tol,
                          diag, out, seed)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# --- serialisation ----------------------------------------------------------------------


def _part_dict(p) -> dict:
    if isinstance(p, Ball):
        return {"kind": "ball", "center": list(p.center), "radius": p.radius}
    return {"kind": "box", "lo": list(p.lo), "hi": list(p.hi)}


def config_items(cfg: ScenarioConfig) -> list[tuple[str, object]]:
    s, v = cfg.schedule, cfg.solver
    return [
        ("grid.dimension", cfg.grid.dimension),
        ("grid.half_width", cfg.grid.half_width),
        ("grid.points", cfg.grid.points_per_axis),
        ("domain.parts", [_part_dict(p) for p in cfg.domain.parts]),
        ("obstacle.amplitude", cfg.obstacle.amplitude),
        ("obstacle.center", list(cfg.obstacle.center)),
        ("obstacle.radius", cfg.obstacle.radius),
        ("problem.alpha", cfg.alpha),
        ("problem.gamma", cfg.gamma),
        ("problem.allow_zero_gamma", cfg.allow_zero_gamma),
        ("schedule.sigma0", s.sigma0),
        ("schedule.delta0", s.delta0),
        ("schedule.rho", s.rho),
        ("schedule.sigma_min", s.sigma_min),
        ("schedule.delta_min", s.delta_min),
        ("schedule.epsilon_grid", list(s.epsilon_grid)),
        ("solver.grad_tol", v.grad_tol),
        ("solver.max_iters", v.max_iters),
        ("solver.vol_tol", cfg.vol_tol),
        ("solver.clamp_safeguard", v.clamp_safeguard),
        ("diagnostics.enabled", cfg.diagnostics.enabled),
        ("diagnostics.shrink", cfg.diagnostics.shrink),
        ("diagnostics.holder_stride", cfg.diagnostics.holder_stride),
        ("output.directory", cfg.output_dir),
        ("seed", cfg.seed),
    ]


def serialize_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {json.dumps(val)}\n" for k, val in config_items(cfg))


def config_dict(cfg: ScenarioConfig) -> dict:
    return dict(config_items(cfg))


# --- standard scenarios -----------------------------------------------------------------

STANDARD_1D = """\
# Omega = (-1, 1), bump obstacle of radius 1/2, exterior volume 1/2
grid.dimension = 1
grid.half_width = 2.0
grid.points = 201
domain.parts = [{"kind": "box", "lo": [-1.0], "hi": [1.0]}]
obstacle.amplitude = 1.0
obstacle.center = [0.0]
obstacle.radius = 0.5
problem.alpha = 0.5
problem.gamma = 0.5
schedule.epsilon_grid = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01]
"""

STANDARD_2D = """\
# Omega = unit disk, bump obstacle of radius 1/2, exterior volume 1.75
grid.dimension = 2
grid.half_width = 2.0
grid.points = 65
domain.parts = [{"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}]
obstacle.amplitude = 4.0
obstacle.center = [0.0, 0.0]
obstacle.radius = 0.5
problem.alpha = 0.5
problem.gamma = 1.75
schedule.epsilon_grid = [0.5, 0.2, 0.1, 0.05, 0.02]
solver.vol_tol = 0.15
"""


def standard_config(dimension: int) -> ScenarioConfig:
    return parse_config(STANDARD_1D if dimension == 1 else STANDARD_2D)
