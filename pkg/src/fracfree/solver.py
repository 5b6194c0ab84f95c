"""Minimisation of the penalised energy and the sigma -> delta -> epsilon continuation.

Each fixed-parameter problem is solved by projected gradient descent on the
cone ``u >= 0`` (every minimiser is non-negative, so the cone contains them
all) with a diagonal preconditioner, Barzilai-Borwein trial steps and Armijo
backtracking.  The line search knows where the exterior volume crosses
``gamma``, the one place where ``f_eps`` has a kink.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .fractional import KernelTable, build_kernel, energy_apply
from .functional import (
    EnergyBreakdown,
    Stationarity,
    breakdown_from_apply,
    h_volume,
    positivity_count_volume,
    stationarity,
)
from .grid import DomainSpec, GridSpec, ObstacleSpec, indicator_omega, sample_obstacle
from .penalty import PenaltyParams, f_eps, g_sigma, g_sigma_prime, g_sigma_second

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class LineSearchError(SolverError):
    pass


# --- problem description ------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    domain: DomainSpec
    obstacle: ObstacleSpec
    alpha: float
    gamma: float
    allow_zero_gamma: bool = False

    def exterior_capacity(self) -> float:
        """Counted measure of ``box \\ Omega``."""
        chi = indicator_omega(self.domain, self.grid)
        return self.grid.cell_volume * float(np.count_nonzero(chi == 0))

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        self.domain.validate(self.grid)
        sample_obstacle(self.obstacle, self.grid, self.domain)
        if self.gamma < 0 or (self.gamma == 0 and not self.allow_zero_gamma):
            raise ValueError("gamma must be positive (gamma = 0 needs allow_zero_gamma)")
        cap = self.exterior_capacity()
        if self.gamma >= cap:
            raise ValueError(f"gamma = {self.gamma} is unreachable: |box \\ Omega| = {cap:.6g}")


@dataclass(frozen=True, eq=False)
class Problem:
    scenario: Scenario
    kernel: KernelTable
    phi: np.ndarray
    chi: np.ndarray
    kernel_seconds: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.scenario.grid

    @property
    def phi_max(self) -> float:
        return float(np.max(self.phi))


def build_problem(scenario: Scenario, *, workers: int = 1) -> Problem:
    scenario.validate()
    t0 = time.perf_counter()
    kernel = build_kernel(scenario.grid, scenario.alpha, workers=workers)
    dt = time.perf_counter() - t0
    phi = sample_obstacle(scenario.obstacle, scenario.grid, scenario.domain)
    chi = indicator_omega(scenario.domain, scenario.grid)
    return Problem(scenario, kernel, phi, chi, dt)


@dataclass(frozen=True)
class SolveConfig:
    grad_tol: float = 1e-5
    max_iters: int = 20000
    c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    clamp_safeguard: bool = True

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("c1 must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")


def _geometric(start: float, stop: float, rho: float) -> tuple[float, ...]:
    seq = [start]
    while seq[-1] * rho >= stop * (1 - 1e-12):
        seq.append(seq[-1] * rho)
    if seq[-1] > stop * (1 + 1e-12):
        seq.append(stop)
    return tuple(seq)


@dataclass(frozen=True)
class ContinuationSchedule:
    sigma0: float = 0.1
    delta0: float = 0.1
    rho: float = 0.5
    sigma_min: float = 1e-3
    delta_min: float = 1e-3
    epsilon_grid: tuple[float, ...] = (0.1,)

    def __post_init__(self):
        for name in ("sigma0", "delta0", "sigma_min", "delta_min"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.sigma_min > self.sigma0 or self.delta_min > self.delta0:
            raise ValueError("sigma_min/delta_min must not exceed sigma0/delta0")
        eg = tuple(float(e) for e in self.epsilon_grid)
        if not eg or any(not 0 < e < 1 for e in eg) or any(b >= a for a, b in zip(eg, eg[1:])):
            raise ValueError("epsilon_grid must be a non-empty strictly decreasing list in (0, 1)")
        object.__setattr__(self, "epsilon_grid", eg)

    def sigma_sequence(self) -> tuple[float, ...]:
        return _geometric(self.sigma0, self.sigma_min, self.rho)

    def delta_sequence(self, grid: GridSpec | None = None, alpha: float | None = None) -> tuple[float, ...]:
        return _geometric(self.delta0, self.effective_delta_min(grid, alpha), self.rho)

    def effective_delta_min(self, grid: GridSpec | None = None, alpha: float | None = None) -> float:
        """``delta_min`` raised to ``0.1 h^alpha`` so that ``h_delta`` stays resolvable."""
        if grid is None or alpha is None:
            return self.delta_min
        return min(self.delta0, max(self.delta_min, 0.1 * grid.h**alpha))


# --- fixed-parameter minimisation ------------------------------------------------


@dataclass
class StageRecord:
    kind: str
    sigma: float
    delta: float
    epsilon: float
    iterations: int
    converged: bool
    reason: str
    grad_norm: float
    energy: EnergyBreakdown
    energy_start: float
    max_energy_increase: float
    energy_ceiling_excess: float
    obstacle_violation: float
    sup_g_prime: float
    clip: float
    mu: float
    volume_threshold: float
    change_sup: float = float("nan")
    warm_start: str = "previous"

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "energy"}
        d["energy"] = self.energy.as_dict()
        return d


class _State:
    """Iterate together with the quantities derived from one kernel apply."""

    def __init__(self, problem: Problem, params: PenaltyParams, u: np.ndarray, kink_band: float):
        self.u = u
        self.Au = energy_apply(problem.kernel, u)
        self.energy = breakdown_from_apply(problem.kernel, u, self.Au, problem.phi, problem.chi, params)
        self.st: Optional[Stationarity] = None
        self._problem, self._params, self._band = problem, params, kink_band

    @property
    def total(self) -> float:
        return self.energy.total

    def decrease_to(self, other: "_State") -> float:
        """``I(other) - I(self)`` without cancelling the two large totals.

        Uses ``<v,Av> - <u,Au> = <v-u, A(v+u)>`` (``A`` is symmetric); the
        smaller terms are differenced cell by cell.
        """
        p, hn = self._params, self._problem.grid.cell_volume
        phi = self._problem.phi
        dJ = 2.0 * hn * float(np.sum((other.u - self.u) * (other.Au + self.Au)))
        dg = hn * float(np.sum(g_sigma(other.u - phi, p.sigma) - g_sigma(self.u - phi, p.sigma)))
        f0 = f_eps(self.energy.measured_h_volume, p.epsilon, p.gamma)
        f1 = f_eps(other.energy.measured_h_volume, p.epsilon, p.gamma)
        return dJ + dg + float(f1 - f0)

    def stat(self) -> Stationarity:
        if self.st is None:
            self.st = stationarity(self._problem.kernel, self.u, self._problem.phi, self._problem.chi,
                                   self._params, Au=self.Au, kink_band=self._band)
        return self.st


def _kink_band(params: PenaltyParams, hn: float) -> float:
    return 1e-10 * max(params.gamma, hn)


def minimize_fixed_params(problem: Problem, u0: np.ndarray, params: PenaltyParams,
                          config: SolveConfig = SolveConfig(), *, energy_ceiling: float | None = None,
                          kind: str = "fixed") -> tuple[np.ndarray, StageRecord]:
    """Minimise ``I_{sigma,delta,eps}`` from ``u0``.

    Stops when the projected Euler-Lagrange density is below ``grad_tol`` in
    sup norm, or after ``max_iters`` iterations (flagged in the record).
    """
    kernel, phi, chi = problem.kernel, problem.phi, problem.chi
    grid = problem.grid
    hn = grid.cell_volume
    u0 = grid.check(u0, "u0")
    if not np.all(np.isfinite(u0)):
        raise SolverError("initial field is not finite")
    band = _kink_band(params, hn)
    diag_J = 4.0 * (kernel.row_sum + kernel.tail)

    def make(u):
        s = _State(problem, params, u, band)
        if not np.isfinite(s.total):
            raise SolverError(f"non-finite energy {s.total} (sigma={params.sigma}, delta={params.delta})")
        return s

    def volume(u):
        return h_volume(u, chi, params.delta, hn)

    cur = make(np.maximum(u0, 0.0))
    e_start = cur.total
    max_increase = 0.0
    ceiling_excess = cur.total - energy_ceiling if energy_ceiling is not None else float("-inf")
    prev_u = prev_r = None
    step = 1.0
    it = 0
    reason = "max_iters"
    converged = False
    while True:
        st = cur.stat()
        gnorm = st.norm
        if gnorm <= config.grad_tol:
            converged, reason = True, "grad_tol"
            break
        if it >= config.max_iters:
            break
        precond = diag_J + g_sigma_second(cur.u - phi, params.sigma)
        mu = st.mu
        d = _direction(st.smooth + mu * st.slope, cur.u, precond)

        if prev_u is not None:
            s = cur.u - prev_u
            y = st.residual - prev_r
            sy = float(np.sum(s * y))
            sPs = float(np.sum(s * precond * s))
            step = sPs / sy if sy > 0 else min(2.0 * step, 1e3)
            step = float(np.clip(step, 1e-8, 1e3))

        v0 = st.volume - params.gamma
        t = step
        accepted = None
        tried_cross = False
        slope = 0.0
        for _ in range(config.max_backtracks):
            if st.on_kink:
                mu = _volume_keeping_mu(st, cur.u, precond, t, params, volume)
                d = _direction(st.smooth + mu * st.slope, cur.u, precond)
            trial_u = np.maximum(cur.u + t * d, 0.0)
            if not tried_cross and not st.on_kink:
                v1 = volume(trial_u) - params.gamma
                if v0 * v1 < 0:
                    tried_cross = True
                    tc = _crossing(lambda tt: volume(np.maximum(cur.u + tt * d, 0.0)) - params.gamma, t)
                    if tc is not None and 0 < tc < t:
                        t = tc
                        trial_u = np.maximum(cur.u + t * d, 0.0)
            du = trial_u - cur.u
            slope = hn * float(np.sum((st.smooth + mu * st.slope) * du))
            if slope >= 0:
                t *= config.backtrack
                continue
            cand = make(trial_u)
            if cur.decrease_to(cand) <= config.c1 * slope:
                accepted = cand
                break
            t *= config.backtrack
        if accepted is None:
            scale = max(abs(cur.total), 1.0)
            if abs(slope) < 1e-12 * scale or gnorm < 1e3 * config.grad_tol:
                reason = "stagnation"
                break
            raise LineSearchError(
                f"line search failed after {config.max_backtracks} backtracks "
                f"(grad={gnorm:.3e}, sigma={params.sigma}, delta={params.delta}, eps={params.epsilon})")
        max_increase = max(max_increase, accepted.total - cur.total)
        if energy_ceiling is not None:
            ceiling_excess = max(ceiling_excess, accepted.total - energy_ceiling)
        prev_u, prev_r = cur.u, st.residual
        cur = accepted
        step = t
        it += 1

    u = cur.u
    clip = 0.0
    if config.clamp_safeguard:
        top = problem.phi_max
        clip = float(max(np.max(u) - top, 0.0, -np.min(u)))
        if clip > 0:
            u = np.clip(u, 0.0, top)
            if clip > 10 * config.grad_tol:
                log.warning("clamp safeguard removed %.3e (> 10 grad_tol)", clip)
            cur = make(u)
    st = cur.stat()
    rec = StageRecord(
        kind=kind, sigma=params.sigma, delta=params.delta, epsilon=params.epsilon,
        iterations=it, converged=converged, reason=reason, grad_norm=st.norm,
        energy=cur.energy, energy_start=e_start, max_energy_increase=max_increase,
        energy_ceiling_excess=ceiling_excess,
        obstacle_violation=float(np.max(np.maximum(phi - u, 0.0))),
        sup_g_prime=float(np.max(np.abs(g_sigma_prime(u - phi, params.sigma)))),
        clip=clip, mu=st.mu,
        volume_threshold=positivity_count_volume(u, chi, default_tau_pos(problem), hn),
    )
    return u, rec


def _direction(dens: np.ndarray, u: np.ndarray, precond: np.ndarray) -> np.ndarray:
    d = -dens / precond
    return np.where(u > 0.0, d, np.maximum(d, 0.0))


def _volume_keeping_mu(st: Stationarity, u: np.ndarray, precond: np.ndarray, t: float,
                       params: PenaltyParams, volume) -> float:
    """Multiplier in ``[eps, 1/eps]`` for which the projected trial step keeps ``V = gamma``.

    On the kink the energy is not differentiable.  Choosing the multiplier so
    that the trial point stays on the kink turns the step into descent for the
    smooth part; hitting an end of the interval means the iterate should leave
    the kink on that side, where the one-sided slope is the correct one.
    """
    lo, hi = params.epsilon, 1.0 / params.epsilon

    def excess(mu):
        d = _direction(st.smooth + mu * st.slope, u, precond)
        return volume(np.maximum(u + t * d, 0.0)) - params.gamma

    if excess(lo) <= 0.0:
        return lo
    if excess(hi) >= 0.0:
        return hi
    return optimize.brentq(excess, lo, hi, xtol=1e-13, rtol=1e-13)


def _crossing(fun, t_hi: float) -> float | None:
    try:
        return optimize.brentq(fun, 0.0, t_hi, xtol=1e-15 * t_hi, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError):
        return None


def default_tau_pos(problem: Problem) -> float:
    return 1e-8 * problem.phi_max


# --- continuation -------------------------------------------------------------------


@dataclass
class SolveReport:
    epsilon: float
    stages: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    converged: bool = True
    volume_threshold: float = float("nan")
    volume_h: float = float("nan")
    energy_phi: float = float("nan")
    kernel_seconds: float = 0.0
    u_delta: Optional[np.ndarray] = field(default=None, repr=False)
    params_delta: Optional[PenaltyParams] = None
    final_params: Optional[PenaltyParams] = None

    @property
    def sigma_stages(self) -> list:
        return [s for s in self.stages if s.kind == "sigma"]

    @property
    def delta_stages(self) -> list:
        return [s for s in self.stages if s.kind == "delta"]

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.stages)

    def as_dict(self) -> dict:
        return dict(
            epsilon=self.epsilon, converged=self.converged, iterations=self.iterations,
            volume_threshold=self.volume_threshold, volume_h=self.volume_h, energy_phi=self.energy_phi,
            final_grad_norm=self.stages[-1].grad_norm if self.stages else float("nan"),
            warnings=list(self.warnings), stages=[s.as_dict() for s in self.stages],
            obstacle_violation_trace=[s.obstacle_violation for s in self.sigma_stages],
            sup_g_prime_trace=[s.sup_g_prime for s in self.sigma_stages],
        )


def _boundary_margin_warning(problem: Problem, u: np.ndarray, tau: float) -> str | None:
    grid = problem.grid
    pos = u > tau
    if not np.any(pos):
        return None
    dist = min(grid.L - float(np.max(np.abs(c[pos]))) for c in grid.coords)
    if dist < 2 * grid.h:
        return f"positivity set is {dist:.3g} from the box boundary (< 2h); enlarge L"
    return None


def continuation_solve(problem: Problem | Scenario, schedule: ContinuationSchedule,
                       config: SolveConfig = SolveConfig(), epsilon: float | None = None,
                       u0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Sweep sigma down at ``delta0``, then delta down at ``sigma_min``, at fixed ``epsilon``.

    Every stage starts from whichever of the previous iterate and ``phi`` has
    the lower penalised energy, so all accepted iterates stay below
    ``J_h(phi)``.
    """
    if isinstance(problem, Scenario):
        problem = build_problem(problem)
    sc = problem.scenario
    eps = schedule.epsilon_grid[0] if epsilon is None else float(epsilon)
    grid = problem.grid
    hn = grid.cell_volume
    phi = problem.phi
    tau = default_tau_pos(problem)
    from .fractional import gagliardo_energy

    ceiling = gagliardo_energy(problem.kernel, phi)
    report = SolveReport(epsilon=eps, energy_phi=ceiling, kernel_seconds=problem.kernel_seconds)
    u = phi.copy() if u0 is None else grid.check(u0, "u0").copy()

    delta0 = schedule.delta0
    plan = [("sigma", s, delta0) for s in schedule.sigma_sequence()]
    sig_min = schedule.sigma_sequence()[-1]
    plan += [("delta", sig_min, d) for d in schedule.delta_sequence(grid, sc.alpha)[1:]]

    for kind, sigma, delta in plan:
        params = PenaltyParams(sigma, delta, eps, sc.gamma)
        from .functional import penalized_energy

        start = "previous"
        if penalized_energy(problem.kernel, phi, phi, problem.chi, params).total < \
                penalized_energy(problem.kernel, u, phi, problem.chi, params).total:
            u, start = phi.copy(), "phi"
        u_prev = u
        u, rec = minimize_fixed_params(problem, u, params, config, energy_ceiling=ceiling, kind=kind)
        rec.change_sup = float(np.max(np.abs(u - u_prev)))
        rec.warm_start = start
        report.stages.append(rec)
        log.info("%s sigma=%.3g delta=%.3g eps=%.3g: %d it, grad %.2e, V=%.4f",
                 kind, sigma, delta, eps, rec.iterations, rec.grad_norm, rec.volume_threshold)
        if not rec.converged:
            report.converged = False
            report.warnings.append(f"{kind} stage sigma={sigma:.3g} delta={delta:.3g} did not converge ({rec.reason})")
        if kind == "sigma" and sigma == sig_min:
            report.u_delta = u.copy()
            report.params_delta = params
    report.final_params = params
    report.volume_threshold = positivity_count_volume(u, problem.chi, tau, hn)
    report.volume_h = h_volume(u, problem.chi, params.delta, hn)
    w = _boundary_margin_warning(problem, u, tau)
    if w:
        report.warnings.append(w)
    return u, report


@dataclass
class TuneResult:
    epsilon: float
    u: np.ndarray
    report: SolveReport
    trace: list
    success: bool
    reports: list = field(default_factory=list, repr=False)


def volume_tune_epsilon(problem: Problem | Scenario, schedule: ContinuationSchedule,
                        config: SolveConfig = SolveConfig(), vol_tol: float = 0.05,
                        *, full_sweep: bool = False, abs_tol: float | None = None) -> TuneResult:
    """Walk the epsilon grid from large to small and keep the first solution meeting the volume.

    Each epsilon restarts from ``phi``.  With ``gamma = 0`` the relative test
    is meaningless and ``abs_tol`` is required.
    """
    if isinstance(problem, Scenario):
        problem = build_problem(problem)
    gamma = problem.scenario.gamma
    if gamma == 0 and abs_tol is None:
        raise ValueError("gamma = 0 needs an absolute volume tolerance")
    trace, reports, sols = [], [], []
    chosen = None
    for eps in schedule.epsilon_grid:
        u, rep = continuation_solve(problem, schedule, config, epsilon=eps)
        vol = rep.volume_threshold
        err = abs(vol - gamma) / gamma if gamma > 0 else abs(vol - gamma)
        ok = err <= (vol_tol if gamma > 0 else abs_tol)
        trace.append(dict(epsilon=eps, volume=vol, volume_h=rep.volume_h, error=err, qualifies=bool(ok),
                          converged=rep.converged))
        reports.append(rep)
        sols.append(u)
        if ok and chosen is None:
            chosen = len(sols) - 1
            if not full_sweep:
                break
    success = chosen is not None
    if chosen is None:
        chosen = int(np.argmin([t["error"] for t in trace]))
        reports[chosen].warnings.append("no epsilon in the grid met the volume tolerance")
    if gamma == 0:
        reports[chosen].warnings.append("gamma = 0: degenerate constraint, absolute tolerance used")
    return TuneResult(trace[chosen]["epsilon"], sols[chosen], reports[chosen], trace, success, reports)
