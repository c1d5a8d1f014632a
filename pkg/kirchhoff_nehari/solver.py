"""
Ground states by descent on the Nehari manifold.

Each iteration takes a Sobolev-preconditioned gradient step, maps the trial
state back onto the manifold along its ray and accepts it under an Armijo
condition on the energy. Because the manifold point on a ray is the maximum of
the energy along that ray, descending after projection minimizes the mountain
pass level directly.
"""

import logging
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import PohozaevReport, SHARP_SOBOLEV_CONSTANT, level_bound, pohozaev_residual
from .energy import (
    EnergyBreakdown,
    energy,
    energy_and_gradient,
    energy_from_terms,
    nehari_project,
    nehari_residual,
)
from .errors import (
    InvalidProblemError,
    PreconditionError,
    ProjectionFailure,
    SolverStall,
    UnsupportedCheckError,
    WrongRegimeError,
)
from .field_grid import (
    StatePair,
    gaussian_bump,
    load_field,
    quadrature,
    random_smooth_field,
    solve_screened_poisson,
)
from .model import ProblemSpec

logger = logging.getLogger(__name__)

INIT_KINDS = ("gaussian_bump", "random_smooth", "file")


@dataclass(frozen=True)
class Backtrack:
    shrink: float = 0.5
    max_halvings: int = 40
    armijo: float = 1e-4
    growth: float = 2.0
    step_max: float = 8.0


@dataclass(frozen=True)
class SolverConfig:
    """
    Settings of the Nehari descent.

    Attributes:
        max_iters (int): Iteration cap.
        grad_tol (float): Stop when the relative dual gradient norm is below this.
        step0 (float): Initial step in the preconditioned metric.
        backtrack (Backtrack): Armijo line-search parameters.
        seed (int): Seed for ``random_smooth`` initial data.
        init (str): ``gaussian_bump``, ``random_smooth`` or ``file``.
        init_files (tuple, optional): (u, v) field dumps for ``init: file``.
        freeze (str, optional): ``"u"`` or ``"v"`` to hold that component at zero.
        sign_normalize (bool): Replace the result by the projection of (|u|, |v|).
        concentration_limit (float): Peak single-cell share of the sixth-power
            mass of the critical components above which a run counts as
            concentrating.
        concentration_window (int): Iterations over which the share must keep
            growing while the accepted step shrinks before the run stalls.
        energy_slack (float): Relative slack of the Armijo comparison.
        log_every (int): Progress log period in iterations.
    """

    max_iters: int = 2000
    grad_tol: float = 1e-7
    step0: float = 0.5
    backtrack: Backtrack = field(default_factory=Backtrack)
    seed: int = 0
    init: str = "gaussian_bump"
    init_files: Optional[Tuple[str, str]] = None
    freeze: Optional[str] = None
    sign_normalize: bool = True
    concentration_limit: float = 0.25
    concentration_window: int = 5
    energy_slack: float = 1e-13
    log_every: int = 50

    def __post_init__(self) -> None:
        if int(self.max_iters) < 1:
            raise InvalidProblemError("solver.max_iters must be >= 1", "solver.max_iters")
        if not self.grad_tol > 0:
            raise InvalidProblemError("solver.grad_tol must be > 0", "solver.grad_tol")
        if not self.step0 > 0:
            raise InvalidProblemError("solver.step0 must be > 0", "solver.step0")
        if self.init not in INIT_KINDS:
            raise InvalidProblemError(
                f"solver.init must be one of {INIT_KINDS}, got {self.init!r}", "solver.init"
            )
        if self.init == "file" and not self.init_files:
            raise InvalidProblemError("solver.init 'file' needs init_files [u, v]",
                                      "solver.init_files")
        if self.freeze not in (None, "u", "v"):
            raise InvalidProblemError("solver.freeze must be 'u', 'v' or null", "solver.freeze")
        if int(self.concentration_window) < 2:
            raise InvalidProblemError("solver.concentration_window must be >= 2",
                                      "solver.concentration_window")
        bt = self.backtrack
        if not (0 < bt.shrink < 1 and bt.max_halvings >= 1 and 0 < bt.armijo < 1
                and bt.growth >= 1 and bt.step_max >= self.step0):
            raise InvalidProblemError("invalid solver.backtrack settings", "solver.backtrack")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["init_files"] = list(self.init_files) if self.init_files else None
        return data


@dataclass(frozen=True)
class TraceEntry:
    iteration: int
    energy: float
    grad_norm: float
    t0: float
    step: float
    state_norm: float


@dataclass
class SolveReport:
    """
    Outcome of one descent run; ``c_N_estimate`` is the energy of ``state``.
    """

    state: StatePair
    c_N_estimate: float
    grad_norm_rel: float
    iterations: int
    energy_trace: List[TraceEntry]
    converged: bool
    status: str
    sign_normalized: bool
    positive: bool
    nehari_residual: float
    energy: EnergyBreakdown
    initial_level: float
    regime: str
    mu: float
    pohozaev: Optional[PohozaevReport] = None
    wall_time: float = 0.0
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "c_N_estimate": self.c_N_estimate,
            "grad_norm_rel": self.grad_norm_rel,
            "iterations": self.iterations,
            "converged": self.converged,
            "status": self.status,
            "sign_normalized": self.sign_normalized,
            "positive": self.positive,
            "nehari_residual": self.nehari_residual,
            "energy": self.energy.to_dict(),
            "initial_level": self.initial_level,
            "regime": self.regime,
            "mu": self.mu,
            "pohozaev": self.pohozaev.to_dict() if self.pohozaev else None,
            "wall_time": self.wall_time,
            "notes": list(self.notes),
        }


def _shift(values: np.ndarray) -> float:
    mean = float(np.mean(values))
    return mean if mean > 0 else 1.0


def precondition(
    spec: ProblemSpec, grad: StatePair, freeze: Optional[str] = None
) -> Tuple[StatePair, float]:
    """
    Apply (-Lap + mean V_i)^{-1} componentwise.

    Returns:
        tuple: The preconditioned direction and the squared dual norm
        integrate(G . P^{-1} G).
    """
    pots = spec.sampled()
    grid = spec.grid
    d_u = solve_screened_poisson(grad.u.values, grid, _shift(pots.V1.values))
    d_v = solve_screened_poisson(grad.v.values, grid, _shift(pots.V2.values))
    if freeze == "u":
        d_u = np.zeros_like(d_u)
    elif freeze == "v":
        d_v = np.zeros_like(d_v)
    dual = quadrature(grad.u.values * d_u, grid) + quadrature(grad.v.values * d_v, grid)
    return StatePair.from_arrays(grid, d_u, d_v), max(dual, 0.0)


def critical_components(spec: ProblemSpec) -> Tuple[str, ...]:
    """Components whose exponent is the critical one, 6."""
    return tuple(name for name, exponent in (("u", spec.p), ("v", spec.q)) if exponent == 6)


def concentration_share(spec: ProblemSpec, s: StatePair) -> float:
    """
    Largest single-cell share of the sixth-power mass of the critical
    components (v when q = 6, u as well when p = 6); 0.0 when there are none.
    """
    density = np.zeros(spec.grid.shape)
    for name in critical_components(spec):
        density = density + getattr(s, name).values ** 6
    total = float(np.sum(density))
    return float(density.max() / total) if total > 0 else 0.0


def is_concentrating(shares: Sequence[float], steps: Sequence[float], limit: float) -> bool:
    """
    Every share above ``limit``, the shares non-decreasing and the accepted
    step smaller at the end of the window than at its start.
    """
    if len(shares) < 2 or len(shares) != len(steps) or min(shares) <= limit:
        return False
    growing = all(b >= a for a, b in zip(shares, shares[1:]))
    return growing and steps[-1] < steps[0]


def initial_state(spec: ProblemSpec, cfg: SolverConfig) -> StatePair:
    grid = spec.grid
    if cfg.init == "file":
        assert cfg.init_files is not None
        u = load_field(Path(cfg.init_files[0]), grid)
        v = load_field(Path(cfg.init_files[1]), grid)
    else:
        bump = gaussian_bump(grid)
        if cfg.init == "gaussian_bump":
            u, v = bump, bump
        else:
            rng = np.random.default_rng(cfg.seed)
            u = bump * (1.0 + 0.5 * random_smooth_field(grid, rng))
            v = bump * (1.0 + 0.5 * random_smooth_field(grid, rng))
    if cfg.freeze == "u":
        u = grid.zeros()
    elif cfg.freeze == "v":
        v = grid.zeros()
    return StatePair(u, v)


def sign_normalize(spec: ProblemSpec, s: StatePair) -> StatePair:
    """
    Project (|u|, |v|) onto the Nehari manifold.

    When lambda >= 0 and ``s`` lies on the manifold, the result has energy no
    larger than ``s`` (up to 1e-10), since only the coupling term can change
    under absolute values.

    Raises:
        ProjectionFailure: If the normalized ray has no Nehari point.
        PreconditionError: If lambda >= 0 and the energy rose, which only
            happens for a state off the manifold.
    """
    normalized = nehari_project(spec, s.abs()).projected
    if spec.sampled().lam.min() >= 0:
        before = energy(spec, s).total
        after = energy(spec, normalized).total
        if after > before + 1e-10 * max(1.0, abs(before)):
            raise PreconditionError(
                f"sign normalization raised the energy from {before:.12g} to {after:.12g}; "
                "the state is not on the Nehari manifold"
            )
    return normalized


def _finalize(
    spec: ProblemSpec,
    cfg: SolverConfig,
    state: StatePair,
    trace: List[TraceEntry],
    status: str,
    initial_level: float,
    started: float,
    notes: List[str],
) -> SolveReport:
    normalized = False
    if cfg.sign_normalize:
        try:
            candidate = sign_normalize(spec, state)
        except (ProjectionFailure, PreconditionError) as e:
            notes.append(f"sign normalization skipped: {e}")
        else:
            if spec.sampled().lam.min() >= 0 or (
                energy(spec, candidate).total <= energy(spec, state).total
            ):
                state, normalized = candidate, True
            else:
                notes.append("sign normalization kept the signed state (lambda changes sign)")
    breakdown, grad, terms = energy_and_gradient(spec, state)
    _, dual = precondition(spec, grad, cfg.freeze)
    rel = math.sqrt(dual) / max(1.0, math.sqrt(terms.state_norm_sq))
    pohozaev = None
    try:
        pohozaev = pohozaev_residual(spec, state)
    except UnsupportedCheckError as e:
        notes.append(f"pohozaev diagnostics skipped: {e}")
    return SolveReport(
        state=state,
        c_N_estimate=breakdown.total,
        grad_norm_rel=rel,
        iterations=max(len(trace) - 1, 0),
        energy_trace=trace,
        converged=status == "converged",
        status=status,
        sign_normalized=normalized,
        positive=state.is_positive(),
        nehari_residual=nehari_residual(spec, terms),
        energy=breakdown,
        initial_level=initial_level,
        regime=spec.regime,
        mu=spec.mu,
        pohozaev=pohozaev,
        wall_time=time.perf_counter() - started,
        notes=notes,
    )


def solve_ground_state(
    spec: ProblemSpec,
    cfg: Optional[SolverConfig] = None,
    initial: Optional[StatePair] = None,
) -> SolveReport:
    """
    Minimize the energy over the Nehari manifold.

    Args:
        spec (ProblemSpec): Problem instance.
        cfg (SolverConfig, optional): Solver settings.
        initial (StatePair, optional): Starting state; overrides ``cfg.init``.

    Returns:
        SolveReport: ``converged`` is true iff the relative gradient norm fell
        below ``grad_tol`` within ``max_iters``; otherwise status is
        ``max_iters``.

    Raises:
        ProjectionFailure: If the initial state cannot be projected.
        SolverStall: On line-search collapse or concentration; the partial
            report is attached as ``report``.
    """
    cfg = cfg or SolverConfig()
    started = time.perf_counter()
    start = initial if initial is not None else initial_state(spec, cfg)
    if cfg.freeze == "u":
        start = StatePair(spec.grid.zeros(), start.v)
    elif cfg.freeze == "v":
        start = StatePair(start.u, spec.grid.zeros())
    projection = nehari_project(spec, start)
    state = projection.projected
    current, grad, terms = energy_and_gradient(spec, state)
    initial_level = current.total
    step = cfg.step0
    last_t0 = projection.t0
    trace: List[TraceEntry] = []
    notes: List[str] = []
    status = "max_iters"
    bt = cfg.backtrack
    watch_concentration = bool(critical_components(spec))
    shares: Deque[float] = deque(maxlen=cfg.concentration_window)
    steps: Deque[float] = deque(maxlen=cfg.concentration_window)
    logger.info("starting descent: regime=%s mu=%g I0=%.10g", spec.regime, spec.mu, initial_level)

    for iteration in range(cfg.max_iters + 1):
        direction, dual = precondition(spec, grad, cfg.freeze)
        norm = math.sqrt(terms.state_norm_sq)
        rel = math.sqrt(dual) / max(1.0, norm)
        trace.append(TraceEntry(iteration, current.total, rel, last_t0, step, norm))
        if cfg.log_every and iteration % cfg.log_every == 0:
            logger.info("iter %5d  I=%.12g  grad=%.3e  step=%.3e",
                        iteration, current.total, rel, step)
        if rel <= cfg.grad_tol:
            status = "converged"
            break
        if iteration == cfg.max_iters:
            break
        if len(shares) == shares.maxlen and is_concentrating(
            shares, steps, cfg.concentration_limit
        ):
            status = "concentrated"
            notes.append(f"peak cell share grew to {shares[-1]:.3f} while the step fell "
                         f"from {steps[0]:.3e} to {steps[-1]:.3e}")
            break

        accepted = None
        slack = cfg.energy_slack * max(1.0, abs(current.total))
        for _ in range(bt.max_halvings + 1):
            try:
                trial = nehari_project(spec, state.combine(step, direction))
            except ProjectionFailure:
                step *= bt.shrink
                continue
            trial_energy = energy_from_terms(spec, trial.terms)
            if trial_energy.total <= current.total - bt.armijo * step * dual + slack:
                accepted = trial
                break
            step *= bt.shrink
        if accepted is None:
            status = "stalled"
            notes.append(f"Armijo backtracking collapsed at step {step:.3e}")
            break
        state = accepted.projected
        last_t0 = accepted.t0
        current, grad, terms = energy_and_gradient(spec, state)
        if watch_concentration:
            shares.append(concentration_share(spec, state))
            steps.append(step)
        step = min(step * bt.growth, bt.step_max)

    if watch_concentration and status == "converged":
        # a stationary state resolved on a few cells is a lattice artifact
        share = concentration_share(spec, state)
        if share > cfg.concentration_limit:
            status = "concentrated"
            notes.append(f"peak cell carries {share:.3f} of the critical sixth-power mass "
                         "at the converged iterate")

    report = _finalize(spec, cfg, state, trace, status, initial_level, started, notes)
    if status in ("stalled", "concentrated"):
        logger.warning("descent %s after %d iterations (I=%.10g)", status, report.iterations,
                       report.c_N_estimate)
        raise SolverStall(f"descent {status} after {report.iterations} iterations", report)
    logger.info("descent %s: I=%.12g grad=%.3e iterations=%d", status, report.c_N_estimate,
                report.grad_norm_rel, report.iterations)
    return report


# ---------------------------------------------------------------------------
# mu sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    mu: float
    c_N: float
    bound: float
    below_bound: bool
    status: str
    converged: bool
    ray_level: float
    start: str = "cold"
    error: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SweepReport:
    rows: List[SweepRow]
    bound: float
    sobolev: float
    mu0: Optional[float]
    reports: Dict[float, SolveReport] = field(default_factory=dict, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound": self.bound,
            "sobolev": self.sobolev,
            "mu0": self.mu0 if self.mu0 is not None else "not found",
            "rows": [r.to_dict() for r in self.rows],
        }


def doubling_ladder(start: float, count: int) -> List[float]:
    """start, 2 start, 4 start, ... with ``count`` entries."""
    return [float(start) * 2.0 ** k for k in range(int(count))]


def reference_ray_level(spec: ProblemSpec) -> float:
    """max_t I_mu(t s_ref) for the centered positive bump pair."""
    bump = gaussian_bump(spec.grid)
    try:
        return nehari_project(spec, StatePair(bump, bump)).g_at_t0
    except ProjectionFailure:
        return math.nan


def _sweep_entry(
    spec: ProblemSpec,
    cfg: SolverConfig,
    initial: Optional[StatePair],
    bound: float,
    ray_level: float,
) -> Tuple[SweepRow, Optional[SolveReport]]:
    start = "cold" if initial is None else "warm"
    try:
        report = solve_ground_state(spec, cfg, initial)
    except SolverStall as e:
        report = e.report
        if report is None:
            row = SweepRow(spec.mu, math.nan, bound, False, "stalled", False, ray_level, start,
                           str(e))
            return row, None
    except ProjectionFailure as e:
        logger.warning("mu=%g: projection failed: %s", spec.mu, e)
        row = SweepRow(spec.mu, math.nan, bound, False, "failed", False, ray_level, start, str(e))
        return row, None
    row = SweepRow(
        mu=spec.mu,
        c_N=report.c_N_estimate,
        bound=bound,
        below_bound=bool(report.c_N_estimate < bound),
        status=report.status,
        converged=report.converged,
        ray_level=ray_level,
        start=start,
    )
    return row, report


def _rank(entry: Tuple[SweepRow, Optional[SolveReport]]) -> Tuple[bool, float, bool]:
    row = entry[0]
    return (math.isnan(row.c_N), row.c_N, not row.converged)


def mu_sweep(
    spec_template: ProblemSpec,
    mu_list: Sequence[float],
    cfg: Optional[SolverConfig] = None,
    workers: int = 1,
    S: float = SHARP_SOBOLEV_CONSTANT,
    stop_when_below: bool = False,
) -> SweepReport:
    """
    Solve the critical problem for increasing mu and compare with the level bound.

    With one worker every mu is solved from a cold start and, once an earlier
    mu has a state, also warm-started from it; the row keeps the lower level.
    The warm candidate starts no higher than the previous level, so c_N(mu) is
    non-increasing, and the cold candidate keeps the chain from staying in the
    basin of a state that stops being the minimum as mu grows. With more
    workers the runs are independent cold starts on a thread pool.

    Raises:
        WrongRegimeError: Unless q = 6.
        InvalidProblemError: If ``mu_list`` is not positive and increasing.
    """
    if spec_template.q != 6:
        raise WrongRegimeError(f"the mu sweep needs q = 6, got q={spec_template.q}")
    mus = [float(m) for m in mu_list]
    if not mus or any(m <= 0 for m in mus) or any(b <= a for a, b in zip(mus, mus[1:])):
        raise InvalidProblemError("mu list must be positive and strictly increasing", "mu")
    cfg = cfg or SolverConfig()
    bound = level_bound(spec_template.a1, spec_template.a2, spec_template.delta,
                        spec_template.p, S)
    rows: List[SweepRow] = []
    reports: Dict[float, SolveReport] = {}

    if workers <= 1:
        warm: Optional[StatePair] = None
        for mu in mus:
            spec = spec_template.with_mu(mu)
            ray_level = reference_ray_level(spec)
            candidates = [_sweep_entry(spec, cfg, None, bound, ray_level)]
            if warm is not None:
                candidates.append(_sweep_entry(spec, cfg, warm, bound, ray_level))
            row, report = min(candidates, key=_rank)
            rows.append(row)
            if report is not None:
                reports[mu] = report
                warm = report.state
            logger.info("mu=%g c_N=%.10g bound=%.10g status=%s start=%s",
                        mu, row.c_N, bound, row.status, row.start)
            if stop_when_below and row.below_bound:
                break
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = []
            for mu in mus:
                spec = spec_template.with_mu(mu)
                futures.append(
                    pool.submit(_sweep_entry, spec, cfg, None, bound, reference_ray_level(spec))
                )
            for mu, future in zip(mus, futures):
                row, report = future.result()
                rows.append(row)
                if report is not None:
                    reports[mu] = report
        if stop_when_below:
            cut = next((i for i, r in enumerate(rows) if r.below_bound), None)
            if cut is not None:
                rows = rows[: cut + 1]

    mu0 = next((r.mu for r in rows if r.below_bound), None)
    return SweepReport(rows, bound, S, mu0, reports)


def translate_and_reproject(spec: ProblemSpec, s: StatePair, cells: Sequence[int]) -> float:
    """Energy after a whole-cell translation and reprojection."""
    return nehari_project(spec, s.shifted(cells)).g_at_t0
