"""
Core Kirchhoff-Nehari SDK class that provides the main interface to the solver
and the diagnostics.
"""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import (
    DEFAULT_LADDER,
    SHARP_SOBOLEV_CONSTANT,
    NonexistenceCertificate,
    PohozaevReport,
    SobolevEstimate,
    level_bound,
    nonexistence_certificate,
    pohozaev_residual,
    sobolev_constant,
)
from .field_grid import StatePair, load_field, set_deterministic
from .model import ProblemSpec, ValidationReport, validate_M, validate_V, validate_V45
from .solver import SolveReport, SolverConfig, SweepReport, mu_sweep, solve_ground_state

logger = logging.getLogger(__name__)


class KirchhoffNehariSDK:
    """
    Main SDK class bundling one problem instance with its solver settings.

    This class serves as the primary interface for:
    - Hypothesis validation
    - Ground-state descent and mu sweeps
    - Pohozaev residuals, the nonexistence certificate and the Sobolev estimate
    """

    def __init__(
        self,
        problem: ProblemSpec,
        solver: Optional[SolverConfig] = None,
        deterministic: bool = False,
        config: Optional[RunConfig] = None,
    ):
        """
        Initialize the SDK.

        Args:
            problem (ProblemSpec): The discretized instance.
            solver (SolverConfig, optional): Descent settings (defaults if omitted).
            deterministic (bool): Use fixed-order summation in all reductions.
            config (RunConfig, optional): The configuration the instance came from.
        """
        self.problem = problem
        self.solver = solver or SolverConfig()
        self.config = config
        self.deterministic = deterministic
        set_deterministic(deterministic)

    @classmethod
    def from_config(
        cls, path: Union[str, Path], deterministic: bool = False
    ) -> "KirchhoffNehariSDK":
        """
        Build the SDK from a YAML file or ``preset:<name>``.

        Raises:
            ConfigError: If the file cannot be parsed or violates a constraint.
        """
        config = load_config(path)
        return cls(config.problem(), config.solver, deterministic, config)

    def validate(
        self, include_v45: bool = False, finite_difference: bool = False
    ) -> ValidationReport:
        """
        Run the sampled checks of the structural hypotheses.

        Args:
            include_v45 (bool): Also check the radial monotonicity conditions.
            finite_difference (bool): Allow finite-difference radial derivatives.

        Returns:
            ValidationReport: One row per hypothesis.
        """
        spec = self.problem
        report = validate_M(spec.alpha, spec.beta)
        report = report.extend(validate_V(spec.potentials, spec.a1, spec.a2, spec.grid))
        if include_v45:
            report = report.extend(validate_V45(spec.potentials, spec.grid, finite_difference))
        return report

    def solve(self, initial: Optional[StatePair] = None) -> SolveReport:
        """
        Minimize the energy over the Nehari manifold.

        Raises:
            SolverStall: On step collapse or concentration (carries the report).
        """
        return solve_ground_state(self.problem, self.solver, initial)

    def sweep_mu(
        self,
        mu_list: Sequence[float],
        workers: int = 1,
        stop_when_below: bool = False,
        S: float = SHARP_SOBOLEV_CONSTANT,
    ) -> SweepReport:
        return mu_sweep(self.problem, mu_list, self.solver, workers, S, stop_when_below)

    def level_bound(self, S: float = SHARP_SOBOLEV_CONSTANT) -> float:
        spec = self.problem
        return level_bound(spec.a1, spec.a2, spec.delta, spec.p, S)

    def load_state(self, u_path: Union[str, Path], v_path: Union[str, Path]) -> StatePair:
        """
        Read a state pair from field dumps.

        Raises:
            GridMismatchError: If a dump was written on another grid.
        """
        grid = self.problem.grid
        return StatePair(load_field(u_path, grid), load_field(v_path, grid))

    def pohozaev(self, state: StatePair, finite_difference: bool = False) -> PohozaevReport:
        return pohozaev_residual(self.problem, state, finite_difference)

    def certificate(
        self, state: StatePair, finite_difference: bool = False
    ) -> NonexistenceCertificate:
        return nonexistence_certificate(self.problem, state, finite_difference=finite_difference)

    @staticmethod
    def sobolev(n_refine: Sequence[int] = DEFAULT_LADDER) -> SobolevEstimate:
        return sobolev_constant(n_refine)

    def get_version(self) -> str:
        """
        Get the SDK version.

        Returns:
            str: SDK version
        """
        return __version__
