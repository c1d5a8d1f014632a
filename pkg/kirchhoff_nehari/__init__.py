"""
Kirchhoff-Nehari - ground states of linearly coupled Kirchhoff-Schrodinger systems

Finite-difference energy minimization over the Nehari manifold on a periodic
box, with executable checks of the structural hypotheses, the critical level
bound, the Pohozaev identity and the doubly critical nonexistence certificate.
"""

__version__ = "0.1.0"
__author__ = "Kirchhoff-Nehari Developers"
__description__ = "Nehari-manifold ground states for coupled Kirchhoff-Schrodinger systems"

from .core import KirchhoffNehariSDK
from .diagnostics import (
    SHARP_SOBOLEV_CONSTANT,
    level_bound,
    nonexistence_certificate,
    pohozaev_residual,
    sobolev_constant,
)
from .energy import energy, energy_gradient, fiber, nehari_J, nehari_project
from .errors import KirchhoffNehariError, SolverStall
from .field_grid import Grid, ScalarField, StatePair
from .model import (
    KirchhoffSpec,
    Potential,
    PotentialSet,
    ProblemSpec,
    make_family,
    validate_M,
    validate_V,
    validate_V45,
)
from .solver import SolverConfig, mu_sweep, sign_normalize, solve_ground_state

__all__ = [
    "KirchhoffNehariSDK",
    "Grid",
    "ScalarField",
    "StatePair",
    "KirchhoffSpec",
    "Potential",
    "PotentialSet",
    "ProblemSpec",
    "make_family",
    "validate_M",
    "validate_V",
    "validate_V45",
    "energy",
    "energy_gradient",
    "fiber",
    "nehari_J",
    "nehari_project",
    "SolverConfig",
    "solve_ground_state",
    "sign_normalize",
    "mu_sweep",
    "SHARP_SOBOLEV_CONSTANT",
    "sobolev_constant",
    "level_bound",
    "pohozaev_residual",
    "nonexistence_certificate",
    "KirchhoffNehariError",
    "SolverStall",
]
