"""
Shared fixtures: small problem instances that keep the unit tests fast.
"""

from typing import Optional

import numpy as np
import pytest

from kirchhoff_nehari.field_grid import Grid, StatePair, gaussian_bump, set_deterministic
from kirchhoff_nehari.model import Potential, PotentialSet, ProblemSpec, make_family


def build_problem(
    n: int = 12,
    L: float = 6.0,
    p: float = 4.5,
    q: float = 4.5,
    mu: float = 1.0,
    V1: str = "1",
    V2: str = "1",
    lam: str = "0",
    delta: float = 0.5,
    a1: float = 1.0,
    a2: float = 1.0,
    b: float = 0.05,
    alpha: Optional[str] = None,
) -> ProblemSpec:
    potentials = PotentialSet(
        Potential.from_expression(V1, "V1"),
        Potential.from_expression(V2, "V2"),
        Potential.from_expression(lam, "lambda"),
        delta,
        (L / 2, L / 2, L / 2),
    )
    alpha_spec = make_family(alpha, {}) if alpha else make_family("quadratic", {"b": b})
    return ProblemSpec(
        a1, a2, alpha_spec, make_family("quadratic", {"b": b}), potentials, mu, p, q, Grid(n, L)
    )


def random_state(grid: Grid, rng: np.random.Generator) -> StatePair:
    bump = gaussian_bump(grid).values
    return StatePair.from_arrays(
        grid,
        bump * (1.0 + 0.5 * rng.standard_normal(grid.shape)),
        bump * (1.0 + 0.5 * rng.standard_normal(grid.shape)),
    )


@pytest.fixture(autouse=True)
def _reset_deterministic():
    yield
    set_deterministic(False)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def decoupled() -> ProblemSpec:
    return build_problem()


@pytest.fixture
def coupled() -> ProblemSpec:
    return build_problem(
        p=5.0, q=5.5, mu=1.5, V1="1.5 + 0.2*x^2/9", V2="1.2", lam="0.3*exp(-(x^2+y^2+z^2)/4)",
        a2=1.3,
    )


@pytest.fixture
def doubly_critical() -> ProblemSpec:
    return build_problem(n=10, L=6.0, p=6, q=6, lam="0.25")
