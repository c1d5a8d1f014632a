"""
Diagnostics: the Sobolev constant, the critical level bound, the Pohozaev
identity residual and the nonexistence certificate for the doubly critical
case p = q = 6.

x-weighted integrals are evaluated with x measured from the box center. They
are meaningful only for states that decay inside the box, which is quantified
by ``boundary_mass``.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .energy import ray_terms
from .errors import InvalidProblemError, PreconditionError, WrongRegimeError
from .field_grid import (
    Grid,
    ScalarField,
    StatePair,
    check_same_grid,
    grad_sq_integral,
    lp_power,
    quadrature,
)
from .model import ProblemSpec, ValidationReport, validate_V45

logger = logging.getLogger(__name__)

SHARP_SOBOLEV_CONSTANT = 3.0 * (math.pi / 2.0) ** (4.0 / 3.0)
SOBOLEV_PROVENANCE = {
    "value": SHARP_SOBOLEV_CONSTANT,
    "formula": "3 (pi/2)^(4/3)",
    "method": "closed form of the bubble quotient (3 pi^2/4) / (pi^2/4)^(1/3); "
    "reproduced numerically by sobolev_constant() within its error bar",
}

DEFAULT_LADDER = (32, 64, 128)
DEFAULT_SOBOLEV_SPACING = 0.125
BOUNDARY_MASS_WARNING = 1e-3


# ---------------------------------------------------------------------------
# Sobolev constant
# ---------------------------------------------------------------------------


@dataclass
class SobolevEstimate:
    """
    Extrapolated estimate of the sharp D^{1,2} -> L^6 constant.

    Attributes:
        value (float): Final extrapolated estimate.
        error (float): Difference of the last two extrapolations.
        quotients (list): (n, L, quotient) per ladder rung.
        extrapolated (list): Richardson estimate per consecutive pair.
    """

    value: float
    error: float
    quotients: List[Tuple[int, float, float]] = field(default_factory=list)
    extrapolated: List[float] = field(default_factory=list)
    reference: float = SHARP_SOBOLEV_CONSTANT

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["quotients"] = [
            {"n": n, "L": L, "quotient": q} for n, L, q in self.quotients
        ]
        return data


def talenti_bubble(grid: Grid, sigma: float = 1.0) -> ScalarField:
    """(1 + |x|^2 / sigma^2)^(-1/2), centered in the box."""
    return ScalarField(grid, (1.0 + grid.radius_sq() / sigma ** 2) ** -0.5)


def sobolev_quotient(f: ScalarField) -> float:
    """integral |grad f|^2 / (integral f^6)^(1/3)."""
    denominator = lp_power(f, 6.0) ** (1.0 / 3.0)
    if denominator == 0:
        raise PreconditionError("the Sobolev quotient is undefined for the zero field")
    return grad_sq_integral(f) / denominator


def sobolev_constant(
    n_refine: Sequence[int] = DEFAULT_LADDER,
    spacing: float = DEFAULT_SOBOLEV_SPACING,
    sigma: float = 1.0,
) -> SobolevEstimate:
    """
    Estimate S from bubble quotients on boxes of growing extent.

    At fixed spacing the truncation defect of the quotient is proportional to
    1/L (the tail of |grad U|^2 ~ |x|^-4 outside a cube), so each consecutive
    pair is extrapolated as S = (L2 Q2 - L1 Q1) / (L2 - L1).

    Args:
        n_refine (sequence of int): Increasing grid sizes; L = n * spacing.
        spacing (float): Fixed grid spacing.
        sigma (float): Bubble width.

    Returns:
        SobolevEstimate: Estimate with error bar and the raw ladder.
    """
    ladder = [int(n) for n in n_refine]
    if len(ladder) < 2 or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise InvalidProblemError("n_refine must hold at least two increasing sizes", "n_refine")
    quotients = []
    for n in ladder:
        grid = Grid(n, n * spacing)
        q = sobolev_quotient(talenti_bubble(grid, sigma))
        logger.info("bubble quotient n=%d L=%.4g: %.10f", n, grid.box_length, q)
        quotients.append((n, grid.box_length, q))
    extrapolated = [
        (l2 * q2 - l1 * q1) / (l2 - l1)
        for (_, l1, q1), (_, l2, q2) in zip(quotients, quotients[1:])
    ]
    value = extrapolated[-1]
    if len(extrapolated) > 1:
        error = abs(extrapolated[-1] - extrapolated[-2])
    else:
        error = abs(value - quotients[-1][2])
    return SobolevEstimate(value, error, quotients, extrapolated)


def level_bound(
    a1: float, a2: float, delta: float, p: float, S: float = SHARP_SOBOLEV_CONSTANT
) -> float:
    """
    Critical energy threshold (1/4 - 1/p) [(min(a1, a2) - delta) S]^(3/2).

    Raises:
        InvalidProblemError: If p <= 4 or delta >= min(a1, a2).
    """
    if not p > 4:
        raise InvalidProblemError(f"level bound needs p > 4, got {p}", "p")
    gap = min(a1, a2) - delta
    if not gap > 0:
        raise InvalidProblemError(
            f"level bound needs delta < min(a1, a2), got delta={delta}", "delta"
        )
    return (0.25 - 1.0 / p) * (gap * S) ** 1.5


# ---------------------------------------------------------------------------
# Pohozaev identity
# ---------------------------------------------------------------------------


@dataclass
class PohozaevReport:
    """
    Both sides of the Pohozaev identity evaluated by quadrature.

    ``form`` is ``"critical"`` for p = q = 6 and ``"extended"`` for the
    subcritical generalization with weights 6/p and 6/q.
    """

    lhs: float
    rhs: float
    residual_abs: float
    residual_rel: float
    boundary_mass: float
    form: str
    term_table: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def term_rows(self) -> List[Tuple[str, str, float]]:
        return [
            (name, "lhs" if name.startswith("lhs") else "rhs", value)
            for name, value in self.term_table.items()
        ]


@dataclass(frozen=True)
class _Integrals:
    coef_u: float
    coef_v: float
    grad_u: float
    grad_v: float
    v1_u2: float
    v2_v2: float
    radial_v1: float
    radial_v2: float
    radial_lam: float
    coupling: float
    power_p: float
    power_q: float


def _integrals(spec: ProblemSpec, s: StatePair, finite_difference: bool) -> _Integrals:
    check_same_grid(s, spec.grid)
    grid = spec.grid
    pots = spec.sampled()
    radial = spec.potentials.radial(grid, finite_difference)
    u, v = s.u.values, s.v.values
    terms = ray_terms(spec, s)
    slope_u = float(spec.alpha.deriv(terms.norm_u)) if terms.norm_u > 0 else 0.0
    slope_v = float(spec.beta.deriv(terms.norm_v)) if terms.norm_v > 0 else 0.0
    return _Integrals(
        coef_u=spec.a1 + slope_u,
        coef_v=spec.a2 + slope_v,
        grad_u=grad_sq_integral(s.u),
        grad_v=grad_sq_integral(s.v),
        v1_u2=quadrature(pots.V1.values * u * u, grid),
        v2_v2=quadrature(pots.V2.values * v * v, grid),
        radial_v1=quadrature(radial.V1.values * u * u, grid),
        radial_v2=quadrature(radial.V2.values * v * v, grid),
        radial_lam=quadrature(radial.lam.values * u * v, grid),
        coupling=terms.coupling,
        power_p=terms.power_p,
        power_q=terms.power_q,
    )


def boundary_mass(s: StatePair) -> float:
    """Share of integral (u^2 + v^2) carried by cells on the box faces."""
    density = s.u.values ** 2 + s.v.values ** 2
    total = quadrature(density, s.grid)
    if total == 0:
        return 0.0
    n = s.grid.n
    interior = density[1 : n - 1, 1 : n - 1, 1 : n - 1]
    edge = total - quadrature(interior, s.grid)
    return float(min(max(edge / total, 0.0), 1.0))


def pohozaev_residual(
    spec: ProblemSpec, s: StatePair, finite_difference: bool = False
) -> PohozaevReport:
    """
    Residual of the Pohozaev identity

        A1 int(|grad u|^2 + 3 V1 u^2) + A2 int(|grad v|^2 + 3 V2 v^2)
          = 2 int <grad lambda, x> u v - int(A1 <grad V1, x> u^2 + A2 <grad V2, x> v^2)
            + (6/p) mu ||u||_p^p + (6/q) ||v||_q^q + 6 int lambda u v

    with A1 = a1 + alpha'(||u||^2) and A2 = a2 + beta'(||v||^2).

    Raises:
        UnsupportedCheckError: If a potential lacks a gradient and
            ``finite_difference`` is not set.
    """
    it = _integrals(spec, s, finite_difference)
    table = {
        "lhs_grad_u": it.coef_u * it.grad_u,
        "lhs_potential_u": 3.0 * it.coef_u * it.v1_u2,
        "lhs_grad_v": it.coef_v * it.grad_v,
        "lhs_potential_v": 3.0 * it.coef_v * it.v2_v2,
        "rhs_radial_lambda": 2.0 * it.radial_lam,
        "rhs_radial_V1": -it.coef_u * it.radial_v1,
        "rhs_radial_V2": -it.coef_v * it.radial_v2,
        "rhs_power_p": 6.0 / spec.p * spec.mu * it.power_p,
        "rhs_power_q": 6.0 / spec.q * it.power_q,
        "rhs_coupling": 6.0 * it.coupling,
    }
    lhs = math.fsum(v for k, v in table.items() if k.startswith("lhs"))
    rhs = math.fsum(v for k, v in table.items() if k.startswith("rhs"))
    residual_abs = abs(lhs - rhs)
    residual_rel = residual_abs / (abs(lhs) + abs(rhs) + np.finfo(float).tiny)
    mass = boundary_mass(s)
    if mass > BOUNDARY_MASS_WARNING:
        logger.warning(
            "boundary mass %.3e exceeds %.0e; x-weighted integrals are truncation dominated",
            mass,
            BOUNDARY_MASS_WARNING,
        )
    form = "critical" if spec.p == 6 and spec.q == 6 else "extended"
    return PohozaevReport(lhs, rhs, residual_abs, min(residual_rel, 1.0), mass, form, table)


# ---------------------------------------------------------------------------
# Nonexistence certificate
# ---------------------------------------------------------------------------


@dataclass
class NonexistenceCertificate:
    """
    Incompatible bounds on Q = int[A1 V1 u^2 + A2 V2 v^2 - 2 lambda u v].

    For an exact solution Q equals ``pohozaev_bound`` (<= 0 under (V4)/(V5)),
    while (V3) forces Q >= ``strict_lower`` > 0 for positive states.
    """

    Q: float
    pohozaev_bound: float
    strict_lower: float
    gap: float
    verdict: str
    tolerance: float
    constants: Dict[str, Optional[float]] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def nonexistence_certificate(
    spec: ProblemSpec,
    s: StatePair,
    v45: Optional[ValidationReport] = None,
    finite_difference: bool = False,
    tol: float = 1e-10,
) -> NonexistenceCertificate:
    """
    Build the nonexistence certificate for a positive candidate state.

    Args:
        spec (ProblemSpec): Doubly critical instance (p = q = 6).
        s (StatePair): Candidate with u > 0 and v > 0 everywhere.
        v45 (ValidationReport, optional): Precomputed (V4)/(V5) report.
        finite_difference (bool): Allow finite-difference gradients.
        tol (float): Relative tolerance of the strict comparison.

    Raises:
        WrongRegimeError: Unless p = q = 6.
        PreconditionError: If the state is not positive or (V4)/(V5) fail.
    """
    if not (spec.p == 6 and spec.q == 6):
        raise WrongRegimeError(
            f"the nonexistence certificate needs p = q = 6, got p={spec.p}, q={spec.q}"
        )
    if not s.is_positive():
        raise PreconditionError("the certificate needs u > 0 and v > 0 at every node")
    report = v45 if v45 is not None else validate_V45(spec.potentials, spec.grid, finite_difference)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        raise PreconditionError(f"(V4)/(V5) do not hold: {names}")
    it = _integrals(spec, s, finite_difference)
    Q = it.coef_u * it.v1_u2 + it.coef_v * it.v2_v2 - 2.0 * it.coupling
    bound = it.radial_lam - 0.5 * (it.coef_u * it.radial_v1 + it.coef_v * it.radial_v2)
    lower = spec.coercivity * (it.v1_u2 + it.v2_v2)
    scale = tol * max(1.0, abs(Q), abs(bound), abs(lower))
    verdict = "contradiction" if lower > bound + scale else "inconclusive"
    constants = {c.name: c.constant for c in report.checks}
    logger.info("certificate: Q=%.6e bound=%.6e lower=%.6e -> %s", Q, bound, lower, verdict)
    return NonexistenceCertificate(Q, bound, lower, Q - bound, verdict, tol, constants)
