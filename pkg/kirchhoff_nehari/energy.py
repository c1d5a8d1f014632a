"""
Discrete energy functional, its gradient, the Nehari functional and the fiber
map along rays t -> t*(u, v).

Every quantity along a ray is an exact polynomial-plus-Kirchhoff expression in
five scalars (see :class:`RayTerms`), so the fiber map, its derivatives and the
Nehari projection never touch the fields after those scalars are formed.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    PreconditionError,
    ProjectionFailure,
    UndefinedOnOriginError,
)
from .field_grid import (
    StatePair,
    check_same_grid,
    laplacian_values,
    quadrature,
)
from .model import KirchhoffSpec, ProblemSpec

logger = logging.getLogger(__name__)

T_MIN = 1e-12
T_MAX = 1e12
ROOT_RTOL = 1e-12


@dataclass(frozen=True)
class RayTerms:
    """
    Scalars that determine the energy on the whole ray through a state.

    Attributes:
        norm_u (float): ||u||_{E1}^2.
        norm_v (float): ||v||_{E2}^2.
        coupling (float): integral of lambda u v.
        power_p (float): ||u||_p^p.
        power_q (float): ||v||_q^q.
    """

    norm_u: float
    norm_v: float
    coupling: float
    power_p: float
    power_q: float

    @property
    def state_norm_sq(self) -> float:
        return self.norm_u + self.norm_v

    def quadratic_form(self, spec: ProblemSpec) -> float:
        """a1 ||u||^2 + a2 ||v||^2 - 2 integral lambda u v."""
        return spec.a1 * self.norm_u + spec.a2 * self.norm_v - 2.0 * self.coupling


@dataclass(frozen=True)
class EnergyBreakdown:
    quad: float
    kirchhoff: float
    power_p: float
    power_q: float
    coupling: float
    total: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class FiberValue:
    g: float
    gprime: float


@dataclass(frozen=True)
class NehariProjection:
    t0: float
    projected: StatePair
    g_at_t0: float
    bracket: Tuple[float, float]
    iterations: int
    terms: RayTerms


@dataclass(frozen=True)
class _Evaluation:
    terms: RayTerms
    op_u: np.ndarray
    op_v: np.ndarray


def _slope(fn: KirchhoffSpec, s: float) -> float:
    return float(fn.deriv(s)) if s > 0 else 0.0


def _curvature(fn: KirchhoffSpec, s: float) -> float:
    return float(fn.deriv2(s)) if s > 0 else 0.0


def _signed_power(values: np.ndarray, exponent: float) -> np.ndarray:
    """sign(w) |w|^exponent, zero where w is zero."""
    return np.sign(values) * np.abs(values) ** exponent


def _evaluate(spec: ProblemSpec, s: StatePair) -> _Evaluation:
    check_same_grid(s, spec.grid)
    grid = spec.grid
    pots = spec.sampled()
    u, v = s.u.values, s.v.values
    h = grid.spacing
    # (-Lap + V_i) applied to each component
    op_u = -laplacian_values(u, h) + pots.V1.values * u
    op_v = -laplacian_values(v, h) + pots.V2.values * v
    terms = RayTerms(
        norm_u=max(quadrature(u * op_u, grid), 0.0),
        norm_v=max(quadrature(v * op_v, grid), 0.0),
        coupling=quadrature(pots.lam.values * u * v, grid),
        power_p=quadrature(np.abs(u) ** spec.p, grid),
        power_q=quadrature(np.abs(v) ** spec.q, grid),
    )
    return _Evaluation(terms, op_u, op_v)


def ray_terms(spec: ProblemSpec, s: StatePair) -> RayTerms:
    return _evaluate(spec, s).terms


def energy_from_terms(spec: ProblemSpec, terms: RayTerms) -> EnergyBreakdown:
    quad = 0.5 * (spec.a1 * terms.norm_u + spec.a2 * terms.norm_v)
    kirchhoff = 0.5 * (float(spec.alpha.value(terms.norm_u)) + float(spec.beta.value(terms.norm_v)))
    power_p = spec.mu / spec.p * terms.power_p
    power_q = terms.power_q / spec.q
    coupling = terms.coupling
    total = quad + kirchhoff - power_p - power_q - coupling
    return EnergyBreakdown(quad, kirchhoff, power_p, power_q, coupling, total)


def energy(spec: ProblemSpec, s: StatePair) -> EnergyBreakdown:
    """
    Evaluate I(u, v) term by term.

    Raises:
        GridMismatchError: If the state is not on ``spec.grid``.
    """
    return energy_from_terms(spec, ray_terms(spec, s))


def _gradient_from(spec: ProblemSpec, s: StatePair, ev: _Evaluation) -> StatePair:
    pots = spec.sampled()
    u, v = s.u.values, s.v.values
    coef_u = spec.a1 + _slope(spec.alpha, ev.terms.norm_u)
    coef_v = spec.a2 + _slope(spec.beta, ev.terms.norm_v)
    lam = pots.lam.values
    g_u = coef_u * ev.op_u - spec.mu * _signed_power(u, spec.p - 1.0) - lam * v
    g_v = coef_v * ev.op_v - _signed_power(v, spec.q - 1.0) - lam * u
    return StatePair.from_arrays(spec.grid, g_u, g_v)


def energy_gradient(spec: ProblemSpec, s: StatePair) -> StatePair:
    """
    L^2-representative of dI: <I'(s), d> = integrate(G_u d_u) + integrate(G_v d_v).

    G_u = (a1 + alpha'(||u||^2)) (-Lap u + V1 u) - mu |u|^{p-2} u - lambda v, and
    G_v likewise with beta, V2, q and no mu.
    """
    return _gradient_from(spec, s, _evaluate(spec, s))


def energy_and_gradient(
    spec: ProblemSpec, s: StatePair
) -> Tuple[EnergyBreakdown, StatePair, RayTerms]:
    ev = _evaluate(spec, s)
    return energy_from_terms(spec, ev.terms), _gradient_from(spec, s, ev), ev.terms


def nehari_terms(spec: ProblemSpec, terms: RayTerms) -> Dict[str, float]:
    """Signed summands of J; their absolute sum is the scale for relative residuals."""
    return {
        "quadratic": spec.a1 * terms.norm_u + spec.a2 * terms.norm_v,
        "kirchhoff": _slope(spec.alpha, terms.norm_u) * terms.norm_u
        + _slope(spec.beta, terms.norm_v) * terms.norm_v,
        "coupling": -2.0 * terms.coupling,
        "power_p": -spec.mu * terms.power_p,
        "power_q": -terms.power_q,
    }


def nehari_from_terms(spec: ProblemSpec, terms: RayTerms) -> float:
    return math.fsum(nehari_terms(spec, terms).values())


def nehari_residual(spec: ProblemSpec, terms: RayTerms) -> float:
    """|J| relative to the sum of magnitudes of its summands."""
    parts = nehari_terms(spec, terms)
    scale = math.fsum(abs(x) for x in parts.values())
    return abs(math.fsum(parts.values())) / scale if scale > 0 else 0.0


def nehari_J(spec: ProblemSpec, s: StatePair) -> float:
    """
    J(s) = I'(s)s.

    Raises:
        UndefinedOnOriginError: For the zero state.
    """
    if s.is_zero():
        raise UndefinedOnOriginError("the Nehari functional is not defined at (0, 0)")
    return nehari_from_terms(spec, ray_terms(spec, s))


def fiber_from_terms(spec: ProblemSpec, terms: RayTerms, t: float) -> FiberValue:
    t2 = t * t
    su, sv = t2 * terms.norm_u, t2 * terms.norm_v
    mu, p, q = spec.mu, spec.p, spec.q
    g = (
        0.5 * t2 * (spec.a1 * terms.norm_u + spec.a2 * terms.norm_v)
        + 0.5 * (float(spec.alpha.value(su)) + float(spec.beta.value(sv)))
        - mu * t ** p * terms.power_p / p
        - t ** q * terms.power_q / q
        - t2 * terms.coupling
    )
    return FiberValue(g, fiber_derivative(spec, terms, t))


def fiber_derivative(spec: ProblemSpec, terms: RayTerms, t: float) -> float:
    t2 = t * t
    return (
        t * terms.quadratic_form(spec)
        + t * terms.norm_u * _slope(spec.alpha, t2 * terms.norm_u)
        + t * terms.norm_v * _slope(spec.beta, t2 * terms.norm_v)
        - spec.mu * t ** (spec.p - 1.0) * terms.power_p
        - t ** (spec.q - 1.0) * terms.power_q
    )


def fiber_curvature_from_terms(spec: ProblemSpec, terms: RayTerms, t: float) -> float:
    t2 = t * t
    su, sv = t2 * terms.norm_u, t2 * terms.norm_v
    return (
        terms.quadratic_form(spec)
        + terms.norm_u * _slope(spec.alpha, su)
        + 2.0 * t2 * terms.norm_u ** 2 * _curvature(spec.alpha, su)
        + terms.norm_v * _slope(spec.beta, sv)
        + 2.0 * t2 * terms.norm_v ** 2 * _curvature(spec.beta, sv)
        - spec.mu * (spec.p - 1.0) * t ** (spec.p - 2.0) * terms.power_p
        - (spec.q - 1.0) * t ** (spec.q - 2.0) * terms.power_q
    )


def fiber(spec: ProblemSpec, s: StatePair, t: float) -> FiberValue:
    """
    g(t) = I(t s) and g'(t) = J(t s) / t.

    Raises:
        PreconditionError: If t <= 0.
        UndefinedOnOriginError: For the zero state.
    """
    if not t > 0:
        raise PreconditionError(f"fiber parameter must be positive, got {t}")
    if s.is_zero():
        raise UndefinedOnOriginError("the fiber through (0, 0) is degenerate")
    return fiber_from_terms(spec, ray_terms(spec, s), t)


def fiber_curvature(spec: ProblemSpec, s: StatePair, t: float = 1.0) -> float:
    """Analytic g''(t)."""
    if not t > 0:
        raise PreconditionError(f"fiber parameter must be positive, got {t}")
    return fiber_curvature_from_terms(spec, ray_terms(spec, s), t)


def nehari_transversality(spec: ProblemSpec, s: StatePair) -> float:
    """
    d/dt J(t s) at t = 1, i.e. 2Q + 2 alpha'' ||u||^4 + 2 alpha' ||u||^2 + (beta
    terms) - mu p ||u||_p^p - q ||v||_q^q. Strictly negative on the manifold.
    """
    terms = ray_terms(spec, s)
    return fiber_derivative(spec, terms, 1.0) + fiber_curvature_from_terms(spec, terms, 1.0)


def project_terms(spec: ProblemSpec, terms: RayTerms) -> Tuple[float, Tuple[float, float], int]:
    """
    Locate the unique root t0 of the fiber derivative for the given ray.

    Returns:
        tuple: (t0, (t_lo, t_hi), iterations) with g'(t_lo) > 0 > g'(t_hi).

    Raises:
        ProjectionFailure: If the ray carries no power term or no sign change
            exists in [1e-12, 1e12].
    """
    if spec.mu * terms.power_p + terms.power_q <= 0:
        raise ProjectionFailure(
            "the ray carries no power term (mu ||u||_p^p + ||v||_q^q = 0); "
            "g' stays positive and no Nehari point exists"
        )

    def gp(t: float) -> float:
        return fiber_derivative(spec, terms, t)

    g1 = gp(1.0)
    lo, hi = 1.0, 1.0
    if g1 >= 0:
        hi = 2.0
        while gp(hi) >= 0:
            lo = hi
            hi *= 2.0
            if hi > T_MAX:
                raise ProjectionFailure(f"g' stays nonnegative up to t={T_MAX:g}")
    if g1 <= 0:
        lo = 0.5
        while gp(lo) <= 0:
            if g1 < 0:
                hi = lo
            lo *= 0.5
            if lo < T_MIN:
                raise ProjectionFailure(f"g' stays nonpositive down to t={T_MIN:g}")
    t0, result = brentq(gp, lo, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=500, full_output=True)
    if not result.converged:
        raise ProjectionFailure(f"fiber root search did not converge: {result.flag}")
    return float(t0), (lo, hi), int(result.iterations)


def nehari_project(spec: ProblemSpec, s: StatePair) -> NehariProjection:
    """
    Scale a nonzero state onto the Nehari manifold along its ray.

    The bracket is grown from t = 1 by halving/doubling, then refined with
    Brent's method (bisection safeguarded inverse interpolation) to a relative
    width of 1e-12.

    Raises:
        UndefinedOnOriginError: For the zero state.
        ProjectionFailure: If no sign change of g' exists in [1e-12, 1e12].
    """
    if s.is_zero():
        raise UndefinedOnOriginError("cannot project (0, 0) onto the Nehari manifold")
    terms = ray_terms(spec, s)
    t0, bracket, iterations = project_terms(spec, terms)
    projected = s.scale(t0)
    value = fiber_from_terms(spec, terms, t0).g
    logger.debug("projected ray: t0=%.12g bracket=%s iterations=%d", t0, bracket, iterations)
    return NehariProjection(
        t0, projected, value, bracket, iterations, scale_terms(spec, terms, t0)
    )


def scale_terms(spec: ProblemSpec, terms: RayTerms, t: float) -> RayTerms:
    """Ray terms of t*s, computed without touching the fields."""
    t2 = t * t
    return RayTerms(
        terms.norm_u * t2,
        terms.norm_v * t2,
        terms.coupling * t2,
        terms.power_p * t ** spec.p,
        terms.power_q * t ** spec.q,
    )


def coercivity_gap(spec: ProblemSpec, s: StatePair) -> float:
    """a1||u||^2 + a2||v||^2 - 2 int lambda u v - (min(a1,a2) - delta) ||(u,v)||_E^2."""
    terms = ray_terms(spec, s)
    return terms.quadratic_form(spec) - spec.coercivity * terms.state_norm_sq


def embedding_constant(spec: ProblemSpec, r: float) -> float:
    """
    Discrete constant K_r with ||w||_r^r <= K_r ||w||_E^r on the grid, from
    ||w||_inf <= h^{-3/2} ||w||_2 and ||w||_2^2 <= ||w||_E^2 / min V.
    """
    pots = spec.sampled()
    v_min = min(pots.V1.min(), pots.V2.min())
    if v_min <= 0:
        return math.inf
    h = spec.grid.spacing
    return h ** (-1.5 * (r - 2.0)) * v_min ** (-0.5 * r)


def nehari_radius_bound(spec: ProblemSpec) -> float:
    """
    Radius r* > 0 such that every Nehari point satisfies ||s||_E >= r*.

    Solves (min(a1,a2) - delta) = mu K_p r^{p-2} + K_q r^{q-2}; returns 0.0
    when min V = 0 and no embedding constant is available.
    """
    k_p = embedding_constant(spec, spec.p)
    k_q = embedding_constant(spec, spec.q)
    if not (math.isfinite(k_p) and math.isfinite(k_q)):
        return 0.0
    target = spec.coercivity

    def excess(rho: float) -> float:
        return spec.mu * k_p * rho ** (spec.p - 2.0) + k_q * rho ** (spec.q - 2.0) - target

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
    lo = hi / 2.0
    while excess(lo) > 0:
        lo /= 2.0
        if lo < 1e-300:
            return 0.0
    return float(brentq(excess, lo, hi, rtol=1e-12))


def nehari_energy_norm_bound(spec: ProblemSpec, level: float) -> float:
    """Upper bound on ||s||_E^2 for Nehari points at energy ``level``."""
    factor = (0.5 - 1.0 / spec.p) * spec.coercivity
    return level / factor
