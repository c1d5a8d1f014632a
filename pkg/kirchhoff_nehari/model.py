"""
Problem data: Kirchhoff functions, potentials and coupling, the problem
instance, and sampled validators for the structural hypotheses.

Hypotheses are checked by sampling, never symbolically. Kirchhoff hypotheses
(M1)-(M4) use a log-spaced grid over [1e-6, 1e6]; potential hypotheses
(V1)-(V5) are checked at the grid nodes.
"""

import dataclasses
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    InvalidFamilyError,
    InvalidProblemError,
    UnsupportedCheckError,
)
from .expressions import SpatialExpression, compile_scalar, compile_spatial
from .field_grid import (
    Grid,
    ScalarField,
    grad_sq_integral,
    quadrature,
    random_smooth_field,
)

logger = logging.getLogger(__name__)

ArrayFunc = Callable[[Any], Any]

FAMILIES = ("quadratic", "quadratic_plus_powers", "log_integral", "custom")

S_RANGE = (1e-6, 1e6)
DEFAULT_SAMPLES = 512
RTOL = 1e-9


# ---------------------------------------------------------------------------
# Kirchhoff functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KirchhoffSpec:
    """
    A Kirchhoff function with its first two derivatives.

    Attributes:
        family (str): One of :data:`FAMILIES`.
        params (dict): Family parameters as given.
        value, deriv, deriv2: Vectorized callables of s >= 0.
        linear_bound (float): Constant b with deriv(s) <= b * s.
    """

    family: str
    params: Mapping[str, Any]
    value: ArrayFunc = field(repr=False)
    deriv: ArrayFunc = field(repr=False)
    deriv2: ArrayFunc = field(repr=False)
    linear_bound: float = math.inf

    def at(self, s: float) -> Tuple[float, float, float]:
        """(value, deriv, deriv2) at a scalar argument."""
        return float(self.value(s)), float(self.deriv(s)), float(self.deriv2(s))

    def describe(self) -> Dict[str, Any]:
        params = {k: v for k, v in self.params.items() if not callable(v)}
        return {"family": self.family, "params": params, "linear_bound": self.linear_bound}


def _positive(params: Mapping[str, Any], key: str, family: str) -> float:
    if key not in params:
        raise InvalidFamilyError(f"family {family!r} requires parameter {key!r}")
    value = float(params[key])
    if not value > 0:
        raise InvalidFamilyError(f"family {family!r}: {key} must be > 0, got {value}")
    return value


def _quadratic(params: Mapping[str, Any]) -> KirchhoffSpec:
    b = _positive(params, "b", "quadratic")
    return KirchhoffSpec(
        "quadratic",
        dict(params),
        value=lambda s: 0.5 * b * np.asarray(s, dtype=float) ** 2,
        deriv=lambda s: b * np.asarray(s, dtype=float),
        deriv2=lambda s: b * np.ones_like(np.asarray(s, dtype=float)),
        linear_bound=b,
    )


def _quadratic_plus_powers(params: Mapping[str, Any]) -> KirchhoffSpec:
    b = _positive(params, "b", "quadratic_plus_powers")
    coeffs = [float(a) for a in params.get("a", [])]
    gammas = [float(g) for g in params.get("gamma", [])]
    if not coeffs or len(coeffs) != len(gammas):
        raise InvalidFamilyError(
            "quadratic_plus_powers needs equally long non-empty lists 'a' and 'gamma'"
        )
    for a in coeffs:
        if not a > 0:
            raise InvalidFamilyError(f"quadratic_plus_powers: coefficients must be > 0, got {a}")
    for g in gammas:
        if not 0 < g < 1:
            raise InvalidFamilyError(f"quadratic_plus_powers: gamma must lie in (0, 1), got {g}")
    terms = list(zip(coeffs, gammas))

    def value(s: Any) -> Any:
        s = np.asarray(s, dtype=float)
        return 0.5 * b * s ** 2 + sum(a * s ** g for a, g in terms)

    def deriv(s: Any) -> Any:
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return b * s + sum(a * g * s ** (g - 1.0) for a, g in terms)

    def deriv2(s: Any) -> Any:
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore"):
            return b + sum(a * g * (g - 1.0) * s ** (g - 2.0) for a, g in terms)

    return KirchhoffSpec(
        "quadratic_plus_powers",
        {"b": b, "a": coeffs, "gamma": gammas},
        value,
        deriv,
        deriv2,
        linear_bound=b,
    )


def _log_integral(params: Mapping[str, Any]) -> KirchhoffSpec:
    def value(s: Any) -> Any:
        s = np.asarray(s, dtype=float)
        return (1.0 + s) * np.log1p(s) - s

    return KirchhoffSpec(
        "log_integral",
        dict(params),
        value=value,
        deriv=lambda s: np.log1p(np.asarray(s, dtype=float)),
        deriv2=lambda s: 1.0 / (1.0 + np.asarray(s, dtype=float)),
        linear_bound=1.0,
    )


def _custom(params: Mapping[str, Any]) -> KirchhoffSpec:
    if "expr" in params:
        compiled = compile_scalar(str(params["expr"]))
        value, deriv, deriv2 = compiled.value, compiled.deriv, compiled.deriv2
        shown: Dict[str, Any] = {"expr": compiled.text}
    elif all(k in params for k in ("value", "deriv", "deriv2")):
        value, deriv, deriv2 = params["value"], params["deriv"], params["deriv2"]
        shown = {}
    else:
        raise InvalidFamilyError(
            "custom family needs 'expr' or the three callables 'value', 'deriv', 'deriv2'"
        )
    if "b" in params:
        b = float(params["b"])
    else:
        s = sample_points()
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.asarray(deriv(s), dtype=float) / s
        finite = ratio[np.isfinite(ratio)]
        b = float(max(finite.max(), 0.0)) if finite.size else math.inf
        logger.debug("estimated linear bound b=%.6g for custom family", b)
    shown["b"] = b
    return KirchhoffSpec("custom", shown, value, deriv, deriv2, linear_bound=b)


_BUILDERS: Dict[str, Callable[[Mapping[str, Any]], KirchhoffSpec]] = {
    "quadratic": _quadratic,
    "quadratic_plus_powers": _quadratic_plus_powers,
    "log_integral": _log_integral,
    "custom": _custom,
}


def make_family(tag: str, params: Optional[Mapping[str, Any]] = None) -> KirchhoffSpec:
    """
    Build a Kirchhoff function from a family tag.

    Args:
        tag (str): ``quadratic`` {b}, ``quadratic_plus_powers`` {b, a, gamma},
            ``log_integral`` {} or ``custom`` {expr | value/deriv/deriv2, b?}.
        params (dict, optional): Family parameters.

    Returns:
        KirchhoffSpec: The coded function and derivatives.

    Raises:
        InvalidFamilyError: For unknown tags or out-of-range parameters.
    """
    builder = _BUILDERS.get(tag)
    if builder is None:
        raise InvalidFamilyError(f"unknown Kirchhoff family {tag!r}; expected one of {FAMILIES}")
    return builder(params or {})


# ---------------------------------------------------------------------------
# Validation reports
# ---------------------------------------------------------------------------


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    required: bool = True
    detail: str = ""
    counterexample: Optional[Dict[str, Any]] = None
    constant: Optional[float] = None
    warning: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class ValidationReport:
    checks: List[HypothesisCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.required)

    def failures(self) -> List[HypothesisCheck]:
        return [c for c in self.checks if c.required and not c.passed]

    def get(self, name: str) -> HypothesisCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def extend(self, other: "ValidationReport") -> "ValidationReport":
        return ValidationReport(self.checks + other.checks)

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def format_table(self) -> str:
        rows = []
        for c in self.checks:
            if c.passed:
                mark = "✅" if c.warning is None else "⚠️"
            else:
                mark = "❌" if c.required else "➖"
            line = f"{mark} {c.name:<10} {c.detail}"
            if c.constant is not None:
                line += f" [C={c.constant:.6g}]"
            if c.counterexample and not c.passed:
                point = ", ".join(f"{k}={_fmt(v)}" for k, v in c.counterexample.items())
                line += f"\n      first failure: {point}"
            if c.warning:
                line += f"\n      warning: {c.warning}"
            rows.append(line)
        return "\n".join(rows)


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "(" + ", ".join(_fmt(v) for v in value) + ")"
    return str(value)


# ---------------------------------------------------------------------------
# (M1)-(M4)
# ---------------------------------------------------------------------------


def sample_points(samples: int = DEFAULT_SAMPLES) -> np.ndarray:
    return np.logspace(math.log10(S_RANGE[0]), math.log10(S_RANGE[1]), samples)


def _tolerance(*sides: np.ndarray) -> np.ndarray:
    return RTOL * sum(np.abs(x) for x in sides) + 1e-300


def _first_violation(mask: np.ndarray) -> Optional[int]:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if idx.size else None


def _check_family_m(name: str, spec: KirchhoffSpec, s: np.ndarray) -> Dict[str, HypothesisCheck]:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = np.asarray(spec.value(s), dtype=float)
        d1 = np.asarray(spec.deriv(s), dtype=float)
        d2 = np.asarray(spec.deriv2(s), dtype=float)
    finite = np.isfinite(a) & np.isfinite(d1) & np.isfinite(d2)
    checks: Dict[str, HypothesisCheck] = {}

    # (M1) deriv increasing, accepted non-strictly
    step = d1[1:] - d1[:-1]
    bad = step < -_tolerance(d1[1:], d1[:-1])
    bad |= ~(finite[1:] & finite[:-1])
    k = _first_violation(bad)
    m1 = HypothesisCheck("M1", k is None, detail=f"{name}' increasing")
    if k is not None:
        m1.counterexample = {"function": name, "s": float(s[k]), "s_next": float(s[k + 1]),
                             "deriv": float(d1[k]), "deriv_next": float(d1[k + 1])}
    elif np.any(step <= _tolerance(d1[1:], d1[:-1])):
        m1.warning = f"{name}' has plateaus (monotone only non-strictly)"
    checks["M1"] = m1

    # (M2) deriv(s)/s non-increasing
    ratio = d1 / s
    bad = ratio[1:] > ratio[:-1] + _tolerance(ratio[1:], ratio[:-1])
    bad |= ~(finite[1:] & finite[:-1])
    k = _first_violation(bad)
    m2 = HypothesisCheck("M2", k is None, detail=f"{name}'(s)/s non-increasing")
    if k is not None:
        m2.counterexample = {"function": name, "s": float(s[k]), "s_next": float(s[k + 1]),
                             "ratio": float(ratio[k]), "ratio_next": float(ratio[k + 1])}
    checks["M2"] = m2

    # (M3) linear bound deriv(s) <= b s
    b = spec.linear_bound
    bound = b * s
    bad = ~finite | ~(d1 <= bound + _tolerance(d1, bound))
    k = _first_violation(bad)
    m3 = HypothesisCheck("M3", k is None, detail=f"{name}'(s) <= b s", constant=b)
    if k is not None:
        m3.counterexample = {"function": name, "s": float(s[k]), "deriv": float(d1[k]),
                             "b_s": float(bound[k])}
    checks["M3"] = m3

    # (M4) deriv2(s) s <= deriv(s)
    lhs = d2 * s
    bad = ~finite | (lhs > d1 + _tolerance(lhs, d1))
    k = _first_violation(bad)
    m4 = HypothesisCheck("M4", k is None, detail=f"{name}''(s) s <= {name}'(s)")
    if k is not None:
        m4.counterexample = {"function": name, "s": float(s[k]), "lhs": float(lhs[k]),
                             "rhs": float(d1[k])}
    checks["M4"] = m4
    return checks


def _merge(label: str, detail: str, parts: Sequence[HypothesisCheck]) -> HypothesisCheck:
    failed = [c for c in parts if not c.passed]
    merged = HypothesisCheck(label, not failed, detail=detail)
    if failed:
        merged.counterexample = failed[0].counterexample
    constants = [c.constant for c in parts if c.constant is not None]
    if constants:
        merged.constant = max(constants)
    warnings = [c.warning for c in parts if c.warning]
    if warnings:
        merged.warning = "; ".join(warnings)
    return merged


def validate_M(
    spec_alpha: KirchhoffSpec, spec_beta: KirchhoffSpec, samples: int = DEFAULT_SAMPLES
) -> ValidationReport:
    """
    Sampled check of (M1)-(M4) for a pair of Kirchhoff functions.

    The (M3) two-sided bracket is checked on the full product grid (s, t).
    Failures are report entries carrying the first counterexample point.
    """
    if samples < 2:
        raise ValueError("validate_M needs at least 2 samples")
    s = sample_points(samples)
    per_alpha = _check_family_m("alpha", spec_alpha, s)
    per_beta = _check_family_m("beta", spec_beta, s)
    checks = [
        _merge("M1", "alpha', beta' increasing", [per_alpha["M1"], per_beta["M1"]]),
        _merge("M2", "alpha'(s)/s, beta'(t)/t non-increasing", [per_alpha["M2"], per_beta["M2"]]),
        _merge("M3", "alpha'(s) <= b1 s, beta'(t) <= b2 t", [per_alpha["M3"], per_beta["M3"]]),
        _bracket_check(spec_alpha, spec_beta, s),
        _merge("M4", "alpha'' s <= alpha', beta'' t <= beta'", [per_alpha["M4"], per_beta["M4"]]),
        _derivative_check(spec_alpha, spec_beta, s),
    ]
    report = ValidationReport(checks)
    for failure in report.failures():
        logger.info("hypothesis %s failed at %s", failure.name, failure.counterexample)
    return report


def _bracket_check(alpha: KirchhoffSpec, beta: KirchhoffSpec, s: np.ndarray) -> HypothesisCheck:
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a_val = np.asarray(alpha.value(s), dtype=float)
        a_ds = np.asarray(alpha.deriv(s), dtype=float) * s
        b_val = np.asarray(beta.value(s), dtype=float)
        b_dt = np.asarray(beta.deriv(s), dtype=float) * s
    middle = a_val[:, None] + b_val[None, :]
    upper = a_ds[:, None] + b_dt[None, :]
    lower = 0.5 * upper
    tol = _tolerance(middle, upper)
    bad = ~np.isfinite(middle) | ~np.isfinite(upper)
    bad |= lower > middle + tol
    bad |= middle > upper + tol
    check = HypothesisCheck(
        "M3-bracket", not bool(bad.any()),
        detail="(alpha' s + beta' t)/2 <= alpha + beta <= alpha' s + beta' t",
    )
    if bad.any():
        i, j = np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), bad.shape)
        check.counterexample = {
            "s": float(s[i]), "t": float(s[j]), "lower": float(lower[i, j]),
            "middle": float(middle[i, j]), "upper": float(upper[i, j]),
        }
    return check


def derivative_error(spec: KirchhoffSpec, s: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Relative mismatch of deriv and deriv2 against central differences of the level below."""
    h = 1e-4 * s
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        fd1 = (np.asarray(spec.value(s + h)) - np.asarray(spec.value(s - h))) / (2 * h)
        fd2 = (np.asarray(spec.deriv(s + h)) - np.asarray(spec.deriv(s - h))) / (2 * h)
        d1 = np.asarray(spec.deriv(s), dtype=float)
        d2 = np.asarray(spec.deriv2(s), dtype=float)
        err1 = np.abs(d1 - fd1) / (1.0 + np.abs(d1))
        err2 = np.abs(d2 - fd2) / (1.0 + np.abs(d2))
    return err1, err2


def _derivative_check(alpha: KirchhoffSpec, beta: KirchhoffSpec, s: np.ndarray) -> HypothesisCheck:
    check = HypothesisCheck("C2", True, detail="coded derivatives match finite differences")
    worst = 0.0
    for name, spec in (("alpha", alpha), ("beta", beta)):
        err1, err2 = derivative_error(spec, s)
        err = np.nan_to_num(np.maximum(err1, err2), nan=np.inf)
        worst = max(worst, float(err.max()))
        k = _first_violation(err > 1e-6)
        if k is not None and check.passed:
            check.passed = False
            check.counterexample = {"function": name, "s": float(s[k]), "error": float(err[k])}
    check.constant = worst
    return check


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """
    A continuous function of x in R^3, optionally with its gradient.

    Attributes:
        label (str): Name used in reports.
        func: Vectorized callable ``func(x, y, z)``.
        gradient: Optional callable returning ``(dx, dy, dz)``.
        expression (str, optional): Source text when built from an expression.
    """

    label: str
    func: Callable[..., Any] = field(repr=False)
    gradient: Optional[Callable[..., Tuple[Any, Any, Any]]] = field(default=None, repr=False)
    expression: Optional[str] = None

    @classmethod
    def from_expression(cls, text: str, label: str) -> "Potential":
        compiled: SpatialExpression = compile_spatial(text)
        return cls(label, compiled.value, compiled.gradient, compiled.text)

    @classmethod
    def constant(cls, value: float, label: str) -> "Potential":
        c = float(value)
        return cls(
            label,
            lambda x, y, z: np.full(np.broadcast(x, y, z).shape, c),
            lambda x, y, z: tuple(np.zeros(np.broadcast(x, y, z).shape) for _ in range(3)),
            repr(c),
        )

    def sample(self, grid: Grid) -> ScalarField:
        return grid.sample(self.func, self.label)

    def radial_derivative(self, grid: Grid, finite_difference: bool = False) -> ScalarField:
        """<grad f(x), x> at the nodes, x measured from the box center."""
        x, y, z = grid.coordinates
        if self.gradient is not None:
            gx, gy, gz = self.gradient(x, y, z)
        elif finite_difference:
            values = self.sample(grid).values
            gx, gy, gz = np.gradient(values, grid.spacing, edge_order=2)
        else:
            raise UnsupportedCheckError(
                f"potential {self.label!r} has no gradient; enable finite differences"
            )
        return ScalarField(grid, np.asarray(gx) * x + np.asarray(gy) * y + np.asarray(gz) * z)


@dataclass(frozen=True)
class SampledPotentials:
    V1: ScalarField
    V2: ScalarField
    lam: ScalarField


@dataclass(frozen=True, eq=False)
class PotentialSet:
    """
    Potentials V1, V2, coupling lambda, coupling constant delta and the
    integer periods of (V1).
    """

    V1: Potential
    V2: Potential
    lam: Potential
    delta: float
    periods: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    _cache: Dict[Any, Any] = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise InvalidProblemError(f"delta must be positive, got {self.delta}", "delta")
        periods = tuple(float(p) for p in self.periods)
        if len(periods) != 3 or any(p <= 0 for p in periods):
            raise InvalidProblemError(f"periods must be three positive numbers, got {self.periods}",
                                      "periods")
        object.__setattr__(self, "periods", periods)

    def sample(self, grid: Grid) -> SampledPotentials:
        key = ("sample", grid)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = SampledPotentials(
                    self.V1.sample(grid), self.V2.sample(grid), self.lam.sample(grid)
                )
        return self._cache[key]

    def radial(self, grid: Grid, finite_difference: bool = False) -> SampledPotentials:
        key = ("radial", grid, finite_difference)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = SampledPotentials(
                    self.V1.radial_derivative(grid, finite_difference),
                    self.V2.radial_derivative(grid, finite_difference),
                    self.lam.radial_derivative(grid, finite_difference),
                )
        return self._cache[key]

    def describe(self) -> Dict[str, Any]:
        return {
            "V1": self.V1.expression,
            "V2": self.V2.expression,
            "lambda": self.lam.expression,
            "delta": self.delta,
            "periods": list(self.periods),
        }


# ---------------------------------------------------------------------------
# Problem instance
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """
    One instance of the coupled Kirchhoff-Schrodinger system on a grid.

    Raises:
        InvalidProblemError: Unless a1, a2 > 0, mu >= 0, 4 < p <= q <= 6 and
            delta < min(a1, a2).
    """

    a1: float
    a2: float
    alpha: KirchhoffSpec
    beta: KirchhoffSpec
    potentials: PotentialSet
    mu: float
    p: float
    q: float
    grid: Grid

    def __post_init__(self) -> None:
        for name in ("a1", "a2"):
            if not getattr(self, name) > 0:
                raise InvalidProblemError(f"{name} must be > 0, got {getattr(self, name)}", name)
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise InvalidProblemError(f"mu must be >= 0, got {self.mu}", "mu")
        if not (4 < self.p <= self.q <= 6):
            raise InvalidProblemError(
                f"exponents must satisfy 4 < p <= q <= 6, got p={self.p}, q={self.q}",
                "p" if not 4 < self.p <= 6 else "q",
            )
        if not self.potentials.delta < min(self.a1, self.a2):
            raise InvalidProblemError(
                f"delta={self.potentials.delta} must be < min(a1, a2)={min(self.a1, self.a2)}",
                "delta",
            )

    @property
    def delta(self) -> float:
        return self.potentials.delta

    @property
    def coercivity(self) -> float:
        """min(a1, a2) - delta."""
        return min(self.a1, self.a2) - self.potentials.delta

    @property
    def regime(self) -> str:
        if self.q < 6:
            return "subcritical"
        if self.p < 6:
            return "critical"
        return "doubly_critical"

    def sampled(self) -> SampledPotentials:
        return self.potentials.sample(self.grid)

    def with_mu(self, mu: float) -> "ProblemSpec":
        return dataclasses.replace(self, mu=float(mu))

    def with_grid(self, grid: Grid) -> "ProblemSpec":
        return dataclasses.replace(self, grid=grid)

    def describe(self) -> Dict[str, Any]:
        return {
            "a1": self.a1,
            "a2": self.a2,
            "mu": self.mu,
            "p": self.p,
            "q": self.q,
            "regime": self.regime,
            "alpha": self.alpha.describe(),
            "beta": self.beta.describe(),
            "potentials": self.potentials.describe(),
            "grid": {"n": self.grid.n, "L": self.grid.box_length},
        }


# ---------------------------------------------------------------------------
# (V1)-(V3'), (V4), (V5)
# ---------------------------------------------------------------------------


def _point(grid: Grid, flat_index: int) -> List[float]:
    idx = np.unravel_index(flat_index, grid.shape)
    return [float(grid.axis[i]) for i in idx]


def _periodicity_check(potentials: PotentialSet, grid: Grid) -> HypothesisCheck:
    check = HypothesisCheck("V1", True, detail="V1, V2, lambda periodic with declared periods")
    for axis, period in enumerate(potentials.periods):
        cells = grid.cells_per_period(period)
        if cells is None:
            check.passed = False
            check.counterexample = {"axis": "xyz"[axis], "period": period,
                                    "box_length": grid.box_length, "spacing": grid.spacing}
            return check
        for pot in (potentials.V1, potentials.V2, potentials.lam):
            values = pot.sample(grid).values
            moved = np.roll(values, -cells, axis=axis)
            gap = np.abs(moved - values)
            bad = gap > 1e-9 * (1.0 + np.abs(values))
            if bad.any():
                k = int(np.flatnonzero(bad.ravel())[0])
                check.passed = False
                check.counterexample = {"potential": pot.label, "axis": "xyz"[axis],
                                        "x": _point(grid, k), "jump": float(gap.ravel()[k])}
                return check
    return check


def validate_V(
    potentials: PotentialSet,
    a1: float,
    a2: float,
    grid: Grid,
    samples: int = 20,
    seed: int = 0,
) -> ValidationReport:
    """
    Pointwise checks of (V1) periodicity, (V2) sign and spectral floor, (V3)
    with the stored delta and the admissible range of delta, plus the
    informational (V3') positivity flag.
    """
    sampled = potentials.sample(grid)
    checks: List[HypothesisCheck] = [_periodicity_check(potentials, grid)]

    sign = HypothesisCheck("V2", True, detail="V1, V2 >= 0")
    for field_ in (sampled.V1, sampled.V2):
        if field_.min() < 0:
            k = int(np.argmin(field_.values))
            sign.passed = False
            sign.counterexample = {"potential": potentials.V1.label if field_ is sampled.V1
                                   else potentials.V2.label,
                                   "x": _point(grid, k), "value": float(field_.values.ravel()[k])}
            break
    checks.append(sign)

    rng = np.random.default_rng(seed)
    trials = [random_smooth_field(grid, rng) for _ in range(samples)] + [grid.constant(1.0)]
    floors = []
    for field_ in (sampled.V1, sampled.V2):
        quotients = [
            (grad_sq_integral(f) + quadrature(field_.values * f.values ** 2, grid))
            / quadrature(f.values ** 2, grid)
            for f in trials
        ]
        floors.append(min(quotients))
    floor = min(floors)
    checks.append(HypothesisCheck(
        "V2-inf", floor > 1e-12, detail="smallest sampled Rayleigh quotient of -Lap + V_i > 0",
        constant=floor,
        counterexample=None if floor > 1e-12 else {"rayleigh_min": floor},
    ))

    delta = potentials.delta
    v1v2 = sampled.V1.values * sampled.V2.values
    lam = sampled.lam.values
    root = np.sqrt(np.clip(v1v2, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(root > 0, np.abs(lam) / root, np.where(lam == 0, 0.0, np.inf))
    best = float(ratio.max())
    coupling = HypothesisCheck(
        "V3", True, detail=f"|lambda| <= delta sqrt(V1 V2), 0 < delta={delta:g} < min(a1,a2)",
        constant=best,
    )
    bad = np.abs(lam) > delta * root + 1e-12 * (1.0 + delta * root)
    if bad.any():
        k = int(np.flatnonzero(bad.ravel())[0])
        coupling.passed = False
        coupling.counterexample = {"x": _point(grid, k), "lambda": float(lam.ravel()[k]),
                                   "delta_sqrt_V1V2": float(delta * root.ravel()[k])}
    elif not 0 < delta < min(a1, a2):
        k = int(np.argmax(ratio))
        coupling.passed = False
        coupling.counterexample = {"x": _point(grid, k), "delta": delta,
                                   "min_a": min(a1, a2), "needed_delta": best}
    checks.append(coupling)

    positive = bool(np.all(lam > 0))
    flag = HypothesisCheck("V3'", positive, required=False, detail="lambda > 0 everywhere")
    if not positive:
        k = int(np.argmin(lam))
        flag.counterexample = {"x": _point(grid, k), "lambda": float(lam.ravel()[k])}
    checks.append(flag)
    return ValidationReport(checks)


def validate_V45(
    potentials: PotentialSet, grid: Grid, finite_difference: bool = False
) -> ValidationReport:
    """
    Pointwise (V4): 0 <= <grad V_i, x> <= C V_i, and (V5): <grad lambda, x> <= 0
    with |<grad lambda, x>| <= C |lambda|. Best constants C are reported.

    Raises:
        UnsupportedCheckError: If a gradient is missing and finite differences
            are not enabled.
    """
    sampled = potentials.sample(grid)
    radial = potentials.radial(grid, finite_difference)
    checks = []
    for pot, values, r in (
        (potentials.V1, sampled.V1.values, radial.V1.values),
        (potentials.V2, sampled.V2.values, radial.V2.values),
    ):
        tol = 1e-12 * (1.0 + np.abs(values).max())
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(values > 0, r / values, np.where(np.abs(r) <= tol, 0.0, np.inf))
        best = float(np.max(ratio)) if ratio.size else 0.0
        check = HypothesisCheck(
            f"V4[{pot.label}]", True, detail=f"0 <= <grad {pot.label}, x> <= C {pot.label}",
            constant=best,
        )
        bad = (r < -tol) | ~np.isfinite(ratio)
        if bad.any():
            k = int(np.flatnonzero(bad.ravel())[0])
            check.passed = False
            check.counterexample = {"x": _point(grid, k), "radial": float(r.ravel()[k]),
                                    "value": float(values.ravel()[k])}
        checks.append(check)

    lam = sampled.lam.values
    r = radial.lam.values
    tol = 1e-12 * (1.0 + np.abs(lam).max())
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(lam != 0, np.abs(r) / np.abs(lam), np.where(np.abs(r) <= tol, 0.0, np.inf))
    check = HypothesisCheck(
        "V5", True, detail="<grad lambda, x> <= 0 and |<grad lambda, x>| <= C |lambda|",
        constant=float(np.max(ratio)),
    )
    bad = (r > tol) | ~np.isfinite(ratio)
    if bad.any():
        k = int(np.flatnonzero(bad.ravel())[0])
        check.passed = False
        check.counterexample = {"x": _point(grid, k), "radial": float(r.ravel()[k]),
                                "lambda": float(lam.ravel()[k])}
    checks.append(check)
    return ValidationReport(checks)
