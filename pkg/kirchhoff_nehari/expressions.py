"""
Expression grammar for potentials and user Kirchhoff functions.

Expressions are parsed with sympy against a closed namespace (the coordinate
or argument symbols, sin, cos, exp, log, sqrt, abs and pi), differentiated
symbolically and compiled to numpy callables.
"""

import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .errors import ExpressionError

logger = logging.getLogger(__name__)

X, Y, Z = sp.symbols("x y z", real=True)
S = sp.Symbol("s", nonnegative=True)

_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_+\-*/^().,\s]*$")

_FUNCTIONS: Dict[str, object] = {
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "pi": sp.pi,
}

_GLOBALS: Dict[str, object] = {
    "Integer": sp.Integer,
    "Float": sp.Float,
    "Rational": sp.Rational,
    "Symbol": sp.Symbol,
    "Function": sp.Function,
    "__builtins__": {},
}

_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def parse_expression(text: str, variables: Sequence[sp.Symbol]) -> sp.Expr:
    """
    Parse ``text`` into a sympy expression over ``variables``.

    Raises:
        ExpressionError: On syntax errors, unknown names or unknown functions.
    """
    if not isinstance(text, str):
        text = str(text)
    source = text.replace("π", "pi").replace("**", "^")
    if not source.strip():
        raise ExpressionError("empty expression")
    if "__" in source or not _ALLOWED_CHARS.match(source):
        raise ExpressionError(f"unsupported characters in expression {text!r}")
    local_dict: Dict[str, object] = dict(_FUNCTIONS)
    local_dict.update({str(v): v for v in variables})
    try:
        expr = parse_expr(
            source,
            local_dict=local_dict,
            global_dict=dict(_GLOBALS),
            transformations=_TRANSFORMATIONS,
        )
    except (SyntaxError, TypeError, ValueError, AttributeError, sp.SympifyError) as e:
        raise ExpressionError(f"cannot parse expression {text!r}: {e}") from e
    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"expression {text!r} is not arithmetic")
    undefined = expr.atoms(AppliedUndef)
    if undefined:
        names = ", ".join(sorted(str(f.func) for f in undefined))
        raise ExpressionError(f"unknown function(s) {names} in {text!r}")
    unknown = expr.free_symbols - set(variables)
    if unknown:
        names = ", ".join(sorted(str(s) for s in unknown))
        allowed = ", ".join(str(v) for v in variables)
        raise ExpressionError(f"unknown name(s) {names} in {text!r}; allowed: {allowed}")
    return expr


def _compile(expr: sp.Expr, variables: Sequence[sp.Symbol]) -> Callable[..., np.ndarray]:
    raw = sp.lambdify(list(variables), expr, modules="numpy")

    def evaluate(*args: object) -> np.ndarray:
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        return np.broadcast_to(np.asarray(raw(*args), dtype=float), shape)

    return evaluate


@dataclass(frozen=True)
class SpatialExpression:
    """A scalar function of (x, y, z) with its analytic gradient."""

    text: str
    expr: sp.Expr
    value: Callable[..., np.ndarray]
    partials: Tuple[Callable[..., np.ndarray], ...]

    def __call__(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return self.value(x, y, z)

    def gradient(
        self, x: np.ndarray, y: np.ndarray, z: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        gx, gy, gz = (d(x, y, z) for d in self.partials)
        return gx, gy, gz

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols


def compile_spatial(text: str) -> SpatialExpression:
    expr = parse_expression(text, (X, Y, Z))
    partials = tuple(_compile(sp.diff(expr, v), (X, Y, Z)) for v in (X, Y, Z))
    logger.debug("compiled spatial expression %s -> %s", text, expr)
    return SpatialExpression(str(text), expr, _compile(expr, (X, Y, Z)), partials)


@dataclass(frozen=True)
class ScalarExpression:
    """A function of s >= 0 with its first two derivatives."""

    text: str
    expr: sp.Expr
    value: Callable[..., np.ndarray]
    deriv: Callable[..., np.ndarray]
    deriv2: Callable[..., np.ndarray]


def compile_scalar(text: str) -> ScalarExpression:
    expr = parse_expression(text, (S,))
    first = sp.diff(expr, S)
    second = sp.diff(first, S)
    return ScalarExpression(
        str(text),
        expr,
        _compile(expr, (S,)),
        _compile(first, (S,)),
        _compile(second, (S,)),
    )
