"""
Periodic 3D grid, immutable scalar fields and the discrete calculus used by
every functional in the package.

The box is the cube [-L/2, L/2)^3 sampled at x_i = -L/2 + i*h with h = L/n and
periodic wrap-around. Integrals use the uniform midpoint weight h^3 and the
Laplacian is the second-order 7-point stencil, so the discrete Dirichlet form
-integrate(f * laplacian(f)) is an exact quadratic form.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft

from .errors import (
    AssumptionViolation,
    GridMismatchError,
    InvalidExponentError,
    InvalidFieldError,
    InvalidProblemError,
)

logger = logging.getLogger(__name__)

Number = Union[int, float]

_DETERMINISTIC = False


def set_deterministic(flag: bool) -> None:
    """Switch reductions to an exactly rounded, order-independent summation."""
    global _DETERMINISTIC
    _DETERMINISTIC = bool(flag)


def is_deterministic() -> bool:
    return _DETERMINISTIC


def reduce_sum(values: np.ndarray) -> float:
    """Sum all entries of an array honouring the deterministic switch."""
    if _DETERMINISTIC:
        return math.fsum(np.ravel(values).tolist())
    return float(np.sum(values))


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic discretization of the cube [-L/2, L/2)^3.

    Attributes:
        n (int): Grid points per axis (at least 4).
        box_length (float): Side length L of the cube.
    """

    n: int
    box_length: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 4:
            raise InvalidProblemError(f"grid n must be an integer >= 4, got {self.n}", "grid.n")
        if not (self.box_length > 0 and math.isfinite(self.box_length)):
            raise InvalidProblemError(
                f"grid box_length must be positive, got {self.box_length}", "grid.L"
            )
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "box_length", float(self.box_length))

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return self.box_length ** 3

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def axis(self) -> np.ndarray:
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Full (x, y, z) coordinate arrays, measured from the box center."""
        mesh = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        for arr in mesh:
            arr.flags.writeable = False
        return mesh[0], mesh[1], mesh[2]

    def radius_sq(self) -> np.ndarray:
        x, y, z = self.coordinates
        return x * x + y * y + z * z

    def sample(self, func: Callable[..., object], label: str = "") -> "ScalarField":
        """Evaluate ``func(x, y, z)`` at every node."""
        x, y, z = self.coordinates
        values = np.broadcast_to(np.asarray(func(x, y, z), dtype=float), self.shape)
        return ScalarField(self, values)

    def constant(self, value: float) -> "ScalarField":
        return ScalarField(self, np.full(self.shape, float(value)))

    def zeros(self) -> "ScalarField":
        return self.constant(0.0)

    def cells_per_period(self, period: float) -> Optional[int]:
        """Number of grid cells spanning one period, or None if not an integer."""
        if period <= 0:
            return None
        repeats = self.box_length / period
        cells = period / self.spacing
        if abs(repeats - round(repeats)) > 1e-9 or abs(cells - round(cells)) > 1e-9:
            return None
        return int(round(cells))


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    Grid samples of a real function, stored as a read-only (n, n, n) array in
    row-major (x, y, z) order.
    """

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim == 1 and arr.size == self.grid.n ** 3:
            arr = arr.reshape(self.grid.shape)
        if arr.shape != self.grid.shape:
            raise InvalidFieldError(
                f"field shape {arr.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidFieldError("field contains non-finite samples")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def _other_values(self, other: Union["ScalarField", Number]) -> Union[np.ndarray, float]:
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return ScalarField(self.grid, self.values + self._other_values(other))

    __radd__ = __add__

    def __sub__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return ScalarField(self.grid, self.values - self._other_values(other))

    def __rsub__(self, other: Number) -> "ScalarField":
        return ScalarField(self.grid, float(other) - self.values)

    def __mul__(self, other: Union["ScalarField", Number]) -> "ScalarField":
        return ScalarField(self.grid, self.values * self._other_values(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "ScalarField":
        return ScalarField(self.grid, self.values / float(other))

    def __neg__(self) -> "ScalarField":
        return ScalarField(self.grid, -self.values)

    def __abs__(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values))

    def ravel(self) -> np.ndarray:
        return self.values.ravel()

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def allclose(self, other: "ScalarField", rtol: float = 1e-8, atol: float = 0.0) -> bool:
        return bool(np.allclose(self.values, self._other_values(other), rtol=rtol, atol=atol))


@dataclass(frozen=True, eq=False)
class StatePair:
    """A pair (u, v) of fields on one grid, the discrete state of the system."""

    u: ScalarField
    v: ScalarField

    def __post_init__(self) -> None:
        if self.u.grid != self.v.grid:
            raise GridMismatchError("u and v must share one grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "StatePair":
        return cls(grid.zeros(), grid.zeros())

    @classmethod
    def from_arrays(cls, grid: Grid, u: np.ndarray, v: np.ndarray) -> "StatePair":
        return cls(ScalarField(grid, u), ScalarField(grid, v))

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def scale(self, t: float) -> "StatePair":
        return StatePair(self.u * t, self.v * t)

    def combine(self, step: float, direction: "StatePair") -> "StatePair":
        """Return ``self - step * direction``."""
        if direction.grid != self.grid:
            raise GridMismatchError("direction lives on a different grid")
        return StatePair.from_arrays(
            self.grid,
            self.u.values - step * direction.u.values,
            self.v.values - step * direction.v.values,
        )

    def abs(self) -> "StatePair":
        return StatePair(abs(self.u), abs(self.v))

    def is_zero(self) -> bool:
        return not (np.any(self.u.values) or np.any(self.v.values))

    def is_positive(self) -> bool:
        return bool(np.all(self.u.values > 0) and np.all(self.v.values > 0))

    def shifted(self, cells: Sequence[int]) -> "StatePair":
        """Translate both components by whole cells along (x, y, z)."""
        shift = tuple(int(c) for c in cells)
        return StatePair.from_arrays(
            self.grid,
            np.roll(self.u.values, shift, axis=(0, 1, 2)),
            np.roll(self.v.values, shift, axis=(0, 1, 2)),
        )


def check_same_grid(*fields: Union[ScalarField, StatePair, Grid]) -> Grid:
    """Return the common grid of the arguments or raise GridMismatchError."""
    grids = [f if isinstance(f, Grid) else f.grid for f in fields]
    for other in grids[1:]:
        if other != grids[0]:
            raise GridMismatchError(f"grid mismatch: {grids[0]} vs {other}")
    return grids[0]


def quadrature(values: np.ndarray, grid: Grid) -> float:
    return grid.cell_volume * reduce_sum(values)


def laplacian_values(values: np.ndarray, spacing: float) -> np.ndarray:
    """7-point periodic Laplacian of a raw (n, n, n) array."""
    out = -6.0 * values
    for axis in range(3):
        out = out + np.roll(values, 1, axis=axis) + np.roll(values, -1, axis=axis)
    return out / (spacing * spacing)


def integrate(f: ScalarField) -> float:
    """Midpoint rule h^3 * sum(values)."""
    if not isinstance(f, ScalarField):
        raise InvalidFieldError("integrate expects a ScalarField")
    return quadrature(f.values, f.grid)


def inner(f: ScalarField, g: ScalarField) -> float:
    check_same_grid(f, g)
    return quadrature(f.values * g.values, f.grid)


def laplacian(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian_values(f.values, f.grid.spacing))


def grad_sq_values(values: np.ndarray, grid: Grid) -> float:
    raw = -quadrature(values * laplacian_values(values, grid.spacing), grid)
    if raw < -1e-12 * max(1.0, quadrature(values * values, grid) / grid.spacing ** 2):
        logger.warning("negative discrete Dirichlet form %.3e clamped to zero", raw)
    return max(raw, 0.0)


def grad_sq_integral(f: ScalarField) -> float:
    """Discrete integral of |grad f|^2 in summation-by-parts form, clamped at 0."""
    return grad_sq_values(f.values, f.grid)


def forward_grad_sq_integral(f: ScalarField) -> float:
    """Same quantity from forward differences; an independent stencil path."""
    h = f.grid.spacing
    total = 0.0
    for axis in range(3):
        diff = (np.roll(f.values, -1, axis=axis) - f.values) / h
        total += quadrature(diff * diff, f.grid)
    return total


def lp_power(f: ScalarField, r: float) -> float:
    """h^3 * sum |f|^r, the r-th power of the L^r norm."""
    if r < 1:
        raise InvalidExponentError(f"Lebesgue exponent must be >= 1, got {r}")
    return quadrature(np.abs(f.values) ** r, f.grid)


def lp_norm(f: ScalarField, r: float) -> float:
    return lp_power(f, r) ** (1.0 / r)


def weighted_norm_sq(f: ScalarField, V: ScalarField, label: str = "V") -> float:
    """||f||_E^2 = integral |grad f|^2 + integral V f^2 for a nonnegative weight V."""
    check_same_grid(f, V)
    if V.min() < 0:
        idx = np.unravel_index(int(np.argmin(V.values)), V.grid.shape)
        raise AssumptionViolation(
            f"{label} is negative ({V.values[idx]:.3e}) at grid index {tuple(int(i) for i in idx)}",
            "V2",
        )
    return grad_sq_integral(f) + quadrature(V.values * f.values * f.values, f.grid)


def _fourier_symbol(grid: Grid) -> np.ndarray:
    """Symbol of -laplacian on the rfftn layout: (4/h^2) sum sin^2(pi k / n)."""
    n = grid.n
    full = np.fft.fftfreq(n) * n
    half = np.fft.rfftfreq(n) * n
    sx = np.sin(np.pi * full / n) ** 2
    sz = np.sin(np.pi * half / n) ** 2
    total = sx[:, None, None] + sx[None, :, None] + sz[None, None, :]
    return (4.0 / grid.spacing ** 2) * total


def solve_screened_poisson(values: np.ndarray, grid: Grid, shift: float) -> np.ndarray:
    """Solve (-laplacian + shift) w = values exactly on the periodic grid."""
    if shift <= 0:
        raise InvalidProblemError("screened Poisson shift must be positive", "shift")
    transformed = fft.rfftn(values)
    transformed /= _fourier_symbol(grid) + shift
    return fft.irfftn(transformed, s=grid.shape)


def random_smooth_field(
    grid: Grid, rng: np.random.Generator, correlation: Optional[float] = None
) -> ScalarField:
    """Low-pass filtered white noise normalized to unit max-norm."""
    length = correlation if correlation is not None else grid.box_length / 8.0
    noise = rng.standard_normal(grid.shape)
    symbol = _fourier_symbol(grid)
    transformed = fft.rfftn(noise) * np.exp(-0.5 * (length ** 2) * symbol)
    smooth = fft.irfftn(transformed, s=grid.shape)
    scale = np.max(np.abs(smooth))
    return ScalarField(grid, smooth / scale if scale > 0 else smooth)


def gaussian_bump(
    grid: Grid,
    width: Optional[float] = None,
    amplitude: float = 1.0,
    center: Sequence[float] = (0.0, 0.0, 0.0),
) -> ScalarField:
    """amplitude * exp(-|x - center|^2 / width^2), width defaults to L/8."""
    w = width if width is not None else grid.box_length / 8.0
    x, y, z = grid.coordinates
    r2 = (x - center[0]) ** 2 + (y - center[1]) ** 2 + (z - center[2]) ** 2
    return ScalarField(grid, amplitude * np.exp(-r2 / (w * w)))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def dump_field(f: ScalarField, path: Union[str, Path], label: str = "") -> Path:
    """
    Write a field as an 8-byte little-endian count n followed by n^3 doubles,
    plus a JSON sidecar with n, box_length and label.

    Returns:
        Path: The path of the binary file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(np.asarray([f.grid.n], dtype="<u8").tobytes())
        handle.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    meta = {"n": f.grid.n, "box_length": f.grid.box_length, "label": label}
    _sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def load_field(path: Union[str, Path], grid: Optional[Grid] = None) -> ScalarField:
    """
    Read a field written by :func:`dump_field`.

    Args:
        path (str or Path): Binary field file.
        grid (Grid, optional): Expected grid; checked against the file.

    Raises:
        FileNotFoundError: If the file does not exist.
        InvalidFieldError: If the payload is truncated or malformed.
        GridMismatchError: If the file's grid differs from ``grid``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Field file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 8:
        raise InvalidFieldError(f"{path} is too short to hold a header")
    n = int(np.frombuffer(raw[:8], dtype="<u8")[0])
    payload = np.frombuffer(raw[8:], dtype="<f8")
    if payload.size != n ** 3:
        raise InvalidFieldError(f"{path} holds {payload.size} values, expected {n ** 3}")
    box_length: Optional[float] = None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        box_length = float(json.loads(sidecar.read_text())["box_length"])
    if grid is not None:
        other_box = box_length is not None and not math.isclose(box_length, grid.box_length)
        if n != grid.n or other_box:
            raise GridMismatchError(
                f"{path} has n={n}, L={box_length}; expected n={grid.n}, L={grid.box_length}"
            )
        target = grid
    else:
        if box_length is None:
            raise InvalidFieldError(f"{path} has no sidecar and no grid was given")
        target = Grid(n, box_length)
    return ScalarField(target, payload.reshape(target.shape))
