"""
YAML run configuration.

A configuration file describes one problem instance and the solver settings::

    a1: 1.0
    a2: 1.0
    mu: 1.0
    p: 4.5
    q: 4.5
    delta: 0.5
    periods: [1, 1, 1]
    alpha: {family: quadratic, params: {b: 0.05}}
    beta:  {family: quadratic, params: {b: 0.05}}
    V1_expr: "1"
    V2_expr: "1"
    lambda_expr: "0"
    grid: {n: 24, L: 8}
    solver: {max_iters: 2000, grad_tol: 1.0e-7}

Semantic errors are reported with the line and column of the offending node.
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml

from .errors import ConfigError, InvalidFamilyError, InvalidProblemError
from .field_grid import Grid
from .model import KirchhoffSpec, Potential, PotentialSet, ProblemSpec, make_family
from .solver import Backtrack, SolverConfig

logger = logging.getLogger(__name__)

ENV_OUT_DIR = "KIRCHHOFF_NEHARI_OUT_DIR"
DEFAULT_OUT_DIR = "kirchhoff-nehari-out"
PRESET_PREFIX = "preset:"

TOP_LEVEL_KEYS = {
    "a1", "a2", "mu", "p", "q", "delta", "periods", "alpha", "beta",
    "V1_expr", "V2_expr", "lambda_expr", "grid", "solver",
}
REQUIRED_KEYS = TOP_LEVEL_KEYS - {"periods", "solver"}
SOLVER_KEYS = {
    "max_iters", "grad_tol", "step0", "backtrack", "seed", "init", "init_files", "freeze",
    "sign_normalize", "concentration_limit", "concentration_window", "energy_slack", "log_every",
}
BACKTRACK_KEYS = {"shrink", "max_halvings", "armijo", "growth", "step_max"}

KeyPath = Tuple[str, ...]


@dataclass
class RunConfig:
    """
    A parsed configuration: the problem pieces, the solver settings and the
    resolved (defaults merged) mapping used for hashing.
    """

    a1: float
    a2: float
    mu: float
    p: float
    q: float
    alpha: KirchhoffSpec
    beta: KirchhoffSpec
    potentials: PotentialSet
    grid: Grid
    solver: SolverConfig
    resolved: Dict[str, Any]
    source: Optional[str] = None
    marks: Dict[KeyPath, Tuple[int, int]] = field(default_factory=dict, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved)

    def error_at(self, path: KeyPath, message: str) -> ConfigError:
        line, column = self.marks.get(path, (None, None))
        return ConfigError(message, line, column, self.source)

    def problem(self) -> ProblemSpec:
        """
        Assemble the :class:`ProblemSpec`.

        Raises:
            ConfigError: With the location of the field that violates the
                instance constraints (e.g. 4 < p <= q <= 6).
        """
        try:
            return ProblemSpec(
                self.a1, self.a2, self.alpha, self.beta, self.potentials,
                self.mu, self.p, self.q, self.grid,
            )
        except InvalidProblemError as e:
            raise self.error_at((e.field or "",), str(e)) from e


def config_hash(resolved: Mapping[str, Any]) -> str:
    """SHA-256 of the canonical JSON form; independent of key order."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_out_dir(cli_value: Optional[str] = None) -> Path:
    """Output directory: ``--out`` first, then $KIRCHHOFF_NEHARI_OUT_DIR, then a default."""
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get(ENV_OUT_DIR) or DEFAULT_OUT_DIR)


def list_presets() -> List[str]:
    folder = resources.files("kirchhoff_nehari") / "presets"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".yaml"))


def _read_source(path: Union[str, Path]) -> Tuple[str, str, Path]:
    text_path = str(path)
    if text_path.startswith(PRESET_PREFIX):
        name = text_path[len(PRESET_PREFIX):]
        resource = resources.files("kirchhoff_nehari") / "presets" / f"{name}.yaml"
        if not resource.is_file():
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
        return resource.read_text(encoding="utf-8"), text_path, Path.cwd()
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"configuration file not found: {file_path}")
    return file_path.read_text(encoding="utf-8"), str(file_path), file_path.parent


def _collect_marks(node: Any, path: KeyPath, out: Dict[KeyPath, Tuple[int, int]]) -> None:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            child = path + (str(key_node.value),)
            mark = value_node.start_mark
            out[child] = (mark.line + 1, mark.column + 1)
            _collect_marks(value_node, child, out)


class _Reader:
    def __init__(self, marks: Dict[KeyPath, Tuple[int, int]], source: str):
        self.marks = marks
        self.source = source

    def error(self, path: KeyPath, message: str) -> ConfigError:
        line, column = self.marks.get(path, (None, None))
        if line is None and path:
            line, column = self.marks.get(path[:-1], (None, None))
        label = ".".join(path)
        return ConfigError(f"{label}: {message}" if label else message, line, column, self.source)

    def mapping(self, value: Any, path: KeyPath, allowed: Optional[set] = None) -> Dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise self.error(path, "expected a mapping")
        if allowed is not None:
            for key in value:
                if key not in allowed:
                    raise self.error(path + (str(key),), f"unknown key; allowed: {sorted(allowed)}")
        return value

    def number(self, value: Any, path: KeyPath) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(path, f"expected a number, got {value!r}")
        return float(value)

    def integer(self, value: Any, path: KeyPath) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(path, f"expected an integer, got {value!r}")
        return int(value)


def _family(reader: _Reader, data: Any, key: str) -> Tuple[KirchhoffSpec, Dict[str, Any]]:
    section = reader.mapping(data, (key,), {"family", "params"})
    if "family" not in section:
        raise reader.error((key,), "missing 'family'")
    params = reader.mapping(section.get("params"), (key, "params"))
    try:
        spec = make_family(str(section["family"]), params)
    except (InvalidFamilyError, ConfigError) as e:
        raise reader.error((key,), str(e)) from e
    return spec, {"family": str(section["family"]), "params": params}


def _potential(reader: _Reader, value: Any, key: str, label: str) -> Potential:
    if isinstance(value, bool) or not isinstance(value, (str, int, float)):
        raise reader.error((key,), "expected an expression string")
    try:
        return Potential.from_expression(str(value), label)
    except ConfigError as e:
        raise reader.error((key,), str(e)) from e


def _solver(reader: _Reader, data: Any, base: Path) -> SolverConfig:
    section = reader.mapping(data, ("solver",), SOLVER_KEYS)
    kwargs: Dict[str, Any] = {}
    for key in ("max_iters", "seed", "log_every", "concentration_window"):
        if key in section:
            kwargs[key] = reader.integer(section[key], ("solver", key))
    for key in ("grad_tol", "step0", "concentration_limit", "energy_slack"):
        if key in section:
            kwargs[key] = reader.number(section[key], ("solver", key))
    if "init" in section:
        kwargs["init"] = str(section["init"])
    if "freeze" in section:
        kwargs["freeze"] = None if section["freeze"] is None else str(section["freeze"])
    if "sign_normalize" in section:
        kwargs["sign_normalize"] = bool(section["sign_normalize"])
    if section.get("init_files") is not None:
        files = section["init_files"]
        if not isinstance(files, list) or len(files) != 2:
            raise reader.error(("solver", "init_files"), "expected a list [u_file, v_file]")
        kwargs["init_files"] = tuple(str((base / str(f)).resolve()) for f in files)
    if "backtrack" in section:
        bt = reader.mapping(section["backtrack"], ("solver", "backtrack"), BACKTRACK_KEYS)
        bt_kwargs: Dict[str, Any] = {}
        for key, value in bt.items():
            path = ("solver", "backtrack", key)
            bt_kwargs[key] = (
                reader.integer(value, path) if key == "max_halvings" else reader.number(value, path)
            )
        kwargs["backtrack"] = Backtrack(**bt_kwargs)
    try:
        return SolverConfig(**kwargs)
    except InvalidProblemError as e:
        path = tuple((e.field or "solver").split("."))
        raise reader.error(path, str(e)) from e


def parse_config(text: str, source: str = "<string>", base: Optional[Path] = None) -> RunConfig:
    """
    Parse configuration text.

    Raises:
        ConfigError: On YAML syntax errors, unknown or missing keys, wrong
            types, invalid families or expressions.
    """
    base = base or Path.cwd()
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark else None
        column = mark.column + 1 if mark else None
        raise ConfigError(f"YAML syntax error: {e.problem}", line, column, source) from e
    marks: Dict[KeyPath, Tuple[int, int]] = {}
    _collect_marks(root, (), marks)
    reader = _Reader(marks, source)
    data = reader.mapping(data, (), TOP_LEVEL_KEYS)
    missing = sorted(REQUIRED_KEYS - set(data))
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}", source=source)

    scalars = {
        key: reader.number(data[key], (key,)) for key in ("a1", "a2", "mu", "p", "q", "delta")
    }
    alpha, alpha_raw = _family(reader, data["alpha"], "alpha")
    beta, beta_raw = _family(reader, data["beta"], "beta")

    periods_raw = data.get("periods", [1, 1, 1])
    if not isinstance(periods_raw, list) or len(periods_raw) != 3:
        raise reader.error(("periods",), "expected a list of three periods")
    periods = tuple(reader.number(p, ("periods",)) for p in periods_raw)

    V1 = _potential(reader, data["V1_expr"], "V1_expr", "V1")
    V2 = _potential(reader, data["V2_expr"], "V2_expr", "V2")
    lam = _potential(reader, data["lambda_expr"], "lambda_expr", "lambda")
    try:
        potentials = PotentialSet(V1, V2, lam, scalars["delta"], periods)  # type: ignore[arg-type]
    except InvalidProblemError as e:
        raise reader.error((e.field or "delta",), str(e)) from e

    grid_section = reader.mapping(data["grid"], ("grid",), {"n", "L"})
    if "n" not in grid_section or "L" not in grid_section:
        raise reader.error(("grid",), "grid needs both 'n' and 'L'")
    try:
        grid = Grid(
            reader.integer(grid_section["n"], ("grid", "n")),
            reader.number(grid_section["L"], ("grid", "L")),
        )
    except InvalidProblemError as e:
        raise reader.error(tuple((e.field or "grid").split(".")), str(e)) from e

    solver = _solver(reader, data.get("solver"), base)

    resolved = dict(scalars)
    resolved.update(
        periods=list(periods),
        alpha=alpha_raw,
        beta=beta_raw,
        V1_expr=V1.expression,
        V2_expr=V2.expression,
        lambda_expr=lam.expression,
        grid={"n": grid.n, "L": grid.box_length},
        solver=solver.to_dict(),
    )
    return RunConfig(
        a1=scalars["a1"], a2=scalars["a2"], mu=scalars["mu"], p=scalars["p"], q=scalars["q"],
        alpha=alpha, beta=beta, potentials=potentials, grid=grid, solver=solver,
        resolved=resolved, source=source, marks=marks,
    )


def load_config(path: Union[str, Path]) -> RunConfig:
    """Load a configuration file, or a bundled preset given as ``preset:<name>``."""
    text, source, base = _read_source(path)
    config = parse_config(text, source, base)
    logger.debug("loaded %s (hash %s)", source, config.config_hash[:12])
    return config
