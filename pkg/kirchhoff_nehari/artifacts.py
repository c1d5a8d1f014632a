"""
Run artifacts: JSON reports, CSV tables, field dumps and the run manifest.

Every file is written relative to one output directory and registered with
the :class:`RunManifest`, which is written last and lists all of them.
"""

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import scipy
import sympy
import yaml

from . import __version__
from .field_grid import StatePair, dump_field
from .solver import SweepReport, TraceEntry

TRACE_COLUMNS = ("iter", "energy", "grad_norm", "t0", "step", "state_norm")
SWEEP_COLUMNS = (
    "mu", "c_N", "bound", "below_bound", "status", "converged", "ray_level", "start", "error",
)
TERM_COLUMNS = ("term", "side", "value")


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats (to null) recursively."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return value.name
    return value


def versions() -> Dict[str, str]:
    return {
        "kirchhoff_nehari": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "pyyaml": yaml.__version__,
    }


@dataclass
class RunManifest:
    """
    Record of one CLI run.

    ``outputs`` holds paths relative to the output directory so that two runs
    in different directories produce comparable manifests.
    """

    config_hash: str
    command: List[str]
    seed: int
    outputs: List[Dict[str, str]] = field(default_factory=list)
    versions: Dict[str, str] = field(default_factory=versions)

    def add(self, path: Path, role: str, out_dir: Path) -> Path:
        relative = path.relative_to(out_dir).as_posix()
        if not any(o["path"] == relative for o in self.outputs):
            self.outputs.append({"path": relative, "role": role})
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config_hash": self.config_hash,
            "command": list(self.command),
            "seed": self.seed,
            "outputs": sorted(self.outputs, key=lambda o: o["path"]),
            "versions": dict(self.versions),
        }


class ArtifactWriter:
    """Writes files into ``out_dir`` and keeps the manifest current."""

    def __init__(self, out_dir: Union[str, Path], manifest: RunManifest):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def path(self, name: str) -> Path:
        target = self.out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def json(self, name: str, payload: Any, role: str) -> Path:
        target = self.path(name)
        text = json.dumps(to_jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
        target.write_text(text + "\n", encoding="utf-8")
        return self.manifest.add(target, role, self.out_dir)

    def csv(
        self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]], role: str
    ) -> Path:
        target = self.path(name)
        with open(target, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return self.manifest.add(target, role, self.out_dir)

    def trace(self, entries: Sequence[TraceEntry], name: str = "trace.csv") -> Path:
        rows = ((e.iteration, e.energy, e.grad_norm, e.t0, e.step, e.state_norm) for e in entries)
        return self.csv(name, TRACE_COLUMNS, rows, "energy_trace")

    def sweep(self, report: SweepReport, name: str = "sweep.csv") -> Path:
        rows = (
            (r.mu, r.c_N, r.bound, r.below_bound, r.status, r.converged, r.ray_level, r.start,
             r.error or "")
            for r in report.rows
        )
        return self.csv(name, SWEEP_COLUMNS, rows, "sweep_table")

    def terms(self, rows: Sequence[Sequence[Any]], name: str = "pohozaev_terms.csv") -> Path:
        return self.csv(name, TERM_COLUMNS, rows, "pohozaev_terms")

    def state(self, state: StatePair, prefix: str = "") -> List[Path]:
        written = []
        for label, component in (("u", state.u), ("v", state.v)):
            target = dump_field(component, self.path(f"{prefix}{label}.bin"), label)
            self.manifest.add(target, f"field_{label}", self.out_dir)
            self.manifest.add(target.with_suffix(".json"), f"field_{label}_meta", self.out_dir)
            written.append(target)
        return written

    def finish(self, name: str = "manifest.json") -> Path:
        target = self.path(name)
        self.manifest.add(target, "manifest", self.out_dir)
        text = json.dumps(to_jsonable(self.manifest.to_dict()), sort_keys=True, indent=2)
        target.write_text(text + "\n", encoding="utf-8")
        return target


def _cell(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value)) if math.isfinite(value) else "nan"
    return value


def read_manifest(out_dir: Union[str, Path]) -> Optional[Dict[str, Any]]:
    target = Path(out_dir) / "manifest.json"
    if not target.exists():
        return None
    return json.loads(target.read_text(encoding="utf-8"))
