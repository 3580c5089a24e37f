"""Run directories: CSV series and fields, JSON documents and the run manifest.

Floats are written with ``repr`` so that a CSV round trip is exact and equal
inputs give byte-identical files.  The manifest records everything needed to
reproduce a run and is written once, after every other file.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import jsonschema
import numpy as np

from . import __version__
from .dynamics import SERIES_KEYS, Trajectory
from .grid import ScalarField, VectorField, field_rows

MANIFEST_NAME = "manifest.json"
DEFAULT_ROOT = "netform_out"
ENV_OUT = "NETFORM_OUT"

MANIFEST_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["command", "code_version", "config", "seed", "wall_time_s", "outcome", "files", "calibration"],
    "properties": {
        "command": {"type": "string"},
        "code_version": {"type": "string"},
        "config": {"type": "object"},
        "seed": {"type": ["integer", "null"]},
        "wall_time_s": {"type": "number", "minimum": 0},
        "outcome": {"type": "string"},
        "outcome_time": {"type": ["number", "null"]},
        "files": {"type": "array", "items": {"type": "string"}, "uniqueItems": True},
        "calibration": {"type": "object", "additionalProperties": {"type": "number"}},
        "results": {"type": "object"},
    },
    "additionalProperties": False,
}


def resolve_out(out: str | None, default_name: str) -> Path:
    """``--out`` if given, else ``$NETFORM_OUT/<name>``, else ``./netform_out/<name>``."""
    if out:
        return Path(out)
    return Path(os.environ.get(ENV_OUT, DEFAULT_ROOT)) / default_name


def _fmt(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(rows[0]))


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj: Any) -> str:
    """Canonical JSON text (sorted keys, ``inf``/``nan`` as strings)."""
    def fix(v: Any) -> Any:
        if isinstance(v, float) and not np.isfinite(v):
            return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
        if isinstance(v, dict):
            return {k: fix(x) for k, x in v.items()}
        if isinstance(v, list):
            return [fix(x) for x in v]
        return v

    return json.dumps(fix(_plain(obj)), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.write_text(dumps(obj))


def series_header(traj: Trajectory) -> list[str]:
    extra = sorted(k for k in traj.series if k not in SERIES_KEYS)
    return ["step", "t", *SERIES_KEYS, *extra]


def write_series(path: Path, traj: Trajectory) -> None:
    header = series_header(traj)
    cols = [traj.series[k] for k in header[2:]]
    rows = ([k, traj.times[k], *(c[k] for c in cols)] for k in range(len(traj.times)))
    write_csv(path, header, rows)


def read_series(path: Path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    header, data = read_csv(path)
    series = {name: data[:, j].copy() for j, name in enumerate(header) if name not in ("step", "t")}
    return data[:, header.index("t")].copy(), series


def write_field(path: Path, fld: ScalarField | VectorField) -> None:
    header, table = field_rows(fld)
    write_csv(path, header, table.tolist())


def snapshot_names(index: int) -> tuple[str, str]:
    return f"m_{index:07d}.csv", f"p_{index:07d}.csv"


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None = None
    outcome: str = "completed"
    outcome_time: float | None = None
    files: list[str] = field(default_factory=list)
    calibration: dict[str, float] = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    wall_time_s: float = 0.0
    code_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "code_version": self.code_version,
            "config": self.config,
            "seed": self.seed,
            "wall_time_s": self.wall_time_s,
            "outcome": self.outcome,
            "outcome_time": self.outcome_time,
            "files": sorted(self.files),
            "calibration": self.calibration,
            "results": self.results,
        }

    def write(self, directory: Path) -> Path:
        """Write ``manifest.json``; refuses to overwrite an existing manifest."""
        path = directory / MANIFEST_NAME
        doc = json.loads(dumps(self.to_dict()))
        validate_manifest(doc)
        with open(path, "x") as fh:
            fh.write(dumps(doc))
        return path


class RunDirectory:
    """Output directory that tracks the files written into it."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        if (self.path / MANIFEST_NAME).exists():
            raise FileExistsError(f"{self.path} already holds a run manifest")
        self.files: list[str] = []

    def file(self, name: str) -> Path:
        if name == MANIFEST_NAME:
            raise ValueError("the manifest is written by finish()")
        if name not in self.files:
            self.files.append(name)
        return self.path / name

    def finish(self, manifest: RunManifest) -> Path:
        manifest.files = list(self.files)
        return manifest.write(self.path)


def validate_manifest(doc: dict) -> None:
    jsonschema.validate(doc, MANIFEST_SCHEMA)


def load_manifest(directory: Path) -> dict:
    doc = json.loads((Path(directory) / MANIFEST_NAME).read_text())
    validate_manifest(doc)
    return doc


def without_timing(doc: dict) -> dict:
    """Manifest content minus the wall-clock entry, for reproducibility comparisons."""
    return {k: v for k, v in doc.items() if k != "wall_time_s"}
