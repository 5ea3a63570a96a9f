"""File formats: CSV data and design matrices, JSON manifests, reports,
and the experiment configuration schema.

Matrices travel as dense CSV, everything structured as JSON.  Floats are
serialized with shortest round-trip precision (17 significant digits
suffice for binary64), so a written report re-parses to bitwise-identical
numbers.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .design import DesignSpec
from .errors import ConfigError
from .estimators import GroupedSample
from .trace_test import DiagnosticsReport, TestReport

MATRIX_KEYS = ("A", "B", "L", "R")


def load_dataset(path, layout: str = "grouped", header: bool = False) -> GroupedSample:
    """Read a grouped CSV dataset: first column is the group label, the
    remaining p columns are numeric responses.

    Rows need not arrive sorted; they are reordered group-contiguously in
    first-appearance label order.  Errors name the file, row, and column
    (1-based data rows, counted after the optional header).
    """
    if layout != "grouped":
        raise ConfigError(f"unknown dataset layout {layout!r}; only 'grouped' is supported")
    path = Path(path)
    rows: list[tuple[str, list[float]]] = []
    width = None
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        data_row = 0
        for raw_index, cells in enumerate(reader, start=1):
            if header and raw_index == 1:
                continue
            if not cells or all(not c.strip() for c in cells):
                continue
            data_row += 1
            if width is None:
                width = len(cells)
                if width < 2:
                    raise ConfigError(
                        f"{path}: row {data_row}: need a label column plus at "
                        f"least one response column, got {width} cells")
            elif len(cells) != width:
                raise ConfigError(
                    f"{path}: row {data_row}: has {len(cells)} cells, "
                    f"expected {width}")
            label = cells[0].strip()
            values = []
            for col, cell in enumerate(cells[1:], start=2):
                text = cell.strip()
                if not text:
                    raise ConfigError(
                        f"{path}: row {data_row}, column {col}: empty cell")
                try:
                    values.append(float(text))
                except ValueError as exc:
                    raise ConfigError(
                        f"{path}: row {data_row}, column {col}: "
                        f"non-numeric value {cell!r}") from exc
            rows.append((label, values))
    if not rows:
        raise ConfigError(f"{path}: no data rows")

    order: list[str] = []
    by_label: dict[str, list[list[float]]] = {}
    for label, values in rows:
        if label not in by_label:
            order.append(label)
            by_label[label] = []
        by_label[label].append(values)
    X = np.array([v for label in order for v in by_label[label]])
    sizes = tuple(len(by_label[label]) for label in order)
    return GroupedSample(X=X, group_sizes=sizes, labels=tuple(order))


def _load_matrix(path: Path, name: str) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read matrix {name} from {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"matrix {name} in {path} is malformed: {exc}") from exc
    return M


def load_design(path) -> DesignSpec:
    """Read a design from a JSON manifest referencing dense CSV matrices.

    The manifest maps "A", "B", "L", "R" to CSV paths (relative to the
    manifest) and carries "group_sizes".
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise ConfigError(f"{path}: manifest must be a JSON object")
    missing = [k for k in (*MATRIX_KEYS, "group_sizes") if k not in manifest]
    if missing:
        raise ConfigError(f"{path}: manifest is missing keys {missing}")
    unknown = [k for k in manifest if k not in (*MATRIX_KEYS, "group_sizes")]
    if unknown:
        raise ConfigError(f"{path}: manifest has unknown keys {unknown}")
    sizes = manifest["group_sizes"]
    if (not isinstance(sizes, list) or not sizes
            or not all(isinstance(n, int) and n > 0 for n in sizes)):
        raise ConfigError(f"{path}: group_sizes must be a list of positive integers")
    mats = {k: _load_matrix(path.parent / manifest[k], k) for k in MATRIX_KEYS}
    return DesignSpec(A=mats["A"], B=mats["B"], L=mats["L"], R=mats["R"],
                      group_sizes=tuple(sizes))


def write_design(design: DesignSpec, directory) -> Path:
    """Materialize a design as CSV matrices plus a manifest; returns the
    manifest path.  Round-trips entrywise exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for key in MATRIX_KEYS:
        np.savetxt(directory / f"{key}.csv", getattr(design, key),
                   delimiter=",", fmt="%.17g")
    manifest = {key: f"{key}.csv" for key in MATRIX_KEYS}
    manifest["group_sizes"] = list(design.group_sizes)
    out = directory / "manifest.json"
    out.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return out


def _diagnostics_to_dict(diag: DiagnosticsReport) -> dict:
    return {
        "rho_n": diag.rho_n,
        "a2_ratio": diag.a2_ratio,
        "a3_ratio": diag.a3_ratio,
        "d1_bound": diag.d1_bound,
        "heuristic": diag.heuristic,
        "group_imbalance": diag.group_imbalance,
    }


def report_to_dict(report: TestReport) -> dict:
    out = {
        "t_stat": report.t_stat,
        "sigma0_sq_hat": report.sigma0_sq_hat,
        "z": report.z,
        "p_value": report.p_value,
        "alpha": report.alpha,
        "reject": report.reject,
        "degenerate": report.degenerate,
        "diagnostics": (None if report.diagnostics is None
                        else _diagnostics_to_dict(report.diagnostics)),
    }
    return out


def config_hash(config: dict) -> str:
    """Stable digest of a configuration mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def write_report(report: TestReport, path, config: dict | None = None) -> None:
    """Write a test report as JSON with tool version and config digest."""
    payload = report_to_dict(report)
    payload["tool_version"] = __version__
    payload["config_hash"] = config_hash(config) if config is not None else None
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def write_summary(summary, path, config: dict | None = None) -> None:
    """Write a simulation summary as JSON with tool version and config digest."""
    payload = {
        "replications": summary.replications,
        "rejection_rate": summary.rejection_rate,
        "mc_standard_error": summary.mc_standard_error,
        "z_mean": summary.z_mean,
        "z_variance": summary.z_variance,
        "ks_distance": summary.ks_distance,
        "predicted_power": summary.predicted_power,
        "degenerate_count": summary.degenerate_count,
        "seed": summary.seed,
        "tool_version": __version__,
        "config_hash": config_hash(config) if config is not None else None,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


_DISTRIBUTION_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["gaussian", "elliptical_t", "standardized_gamma",
                          "rademacher"]},
        "df": {"type": "number"},
        "shape": {"type": "number"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_COVARIANCE_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["identity", "compound_symmetry", "ar1",
                          "diagonal_ramp"]},
        "rho": {"type": "number"},
        "lo": {"type": "number"},
        "hi": {"type": "number"},
        "scale": {"type": "number"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_MATRIX_VALUES = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

_THETA_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "matrix", "signal_ray"]},
        "values": _MATRIX_VALUES,
        "path": {"type": "string"},
        "snr": {"type": "number"},
        "direction": {"anyOf": [{"const": "canonical"}, _MATRIX_VALUES]},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "name": {"enum": ["one-way", "two-way", "profile-parallelism",
                          "growth-curve"]},
        "group_sizes": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "p": {"type": "integer"},
        "levels": {"type": "array", "items": {"type": "integer"},
                   "minItems": 2, "maxItems": 2},
        "cell_sizes": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "effect": {"enum": ["main_a", "main_b", "interaction"]},
        "degree": {"type": "integer"},
    },
    "required": ["name"],
    "additionalProperties": False,
}

EXPERIMENT_SCHEMA = {
    "type": "object",
    "properties": {
        "scenario": _SCENARIO_SCHEMA,
        "design": {"type": "string"},
        "distributions": {"anyOf": [_DISTRIBUTION_SCHEMA,
                                    {"type": "array", "items": _DISTRIBUTION_SCHEMA,
                                     "minItems": 1}]},
        "covariances": {"anyOf": [_COVARIANCE_SCHEMA,
                                  {"type": "array", "items": _COVARIANCE_SCHEMA,
                                   "minItems": 1}]},
        "theta": _THETA_SCHEMA,
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "reps": {"type": "integer", "minimum": 100},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
    "required": ["reps", "seed"],
    "additionalProperties": False,
}


def load_config(path) -> dict:
    """Read and schema-validate an experiment configuration; unknown keys
    are rejected before any computation."""
    path = Path(path)
    try:
        config = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(config, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(part) for part in exc.absolute_path) or "top level"
        raise ConfigError(f"{path}: invalid config at {where}: {exc.message}") from exc
    if ("scenario" in config) == ("design" in config):
        raise ConfigError(f"{path}: provide exactly one of 'scenario' or 'design'")
    return config
