"""Validation of the solver CLI's file contract.

A schema violation is always an error that names the missing piece; inputs
are never silently skipped.
"""

from __future__ import annotations

import json

import numpy as np


class SchemaError(ValueError):
    pass


SWEEP_COLUMNS_1D = ["eps", "nu", "max_x", "decay_slope", "crit_norm", "profile_gap", "converged"]
SWEEP_COLUMNS_2D = ["eps", "nu", "max_x", "max_y", "decay_slope", "crit_norm", "profile_gap", "converged"]

RECORD_KEYS = ("config_echo", "tool_version", "wall_time_s", "results", "verdicts")


def load_sweep_table(path: str) -> dict:
    """Parse a sweep TSV; returns column name -> numpy array."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise SchemaError(f"{path}: empty sweep table")
    header = lines[0].split("\t")
    expected = SWEEP_COLUMNS_2D if "max_y" in header else SWEEP_COLUMNS_1D
    for col in expected:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    if header != expected:
        raise SchemaError(
            f"{path}: column order {header} does not match the contract {expected}"
        )
    rows = [ln.split("\t") for ln in lines[1:]]
    if not rows:
        raise SchemaError(f"{path}: empty sweep (no data rows)")
    if any(len(r) != len(header) for r in rows):
        raise SchemaError(f"{path}: ragged rows")
    table: dict = {}
    for j, col in enumerate(header):
        if col == "converged":
            table[col] = np.array([r[j] == "true" for r in rows])
        else:
            table[col] = np.array([float(r[j]) for r in rows])
    return table


def load_record(path: str, require: tuple = ()) -> dict:
    """Parse a run record and check required result keys."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            record = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    for key in RECORD_KEYS:
        if key not in record:
            raise SchemaError(f"{path}: missing record key {key!r}")
    for key in require:
        node = record["results"]
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                raise SchemaError(f"{path}: missing results key {key!r}")
            node = node[part]
    return record


def pick_input(paths: list, suffix: str) -> str:
    for p in paths:
        if p.endswith(suffix):
            return p
    raise SchemaError(f"no input with suffix {suffix!r} among {paths}")
