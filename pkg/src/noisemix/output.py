"""Bit-stable tabular output.

Numbers are serialized with 17 significant digits (enough to round-trip a
double), lines end in a single line feed, and files are written to a
temporary name in the target directory and renamed into place, so a failed
run never leaves a partial file behind.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

__all__ = ["format_number", "write_table", "write_json"]


def format_number(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def write_table(path: str, header: list[str], columns: list, fmt: str = "csv") -> None:
    """Write named columns as CSV or JSON, atomically."""
    columns = [np.asarray(col) for col in columns]
    if len(header) != len(columns):
        raise ValueError("header and column counts differ")
    lengths = {len(col) for col in columns}
    if len(lengths) != 1:
        raise ValueError("columns must share a length")
    if fmt == "csv":
        lines = [",".join(header)]
        for row in zip(*columns):
            lines.append(",".join(_cell(value) for value in row))
        _atomic_write(path, "\n".join(lines) + "\n")
    elif fmt == "json":
        payload = {
            name: [_json_cell(value) for value in col]
            for name, col in zip(header, columns)
        }
        write_json(path, payload)
    else:
        raise ValueError(f"unknown output format {fmt!r}")


def _cell(value) -> str:
    if isinstance(value, (str, np.str_)):
        return str(value)
    return format_number(value)


def _json_cell(value):
    if isinstance(value, (str, np.str_)):
        return str(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    return float(value)


def write_json(path: str, payload) -> None:
    """Write a JSON document with sorted keys, atomically."""
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
