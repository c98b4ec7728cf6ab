"""Deterministic, atomic artifact writers."""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np


def fmt(x) -> str:
    """Full double precision (17 significant digits)."""
    return format(float(x), ".17g")


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header, rows) -> None:
    """Write a CSV with every number at 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def complex_columns(prefix: str, shape):
    """Column names ``prefix[i,j,...].re`` / ``.im`` in C order."""
    names = []
    for idx in np.ndindex(*shape):
        tag = ",".join(str(i) for i in idx)
        names += [f"{prefix}[{tag}].re", f"{prefix}[{tag}].im"]
    return names


def complex_values(arr):
    flat = np.asarray(arr, dtype=complex).reshape(-1)
    return np.stack([flat.real, flat.imag], axis=1).reshape(-1)
