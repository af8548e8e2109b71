"""Deterministic CSV/JSON writers.

Floats are printed with 17 significant digits (``%.17g``), enough to
round-trip every double. JSON keys keep insertion order; non-finite floats
become ``null``.
"""
from __future__ import annotations

import json
import math
import os
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


def fmt_float(x: float) -> str:
    return "%.17g" % x


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, Enum):
        return v.name
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v)) if math.isfinite(v) else ""
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def _json(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," + pad if indent else ","
    if obj is None:
        return "null"
    if isinstance(obj, Enum):
        return json.dumps(obj.name)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj)) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (json.dumps(str(k)) + ": " + _json(v, indent, level + 1) for k, v in obj.items())
        return "{" + pad + sep.join(items) + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + pad + sep.join(_json(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_text(obj, indent: int = 2) -> str:
    return _json(obj, indent, 0) + "\n"


def write_text(path, text: str) -> None:
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def emit(records, fmt: str, path, header: Sequence[str] | None = None) -> None:
    """Write rows as CSV (``header`` required) or any JSON-able object as JSON."""
    if fmt == "csv":
        if header is None:
            raise ValueError("CSV output needs a header")
        write_text(path, csv_text(header, records))
    elif fmt == "json":
        write_text(path, json_text(records))
    else:
        raise ValueError(f"unknown format {fmt!r}")


def sidecar_path(path) -> str:
    return str(path) + ".meta.json"
