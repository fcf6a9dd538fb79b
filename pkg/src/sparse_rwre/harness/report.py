"""Report serialization and schema validation.

Reports are written with sorted keys and floats in 17 significant digits so
that identical runs give byte-identical files.  Non-finite floats are encoded
as the strings "Infinity", "-Infinity" and "NaN"; complex numbers as
``{"re": ..., "im": ...}``.
"""

from __future__ import annotations

import json
import math
from importlib import resources

import jsonschema
import numpy as np

TIMING_KEY = "timing"


def _float(x: float) -> str:
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    if x == int(x) and abs(x) < 1e17:
        return f"{x:.1f}"
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    end = " " * (indent * level) if indent else ""
    nl = "\n" if indent else ""
    sep = ", " if not indent else ","
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))
    if isinstance(obj, complex):
        return _encode({"re": obj.real, "im": obj.imag}, indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}" for k in sorted(obj, key=str)]
        return "{" + nl + (sep + nl if indent else sep).join(items) + nl + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[" + nl + (sep + nl if indent else sep).join(items) + nl + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def _decode_special(obj):
    if isinstance(obj, dict):
        return {k: _decode_special(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_special(v) for v in obj]
    if obj == "Infinity":
        return math.inf
    if obj == "-Infinity":
        return -math.inf
    if obj == "NaN":
        return math.nan
    return obj


def loads(text: str):
    return _decode_special(json.loads(text))


def without_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != TIMING_KEY}


def load_schema(name: str) -> dict:
    text = resources.files("sparse_rwre.harness").joinpath("schemas", name).read_text()
    return json.loads(text)


def validate(document: dict, schema_name: str) -> None:
    """Raise jsonschema.ValidationError when the (decoded) document does not conform."""
    jsonschema.validate(json.loads(dumps(document)), load_schema(schema_name))


def write(report: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(report))
