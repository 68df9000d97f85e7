"""JSON I/O with fixed-precision float text.

On-disk metadata stores every float as decimal text with 9 significant
digits. A 9-digit decimal parsed into a float64 and re-rendered under the
same rule reproduces the text exactly, so load -> save -> load is
bit-stable on all numeric fields.
"""

import json
import math
from pathlib import Path


def format_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite float not representable: {x}")
    s = format(float(x), ".9g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def round9(x: float) -> float:
    """Quantize to the nearest 9-significant-digit decimal."""
    return float(format(float(x), ".9g"))


def _render(obj, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key)}")
            if i:
                out.append(", ")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(": ")
            _render(value, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, value in enumerate(obj):
            if i:
                out.append(", ")
            _render(value, out)
        out.append("]")
    else:
        raise TypeError(f"not JSON-serializable: {type(obj)}")


def dumps(obj) -> str:
    out: list = []
    _render(obj, out)
    return "".join(out)


def dump(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def load(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
