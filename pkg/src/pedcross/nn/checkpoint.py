"""Checkpoint file: JSON header + flat little-endian float64 parameters.

Layout: 8-byte little-endian uint64 header length, the UTF-8 JSON header
(layer specs and parameter shapes), then every parameter tensor's values
concatenated row-major as little-endian float64. Round-trips bit-exactly.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .layers import LayerSpec

_MAGIC_KEY = "format"
_FORMAT = "pedcross-checkpoint-v1"


def save_checkpoint(path, layer_specs, arrays) -> None:
    header = {
        _MAGIC_KEY: _FORMAT,
        "layers": [spec.to_json() for spec in layer_specs],
        "shapes": [list(a.shape) for a in arrays],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    data = Path(path).read_bytes()
    (header_len,) = struct.unpack("<Q", data[:8])
    header = json.loads(data[8 : 8 + header_len].decode("utf-8"))
    if header.get(_MAGIC_KEY) != _FORMAT:
        raise ValueError(f"{path}: not a {_FORMAT} file")
    specs = [LayerSpec.from_json(d) for d in header["layers"]]
    arrays = []
    offset = 8 + header_len
    for shape in header["shapes"]:
        count = int(np.prod(shape)) if shape else 1
        raw = data[offset : offset + 8 * count]
        if len(raw) != 8 * count:
            raise ValueError(f"{path}: truncated parameter data")
        arrays.append(np.frombuffer(raw, dtype="<f8").reshape(shape).copy())
        offset += 8 * count
    return specs, arrays
