"""Versioned weight container.

Layout (documented for alternate-language interop):

    bytes 0..7    magic b"GCNWGT01"
    bytes 8..11   u32 little-endian: byte length of the JSON header
    header        UTF-8 JSON: {"arch", "dims", "class_count", "seed",
                   "dtype": "<f8", "order": "C", "label_names": [...] | null}
    payload       the weight matrices in layer order, each row-major
                   little-endian float64, shapes (dims[l], dims[l+1])

Round-tripping a model through save/load is bit-identical.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .gcn import GcnModel

MAGIC = b"GCNWGT01"


class WeightFormatError(ValueError):
    pass


def save_weights(path, model: GcnModel, label_names: list[str] | None = None):
    header = {
        "arch": model.arch,
        "dims": model.dims(),
        "class_count": model.class_count,
        "seed": model.seed,
        "dtype": "<f8",
        "order": "C",
        "label_names": label_names,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for W in model.weights:
            fh.write(np.ascontiguousarray(W, dtype="<f8").tobytes())


def load_weights(path) -> tuple[GcnModel, list[str] | None]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise WeightFormatError(f"{path}: not a weight container (bad magic)")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        dims = header["dims"]
        weights = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            raw = fh.read(fan_in * fan_out * 8)
            if len(raw) != fan_in * fan_out * 8:
                raise WeightFormatError(f"{path}: truncated weight payload")
            weights.append(np.frombuffer(raw, dtype="<f8").reshape(fan_in, fan_out).copy())
        if fh.read(1):
            raise WeightFormatError(f"{path}: trailing bytes after weight payload")
    model = GcnModel(arch=header["arch"], weights=weights,
                     class_count=int(header["class_count"]), seed=int(header["seed"]))
    return model, header.get("label_names")
