"""Parameter (de)serialization.

Checkpoints are JSON maps name -> {shape, data}. Values go through Python's
repr-based float formatting, which round-trips float64 bit-exactly.
"""

import json
from pathlib import Path

import numpy as np

from causerl.errors import ShapeMismatchError
from causerl.tensor import Tensor


def params_to_dict(named: dict[str, Tensor]) -> dict:
    return {
        name: {"shape": list(p.data.shape), "data": p.data.reshape(-1).tolist()}
        for name, p in named.items()
    }


def dict_to_arrays(blob: dict) -> dict[str, np.ndarray]:
    out = {}
    for name, entry in blob.items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        out[name] = arr
    return out


def save_params(path, named: dict[str, Tensor], extra: dict | None = None) -> None:
    doc = {"format": "causerl-params-v1", "params": params_to_dict(named)}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_params(path) -> dict:
    doc = json.loads(Path(path).read_text())
    doc["params"] = dict_to_arrays(doc["params"])
    return doc


def assign_params(named: dict[str, Tensor], arrays: dict[str, np.ndarray]) -> None:
    for name, p in named.items():
        if name not in arrays:
            raise KeyError(f"checkpoint is missing parameter {name}")
        if arrays[name].shape != p.data.shape:
            raise ShapeMismatchError(
                f"{name}: checkpoint {arrays[name].shape} vs model {p.data.shape}")
        p.data[...] = arrays[name]
