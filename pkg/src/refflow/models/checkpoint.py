"""JSON checkpoints for model parameters.

Layout (format version 1)::

    {
      "format": "refflow-params",
      "version": 1,
      "kind": "mlp" | "spg",
      "meta": {...architecture fields...},
      "arrays": {"<name>": {"shape": [rows, cols], "data": [flat row-major floats]}}
    }

Floats are written with Python's shortest round-trip repr, so a save/load
cycle is lossless.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import InputError
from .fm import MlpParams
from .spg import SpgParams

FORMAT = "refflow-params"
VERSION = 1

Params = Union[MlpParams, SpgParams]


def params_to_dict(params: Params) -> dict:
    if isinstance(params, MlpParams):
        kind = "mlp"
        meta = {"dim": params.dim, "hidden": list(params.hidden), "activation": params.activation}
    elif isinstance(params, SpgParams):
        kind = "spg"
        meta = {"dim": params.dim, "key_dim": params.key_dim, "gate_hidden": params.gate_hidden,
                "refiner_hidden": list(params.refiner_hidden)}
    else:
        raise InputError(f"cannot serialize {type(params).__name__}")
    arrays = {
        name: {"shape": list(arr.shape), "data": [float(v) for v in np.asarray(arr).ravel()]}
        for name, arr in sorted(params.arrays.items())
    }
    return {"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta, "arrays": arrays}


def params_from_dict(doc: dict) -> Params:
    if doc.get("format") != FORMAT:
        raise InputError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise InputError(f"unsupported checkpoint version {doc.get('version')}")
    arrays = {}
    for name, entry in doc["arrays"].items():
        data = np.asarray(entry["data"], dtype=float)
        shape = tuple(entry["shape"])
        if data.size != int(np.prod(shape)):
            raise InputError(f"array {name}: {data.size} values for shape {shape}")
        arrays[name] = data.reshape(shape)
    meta = doc["meta"]
    if doc["kind"] == "mlp":
        return MlpParams(arrays, meta["dim"], tuple(meta["hidden"]), meta.get("activation", "tanh"))
    if doc["kind"] == "spg":
        return SpgParams(arrays, meta["dim"], meta["key_dim"], meta["gate_hidden"], tuple(meta["refiner_hidden"]))
    raise InputError(f"unknown checkpoint kind {doc['kind']!r}")


def save_params(path: Union[str, Path], params: Params) -> None:
    Path(path).write_text(json.dumps(params_to_dict(params), separators=(",", ":")) + "\n")


def load_params(path: Union[str, Path]) -> Params:
    return params_from_dict(json.loads(Path(path).read_text()))
