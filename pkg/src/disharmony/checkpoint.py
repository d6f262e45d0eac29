"""Self-describing weight files.

Layout on disk::

    b"DSHCKPT\\0" | uint32 version | uint64 header length | JSON header | float64 LE weights

The header holds the model config, aux task specs, layout table, init seed
and an optional provenance record.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import AuxTaskSpec, ModelConfig, ParamSet

MAGIC = b"DSHCKPT\0"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def _layout_to_json(layout):
    return [[name, [[lname, list(shape)] for lname, shape in layers]] for name, layers in layout]


def _layout_from_json(rows):
    return tuple((name, tuple((lname, tuple(shape)) for lname, shape in layers))
                 for name, layers in rows)


def save(path, params: ParamSet, model: ModelConfig, aux=(), provenance=None) -> None:
    header = {
        "model": model.to_dict(),
        "aux": [t.to_dict() for t in aux],
        "layout": _layout_to_json(params.layout),
        "seed": params.seed,
        "n_values": int(params.values.size),
        "provenance": provenance or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    weights = params.values.astype("<f8", copy=False).tobytes()
    Path(path).write_bytes(_PREFIX.pack(MAGIC, VERSION, len(blob)) + blob + weights)


def load(path):
    """Returns ``(params, model, aux, provenance)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    try:
        header = json.loads(raw[_PREFIX.size:start])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header") from exc
    body = raw[start:]
    if len(body) != 8 * header["n_values"]:
        raise CheckpointError(f"{path}: expected {header['n_values']} weights")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    m = header["model"]
    model = ModelConfig(m["input_dim"], tuple(m["extractor_widths"]), tuple(m["head_widths"]),
                        m["dropout_rate"], m["num_primary_classes"], m["activation"])
    aux = [AuxTaskSpec(**t) for t in header["aux"]]
    params = ParamSet(values, _layout_from_json(header["layout"]), header["seed"])
    return params, model, aux, header["provenance"]
