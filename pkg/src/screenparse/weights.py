"""Weight files: JSON header followed by raw little-endian float64 tensors.

Layout::

    b"SPWT" | uint32 header length (LE) | UTF-8 JSON header | float64 data

The header lists tensors (name, shape) in the order their data follows.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"SPWT"
FORMAT_VERSION = 1


class WeightFormatError(ValueError):
    pass


def write_weights(path: str | Path, kind: str, tensors: Mapping[str, np.ndarray],
                  meta: Mapping) -> None:
    header = dict(meta)
    header.update(format_version=FORMAT_VERSION, kind=kind,
                  tensors=[{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()])
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_weights(path: str | Path, kind: str | None = None
                 ) -> tuple[dict, "OrderedDict[str, np.ndarray]"]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC or len(raw) < 8:
        raise WeightFormatError(f"{path}: not a weight file")
    (n,) = struct.unpack("<I", raw[4:8])
    try:
        header = json.loads(raw[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: corrupt header") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise WeightFormatError(f"{path}: unsupported format {header.get('format_version')}")
    if kind is not None and header.get("kind") != kind:
        raise WeightFormatError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=8 + n)
    tensors: OrderedDict[str, np.ndarray] = OrderedDict()
    pos = 0
    for spec in header["tensors"]:
        size = int(np.prod(spec["shape"], dtype=np.int64))
        if pos + size > data.size:
            raise WeightFormatError(f"{path}: truncated at tensor {spec['name']}")
        tensors[spec["name"]] = data[pos:pos + size].reshape(spec["shape"]).astype(np.float64)
        pos += size
    if pos != data.size:
        raise WeightFormatError(f"{path}: {data.size - pos} trailing values")
    return header, tensors


def state_dict_arrays(module) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, v.detach().cpu().numpy().astype(np.float64))
                       for k, v in module.state_dict().items())


def load_arrays(module, tensors: Mapping[str, np.ndarray]) -> None:
    import torch
    own = module.state_dict()
    if list(own) != list(tensors):
        raise WeightFormatError("tensor names do not match the model")
    for k, v in tensors.items():
        if tuple(own[k].shape) != tuple(v.shape):
            raise WeightFormatError(f"shape mismatch for {k}: {tuple(v.shape)} vs "
                                    f"{tuple(own[k].shape)}")
    module.load_state_dict({k: torch.as_tensor(v, dtype=own[k].dtype) for k, v in tensors.items()})
