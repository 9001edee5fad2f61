"""Checkpoint container: model name, config, named parameters, provenance.

Layout (integers little-endian): magic ``b"SEGC"``, uint32 format version,
uint64 manifest length, UTF-8 JSON manifest, then each tensor's raw
little-endian payload concatenated in manifest order. The manifest pins the
variant name, the block config, every parameter's name/shape/dtype, and
free-form training provenance. Reload is bit-exact; writes go through a
temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from .blocks import BlockConfig
from .errors import RasterIoError
from .factory import VariantModel, parse_model_name

MAGIC = b"SEGC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")

_DTYPE_CODES = {torch.float32: "<f4", torch.float64: "<f8"}
_CODE_DTYPES = {"<f4": torch.float32, "<f8": torch.float64}


def save_checkpoint(path, model: VariantModel, provenance: dict | None = None) -> None:
    state = model.state_dict()
    params = []
    payloads = []
    for name, tensor in state.items():
        code = _DTYPE_CODES.get(tensor.dtype)
        if code is None:
            raise RasterIoError(f"unsupported parameter dtype {tensor.dtype} for {name}")
        array = tensor.detach().cpu().numpy().astype(code, copy=False)
        params.append({"name": name, "shape": list(tensor.shape), "dtype": code})
        payloads.append(np.ascontiguousarray(array).tobytes())
    manifest = {
        "model_name": model.spec.canonical_name,
        "block_config": model.cfg.__dict__,
        "params": params,
        "provenance": provenance or {},
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(blob)))
        fh.write(blob)
        for payload in payloads:
            fh.write(payload)
    os.replace(tmp, path)


def _read_header(fh, path) -> dict:
    head = fh.read(_PREFIX.size)
    if len(head) != _PREFIX.size:
        raise RasterIoError(f"{path}: truncated checkpoint header")
    magic, version, manifest_len = _PREFIX.unpack(head)
    if magic != MAGIC:
        raise RasterIoError(f"{path}: bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise RasterIoError(f"{path}: unsupported checkpoint version {version}")
    blob = fh.read(manifest_len)
    if len(blob) != manifest_len:
        raise RasterIoError(f"{path}: truncated checkpoint manifest")
    return json.loads(blob.decode("utf-8"))


def read_manifest(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, manifest)."""
    with open(path, "rb") as fh:
        manifest = _read_header(fh, path)
        state = {}
        for param in manifest["params"]:
            shape = tuple(param["shape"])
            dtype = param["dtype"]
            if dtype not in _CODE_DTYPES:
                raise RasterIoError(f"{path}: unknown dtype {dtype!r}")
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(count * int(dtype[-1]))
            if len(raw) != count * int(dtype[-1]):
                raise RasterIoError(f"{path}: truncated payload for {param['name']}")
            array = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
            state[param["name"]] = torch.from_numpy(array)

    spec = parse_model_name(manifest["model_name"])
    cfg = BlockConfig(**manifest["block_config"])
    model = VariantModel(spec, cfg)
    model.load_state_dict(state, strict=True)
    model.eval()
    return model, manifest
