"""Parameter checkpoints.

Layout: magic ``b"VSLC"``, uint64 little-endian header length, a UTF-8 JSON
header ``{"config": ..., "params": [{"name", "shape"}, ...]}``, then each
parameter's values as little-endian float64 in header order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .. import numerics as nx
from ..errors import ConfigError, ParseError
from .config import ModelConfig

MAGIC = b"VSLC"


def save_checkpoint(path, model, extra=None) -> None:
    header = {
        "config": model.cfg.to_dict(),
        "params": [{"name": k, "shape": list(v.shape)} for k, v in model.params.items()],
    }
    if extra:
        header["extra"] = extra
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v.data, dtype="<f8").tobytes())


def read_checkpoint(path) -> tuple[ModelConfig, dict, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint")
    (hlen,) = struct.unpack_from("<Q", raw, 4)
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    offset = 12 + hlen
    state = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        state[entry["name"]] = arr.astype(np.float64)
        offset += 8 * count
    if offset != len(raw):
        raise ParseError(f"{path}: trailing or missing payload bytes")
    return ModelConfig.from_dict(header["config"]), state, header.get("extra", {})


def load_checkpoint(path, model) -> dict:
    """Load parameters into ``model``; the stored config must match exactly."""
    cfg, state, extra = read_checkpoint(path)
    if cfg != model.cfg:
        raise ConfigError(f"checkpoint config {cfg} does not match model config {model.cfg}")
    if set(state) != set(model.params):
        raise ConfigError("checkpoint parameter names do not match the model")
    for name, arr in state.items():
        if arr.shape != model.params[name].shape:
            raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {model.params[name].shape}")
    model.load_state(state)
    return extra


def model_from_checkpoint(path, embeddings):
    from .network import VSLModel

    cfg, state, _ = read_checkpoint(path)
    params = {k: nx.Tensor(v, requires_grad=True, name=k) for k, v in state.items()}
    return VSLModel(cfg, embeddings, params=params)
