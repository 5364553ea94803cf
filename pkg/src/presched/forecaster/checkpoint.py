"""Self-describing binary checkpoints.

Layout: 8-byte magic, little-endian uint64 header length, a UTF-8 JSON header
(config, graph, array names, shapes and byte offsets; keys sorted), then the
raw little-endian float64 payload. Nothing time-dependent is written, so equal
models give equal bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from presched.forecaster.model import GraphContext, ModelConfig
from presched.forecaster.training import ForecastModel

MAGIC = b"PSCHCKP1"
FORMAT_VERSION = 1


def encode_checkpoint(model: ForecastModel, extra: dict | None = None) -> bytes:
    arrays, offset, blobs = [], 0, []
    for name in sorted(model.params):
        a = np.ascontiguousarray(model.params[name], dtype="<f8")
        arrays.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += a.nbytes
    header = {
        "format": "presched-checkpoint",
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "graph": model.graph.to_dict(),
        "arrays": arrays,
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(blobs)


def decode_checkpoint(blob: bytes) -> tuple[ForecastModel, dict]:
    if blob[:8] != MAGIC:
        raise ValueError("not a presched checkpoint")
    (n,) = struct.unpack("<Q", blob[8:16])
    header = json.loads(blob[16 : 16 + n].decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    payload = memoryview(blob)[16 + n :]
    params = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        a = np.frombuffer(payload, dtype="<f8", count=count, offset=entry["offset"])
        params[entry["name"]] = a.reshape(entry["shape"]).astype(np.float64)
    cfg = dict(header["config"])
    cfg["dilations"] = tuple(cfg["dilations"])
    model = ForecastModel(ModelConfig(**cfg), GraphContext.from_dict(header["graph"]), params)
    return model, header.get("extra", {})


def save_checkpoint(model: ForecastModel, path, extra: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(model, extra))


def load_checkpoint(path) -> tuple[ForecastModel, dict]:
    return decode_checkpoint(Path(path).read_bytes())
