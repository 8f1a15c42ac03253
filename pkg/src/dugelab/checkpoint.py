"""Checkpoint files: "DUGE1" header, JSON manifest, flat little-endian f32 blob.

Layout:  b"DUGE1" | u32le manifest length | manifest JSON | float32 blob.
Manifest entries carry (name, shape, offset) with offsets counted in f32
elements; ``meta`` stores whatever the owner needs to rebuild itself
(model hyperparameters, kind tag). Parameters are stored as 32-bit floats,
training state always runs in 64-bit.
"""

from __future__ import annotations

import hashlib
import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"DUGE1"


class CheckpointError(ValueError):
    pass


def _as_array(value):
    data = getattr(value, "data", value)
    return np.asarray(data, dtype=np.float64)


def save_params(path, params, meta=None):
    """Write named arrays (or Tensors) to ``path`` in checkpoint format."""
    entries = []
    blobs = []
    offset = 0
    for name, value in params.items():
        arr = _as_array(value)
        entries.append({"name": str(name), "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.astype("<f4").tobytes())
        offset += arr.size
    manifest = {"entries": entries, "meta": meta or {}}
    manifest_bytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(manifest_bytes)))
        fh.write(manifest_bytes)
        for blob in blobs:
            fh.write(blob)


def load_params(path):
    """Read a checkpoint; returns (ordered name -> float64 array, meta dict)."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad header, expected {MAGIC!r}")
    (mlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    manifest = json.loads(raw[start : start + mlen].decode("utf-8"))
    blob = np.frombuffer(raw[start + mlen :], dtype="<f4")
    params = OrderedDict()
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        off = entry["offset"]
        if off + n > blob.size:
            raise CheckpointError(f"{path}: entry {entry['name']!r} overruns blob")
        params[entry["name"]] = blob[off : off + n].astype(np.float64).reshape(shape)
    return params, manifest.get("meta", {})


def params_digest(params):
    """SHA-256 over names, shapes, and raw float64 bytes; used for frozen-model checks."""
    h = hashlib.sha256()
    for name, value in params.items():
        arr = _as_array(value)
        h.update(str(name).encode("utf-8"))
        h.update(str(arr.shape).encode("utf-8"))
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def manifest_of(params):
    """Stable (name, shape) signature of a parameter dict."""
    return [(name, tuple(_as_array(v).shape)) for name, v in params.items()]
