"""Flat named-tensor container used for model, hypernetwork and dataset files.

Byte layout (all integers little-endian)::

    offset 0   8 bytes   magic  b"PHNTENS1"
    offset 8   4 bytes   uint32 header length H
    offset 12  H bytes   UTF-8 JSON header
    offset 12+H          tensor payload, concatenated in header order

The JSON header is ``{"meta": {...}, "manifest": [...] | null,
"tensors": [{"name", "shape", "dtype", "offset", "nbytes"}, ...]}`` where
``dtype`` is ``"<f4"`` (the default), ``"<f8"`` or ``"<i8"``, and ``offset`` is
relative to the start of the payload. Values are stored row-major.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PHNTENS1"
_ALLOWED = {"<f4", "<f8", "<i8"}


class CheckpointFormatError(ValueError):
    pass


def _storage_dtype(arr: np.ndarray) -> str:
    if arr.dtype == np.float64:
        return "<f8"
    if arr.dtype.kind in "iu":
        return "<i8"
    return "<f4"


def save_tensors(path, tensors: dict, meta: dict | None = None, manifest: list | None = None) -> Path:
    path = Path(path)
    entries, blobs, offset = [], [], 0
    for name, value in tensors.items():
        arr = np.asarray(getattr(value, "data", value))
        dt = _storage_dtype(arr)
        blob = np.ascontiguousarray(arr, dtype=np.dtype(dt)).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dt, "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": meta or {}, "manifest": manifest, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)
    return path


def load_tensors(path) -> tuple[dict, dict, list | None]:
    """Return ``(tensors, meta, manifest)`` with tensors as numpy arrays."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic {raw[:8]!r}")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    payload = memoryview(raw)[12 + hlen :]
    tensors = {}
    for e in header["tensors"]:
        if e["dtype"] not in _ALLOWED:
            raise CheckpointFormatError(f"{path}: unsupported dtype {e['dtype']} for {e['name']}")
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise CheckpointFormatError(f"{path}: tensor {e['name']} runs past end of file")
        arr = np.frombuffer(payload[e["offset"] : end], dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        native = np.float64 if e["dtype"] == "<f8" else np.int64 if e["dtype"] == "<i8" else np.float32
        tensors[e["name"]] = arr.astype(native)
    return tensors, header["meta"], header["manifest"]
