"""Byte-stable archive of named numpy arrays plus a JSON metadata block.

Layout: 8-byte magic, uint32 format version, uint32 header length, the JSON
header (sorted keys, compact separators), then each array's raw bytes in
sorted name order, little-endian C-contiguous. Identical inputs produce
identical bytes, unlike zip-based containers that embed timestamps.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HPIKCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def _canonical(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    dtype = arr.dtype.newbyteorder("<")
    return np.ascontiguousarray(arr, dtype=dtype)


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    """Write arrays (and optional JSON-serializable metadata) to path."""
    canon = {name: _canonical(a) for name, a in arrays.items()}
    header = {
        "version": FORMAT_VERSION,
        "meta": meta or {},
        "arrays": {
            name: {"dtype": a.dtype.str, "shape": list(a.shape)} for name, a in canon.items()
        },
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for name in sorted(canon):
            fh.write(canon[name].tobytes())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (arrays, meta) written by save_arrays."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<II", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = len(MAGIC) + 8
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    arrays = {}
    offset = start + header_len
    for name in sorted(header["arrays"]):
        info = header["arrays"][name]
        dtype = np.dtype(info["dtype"])
        shape = tuple(info["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated data for array {name!r}")
        arrays[name] = np.frombuffer(raw[offset : offset + nbytes], dtype=dtype).reshape(shape).copy()
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays, header.get("meta", {})
