"""Versioned binary container for named arrays plus a JSON config echo.

Layout: 8-byte magic, u32 version, u64 header length, UTF-8 JSON header,
raw array payloads concatenated in header order. Arrays are written sorted
by name with explicit dtype/shape/offset metadata, and the header JSON uses
sorted keys and fixed separators, so identical content serializes to
identical bytes (save -> load -> save round-trips bit-exactly).
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ASYMPTCH"
VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, truncated, or version-mismatched checkpoint file."""


def pack_arrays(arrays: dict, meta: dict | None = None) -> bytes:
    """Serialize a name->ndarray mapping (plus JSON-safe metadata) to bytes."""
    names = sorted(arrays)
    manifest = []
    offset = 0
    payloads = []
    for name in names:
        a = np.ascontiguousarray(arrays[name])
        raw = a.tobytes()
        manifest.append({
            "name": name,
            "dtype": a.dtype.str,
            "shape": list(a.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        payloads.append(raw)
        offset += len(raw)
    header = json.dumps(
        {"meta": meta or {}, "arrays": manifest},
        sort_keys=True, separators=(",", ":"),
    ).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(header)),
             header] + payloads
    return b"".join(parts)


def unpack_arrays(blob: bytes) -> tuple[dict, dict]:
    """Inverse of :func:`pack_arrays`; returns (arrays, meta)."""
    base = len(MAGIC) + 4 + 8
    if len(blob) < base or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", blob, len(MAGIC) + 4)
    if len(blob) < base + hlen:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[base:base + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    payload = blob[base + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise CheckpointError("truncated checkpoint payload")
        a = np.frombuffer(payload[start:start + n], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = a.reshape(entry["shape"]).copy()
    return arrays, header["meta"]


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_arrays(arrays, meta))


def load_arrays(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        return unpack_arrays(fh.read())
