"""Shared header layout for the binary weight and mixture-model containers.

Layout: 4-byte magic, u16 version, u32 JSON length, UTF-8 JSON, then a raw
little-endian float64 payload whose length the JSON determines.
"""
import json
import struct
from pathlib import Path

import numpy as np

_HEAD = struct.Struct("<4sHI")


class CorruptFileError(ValueError):
    """Container is truncated, has the wrong magic, or fails a size check."""


def write_container(path, magic: bytes, version: int, meta: dict, payload: np.ndarray) -> None:
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(_HEAD.pack(magic, version, len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_container(path, magic: bytes, version: int) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEAD.size:
        raise CorruptFileError(f"{path}: truncated header")
    got, ver, n = _HEAD.unpack_from(raw)
    if got != magic:
        raise CorruptFileError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if ver != version:
        raise CorruptFileError(f"{path}: unsupported version {ver}")
    end = _HEAD.size + n
    if len(raw) < end:
        raise CorruptFileError(f"{path}: truncated metadata")
    try:
        meta = json.loads(raw[_HEAD.size:end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: unreadable metadata") from exc
    body = raw[end:]
    if len(body) % 8:
        raise CorruptFileError(f"{path}: payload is not a whole number of float64 values")
    return meta, np.frombuffer(body, dtype="<f8").astype(np.float64)
