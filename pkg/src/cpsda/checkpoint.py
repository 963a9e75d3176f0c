"""Binary checkpoint container.

Layout, all little-endian:

    magic "CPSDA1" (6 bytes)
    u32 metadata length
    metadata: UTF-8 JSON (config echo plus a tensor directory of
              name / shape / byte offset entries)
    payload: the tensors as raw float32 arrays, C order, at their offsets
    u32 CRC32 of the payload

Every structural defect (bad magic, truncation, directory out of bounds,
checksum mismatch) raises CorruptCheckpoint.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint

MAGIC = b"CPSDA1"
_U32 = struct.Struct("<I")


def write_container(path: str | Path, metadata: dict,
                    tensors: list[tuple[str, np.ndarray]]) -> None:
    """metadata must be JSON-serializable; tensors are stored as float32."""
    directory = []
    chunks = []
    offset = 0
    for name, arr in tensors:
        arr32 = np.ascontiguousarray(arr, dtype=np.float32)
        raw = arr32.tobytes()
        directory.append({"name": name, "shape": list(arr32.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    meta = dict(metadata)
    meta["tensors"] = directory
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    blob = b"".join([
        MAGIC,
        _U32.pack(len(meta_bytes)),
        meta_bytes,
        payload,
        _U32.pack(zlib.crc32(payload) & 0xFFFFFFFF),
    ])
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(MAGIC) + _U32.size:
        raise CorruptCheckpoint(f"{path}: file too short to hold a header")
    if blob[:len(MAGIC)] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic {blob[:len(MAGIC)]!r}")
    meta_len = _U32.unpack_from(blob, len(MAGIC))[0]
    meta_start = len(MAGIC) + _U32.size
    payload_start = meta_start + meta_len
    if payload_start + _U32.size > len(blob):
        raise CorruptCheckpoint(f"{path}: truncated metadata block")
    try:
        meta = json.loads(blob[meta_start:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: metadata is not valid JSON: {exc}") from None
    payload = blob[payload_start:-_U32.size]
    stored_crc = _U32.unpack_from(blob, len(blob) - _U32.size)[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != stored_crc:
        raise CorruptCheckpoint(f"{path}: payload checksum mismatch")
    directory = meta.pop("tensors", None)
    if not isinstance(directory, list):
        raise CorruptCheckpoint(f"{path}: metadata lacks a tensor directory")
    tensors: dict[str, np.ndarray] = {}
    for entry in directory:
        try:
            name, shape, offset = entry["name"], entry["shape"], entry["offset"]
        except (TypeError, KeyError):
            raise CorruptCheckpoint(f"{path}: malformed directory entry {entry!r}") from None
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = offset + 4 * count
        if offset < 0 or end > len(payload):
            raise CorruptCheckpoint(
                f"{path}: tensor {name!r} spans [{offset}, {end}) outside payload "
                f"of {len(payload)} bytes")
        arr = np.frombuffer(payload[offset:end], dtype="<f4").reshape(shape)
        tensors[name] = arr.astype(np.float32, copy=True)
    return meta, tensors
