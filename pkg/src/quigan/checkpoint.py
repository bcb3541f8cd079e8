"""Self-describing binary checkpoints.

Layout (integers little-endian unless noted):

    8 bytes   magic "QIGANCK1"
    u32       format version (currently 1)
    u32       metadata byte length M
    M bytes   UTF-8 JSON metadata (epoch, rng state, full config, ...)
    u32       tensor count T
    T records:
        u16          name byte length L
        L bytes      UTF-8 tensor name
        u8           ndim
        ndim x u32   dimension sizes
        8*prod bytes float64 little-endian payload
    u32       CRC32 over every byte before this field

Saves are atomic (temp file + rename); loads parse and validate the whole
file, including the checksum, before returning anything.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "CheckpointError", "save_checkpoint", "load_checkpoint"]

MAGIC = b"QIGANCK1"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or structurally invalid checkpoint file."""


def save_checkpoint(path, tensors: dict[str, np.ndarray], metadata: dict) -> None:
    """Write tensors + JSON metadata; the file appears atomically."""
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)))
    parts.append(meta)
    parts.append(struct.pack("<I", len(tensors)))
    for name, value in tensors.items():
        value = np.ascontiguousarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", value.ndim))
        parts.append(struct.pack(f"<{value.ndim}I", *value.shape))
        parts.append(value.tobytes())
    body = b"".join(parts)
    blob = body + struct.pack("<I", zlib.crc32(body))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(blob)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError(
                f"{self.path}: truncated while reading {what} at byte {self.pos} "
                f"(need {n} more bytes, file has {len(self.blob)})"
            )
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read and fully validate a checkpoint; returns (tensors, metadata)."""
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 12:
        raise CheckpointError(f"{path}: too short to be a checkpoint ({len(blob)} bytes)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4])
    if stored_crc != actual_crc:
        raise CheckpointError(
            f"{path}: checksum mismatch (stored {stored_crc:08x}, computed {actual_crc:08x})"
        )

    r = _Reader(blob[:-4], path)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: bad magic at byte 0, not a checkpoint file")
    (version,) = r.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")

    (meta_len,) = r.unpack("<I", "metadata length")
    try:
        metadata = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointError(f"{path}: corrupt metadata block: {err}") from err

    (count,) = r.unpack("<I", "tensor count")
    tensors: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = r.unpack("<H", f"tensor {i} name length")
        name = r.take(name_len, f"tensor {i} name").decode("utf-8")
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor name {name!r}")
        (ndim,) = r.unpack("<B", f"tensor {name!r} ndim")
        shape = r.unpack(f"<{ndim}I", f"tensor {name!r} shape") if ndim else ()
        n_items = 1
        for s in shape:
            n_items *= s
        payload = r.take(8 * n_items, f"tensor {name!r} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    if r.pos != len(r.blob):
        raise CheckpointError(
            f"{path}: {len(r.blob) - r.pos} unexpected trailing bytes at byte {r.pos}"
        )
    return tensors, metadata
