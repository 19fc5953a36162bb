"""Binary checkpoint container.

Layout (all integers little-endian):
  magic   4 bytes  b"CKPT"
  version u16      currently 1
  count   u32      number of entries
  entry := name_len u16, name utf-8, ndim u8, dims u32 * ndim,
           payload float32 * prod(dims)

Values are stored as little-endian float32; round-trip of float32 data
is bit-exact. Training state that must survive resume therefore lives
in float32.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CKPT"
VERSION = 1


class CheckpointFormatError(ValueError):
    """Bad magic, unsupported version, or truncated/corrupt payload."""


def save_checkpoint(path, entries: dict[str, np.ndarray]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HI", VERSION, len(entries)))
    for name, arr in entries.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"entry name too long: {name[:32]}...")
        if arr.ndim > 0xFF:
            raise ValueError(f"entry {name!r} has too many dims: {arr.ndim}")
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    Path(path).write_bytes(buf.getvalue())


def _read_exact(f, n: int, what: str) -> bytes:
    chunk = f.read(n)
    if len(chunk) != n:
        raise CheckpointFormatError(f"truncated checkpoint while reading {what}")
    return chunk


def load_checkpoint(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    f = io.BytesIO(raw)
    magic = f.read(4)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, count = struct.unpack("<HI", _read_exact(f, 6, "header"))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(f, 2, "name length"))
        name = _read_exact(f, name_len, "name").decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(f, 1, "ndim"))
        dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim, "dims"))
        n = int(np.prod(dims)) if ndim else 1
        payload = _read_exact(f, 4 * n, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims)
        if name in out:
            raise CheckpointFormatError(f"duplicate entry {name!r}")
        out[name] = arr.copy()
    if f.read(1):
        raise CheckpointFormatError("trailing bytes after final entry")
    return out
