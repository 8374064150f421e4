"""Flat binary checkpoint container.

Byte layout (all integers little-endian):

    magic    4 bytes  b"SDTC"
    version  u32      currently 1
    flags    u32      bit 0: normalization folded into linear layers
    count    u32      number of entries
    entry*   repeated count times:
        name_len  u16
        name      name_len bytes, UTF-8 parameter path
        ndim      u8
        dims      u32 * ndim
        payload   float64 little-endian, prod(dims) values, row-major

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SDTC"
VERSION = 1
FLAG_FOLDED = 1


class CheckpointError(ValueError):
    """Raised on malformed checkpoint files."""


def save_checkpoint(path, arrays: dict[str, np.ndarray], folded: bool = False) -> None:
    flags = FLAG_FOLDED if folded else 0
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, flags, len(arrays)))
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            if len(name_b) > 0xFFFF:
                raise CheckpointError(f"parameter name too long: {name[:40]}...")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", a.ndim))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(a.tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], bool]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    version, flags, count = struct.unpack_from("<III", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    arrays: dict[str, np.ndarray] = {}
    off = 16
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", raw, off)
        off += 1
        dims = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        n = int(np.prod(dims)) if ndim else 1
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=off).reshape(dims)
        off += 8 * n
        arrays[name] = arr.astype(np.float64).copy()
    if off != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - off} trailing bytes")
    return arrays, bool(flags & FLAG_FOLDED)
