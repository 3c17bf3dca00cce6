"""Binary checkpoint container.

Layout (all integers little-endian):

    magic            8 bytes  b"NAHTCKPT"
    format_version   uint32   currently 1
    float_width      uint32   32 or 64
    entry_count      uint32
    then per entry, sorted by name:
      name_len       uint32
      name           utf-8 bytes
      rank           uint32
      dims           rank * uint64
      data           prod(dims) * float32/float64, little-endian, C order

Round-trips are bit-exact for matching float width.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError

MAGIC = b"NAHTCKPT"
FORMAT_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray], float_width: int) -> None:
    if float_width not in (32, 64):
        raise ConfigError(f"float_width must be 32 or 64, got {float_width}")
    ftype = np.dtype(f"<f{float_width // 8}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, float_width, len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=ftype)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_arrays(path) -> tuple[dict[str, np.ndarray], int]:
    """Read a checkpoint; returns (name -> array, float_width)."""
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ConfigError(f"{path}: not a checkpoint file (bad magic)")
    version, width, count = struct.unpack_from("<III", blob, 8)
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    ftype = np.dtype(f"<f{width // 8}")
    off = 20
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}Q", blob, off)
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(blob, dtype=ftype, count=n, offset=off).reshape(dims)
        off += n * ftype.itemsize
        out[name] = arr.copy()
    if off != len(blob):
        raise ConfigError(f"{path}: trailing bytes after last entry")
    return out, width


def save_store(store, path) -> None:
    save_arrays(path, {n: store.value(n) for n in store.names()}, store.dtype.itemsize * 8)


def load_into_store(store, path) -> None:
    arrays, _ = load_arrays(path)
    store.load_state(arrays)
