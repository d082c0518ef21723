"""Binary checkpoint format.

Layout: magic bytes ``INKL``, format version as little-endian u16, then zero
or more records until EOF.  Each record is::

    name_len: u32 LE
    name:     name_len bytes, UTF-8
    dtype:    u8 tag (0 = float32, 1 = float64)
    rank:     u8
    dims:     rank x u32 LE
    payload:  product(dims) scalars, little-endian

Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"INKL"
VERSION = 1

_DTYPE_TAGS = {np.dtype("float32"): 0, np.dtype("float64"): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            if arr.dtype not in _DTYPE_TAGS:
                raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<BB", _DTYPE_TAGS[arr.dtype], arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            fh.write(le.tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 6
    out: dict[str, np.ndarray] = {}
    while off < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        tag, rank = struct.unpack_from("<BB", raw, off)
        off += 2
        if tag not in _TAG_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype tag {tag} for {name!r}")
        dims = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        dtype = _TAG_DTYPES[tag]
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off).reshape(dims)
        off += nbytes
        out[name] = arr.astype(arr.dtype.newbyteorder("="))
    return out
