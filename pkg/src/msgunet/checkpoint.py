"""Binary checkpoint container: named arrays in a fixed little-endian format.

Layout: magic ``MSGU``, u32 version, then records until EOF. Each record is
[u32 name length, name bytes (UTF-8), u8 dtype code, u8 rank,
u32 dims..., raw little-endian payload]. dtype codes: 0 = float32,
1 = float64, 2 = uint8, 3 = int64. Save followed by load is bitwise exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"MSGU"
VERSION = 1

_DTYPE_CODES = {
    np.dtype("<f4"): 0,
    np.dtype("<f8"): 1,
    np.dtype("u1"): 2,
    np.dtype("<i8"): 3,
}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_arrays(path, arrays: dict[str, np.ndarray]):
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        if np.dtype(dt) not in _DTYPE_CODES:
            raise CheckpointError(f"record {name!r}: unsupported dtype {arr.dtype}")
        code = _DTYPE_CODES[np.dtype(dt)]
        name_b = name.encode("utf-8")
        if arr.ndim > 255:
            raise CheckpointError(f"record {name!r}: rank {arr.ndim} too large")
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(struct.pack("<BB", code, arr.ndim))
        for d in arr.shape:
            chunks.append(struct.pack("<I", d))
        chunks.append(arr.astype(np.dtype(dt).newbyteorder("<"), copy=False).tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    tmp.replace(path)


def load_arrays(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(raw):
        if pos + 4 > len(raw):
            raise CheckpointError(f"{path}: truncated record header at byte {pos}")
        (nlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        if pos + 2 > len(raw):
            raise CheckpointError(f"{path}: truncated record {name!r}")
        code, rank = struct.unpack_from("<BB", raw, pos)
        pos += 2
        if code not in _CODE_DTYPES:
            raise CheckpointError(f"{path}: record {name!r} has unknown dtype code {code}")
        dims = struct.unpack_from(f"<{rank}I", raw, pos) if rank else ()
        pos += 4 * rank
        dt = _CODE_DTYPES[code]
        count = 1
        for d in dims:
            count *= d
        nbytes = count * dt.itemsize
        if pos + nbytes > len(raw):
            raise CheckpointError(f"{path}: record {name!r} payload truncated")
        if name in out:
            raise CheckpointError(f"{path}: duplicate record {name!r}")
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=pos).reshape(dims)
        out[name] = arr.copy()
        pos += nbytes
    return out
