"""Binary checkpoint container: magic "AKCK", version, then named f32 blobs."""

import struct
from typing import Dict

import numpy as np

from .errors import FormatError

MAGIC = b"AKCK"
VERSION = 1


def save_checkpoint(path: str, blobs: Dict[str, np.ndarray]):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blobs)))
        for name in sorted(blobs):
            arr = np.asarray(blobs[name], dtype="<f4")
            enc = name.encode("utf-8")
            if len(enc) > 0xFFFF:
                raise FormatError(f"blob name too long: {name[:40]}...")
            if arr.ndim > 0xFF:
                raise FormatError(f"blob rank {arr.ndim} too large for {name}")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def _take(buf: bytes, offset: int, size: int, what: str):
    end = offset + size
    if end > len(buf):
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf[offset:end], end


def load_checkpoint(path: str) -> Dict[str, np.ndarray]:
    with open(path, "rb") as f:
        buf = f.read()
    raw, off = _take(buf, 0, 4, "magic")
    if raw != MAGIC:
        raise FormatError(f"bad checkpoint magic {raw!r}")
    raw, off = _take(buf, off, 8, "header")
    version, count = struct.unpack("<II", raw)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    blobs: Dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = _take(buf, off, 2, "name length")
        (nlen,) = struct.unpack("<H", raw)
        raw, off = _take(buf, off, nlen, "name")
        name = raw.decode("utf-8")
        raw, off = _take(buf, off, 1, f"rank of {name}")
        rank = raw[0]
        dims = []
        for _ in range(rank):
            raw, off = _take(buf, off, 4, f"dims of {name}")
            dims.append(struct.unpack("<I", raw)[0])
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw, off = _take(buf, off, 4 * size, f"payload of {name}")
        blobs[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after last blob")
    return blobs
