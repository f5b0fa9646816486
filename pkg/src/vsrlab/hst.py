"""Binary tensor format "HST1" and the multi-tensor bundle built on it.

A single tensor record is: 4-byte magic b"HST1", one byte rank, rank
little-endian uint32 dims, then the raw little-endian float32 payload.
Bundles (model checkpoints) prepend a JSON header listing metadata and
tensor names, followed by one HST1 record per name.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HST1"
BUNDLE_MAGIC = b"HSTB"


def write_tensor(f, arr: np.ndarray) -> None:
    """Write one HST1 record to a binary file object."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    if arr.ndim > 255:
        raise ValueError(f"rank {arr.ndim} exceeds format limit")
    f.write(MAGIC)
    f.write(struct.pack("B", arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.tobytes())


def read_tensor(f) -> np.ndarray:
    """Read one HST1 record from a binary file object."""
    magic = f.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}, expected {MAGIC!r}")
    (rank,) = struct.unpack("B", f.read(1))
    dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
    count = 1
    for d in dims:
        count *= d
    payload = f.read(4 * count)
    if len(payload) != 4 * count:
        raise ValueError(f"truncated tensor payload: wanted {4 * count} bytes, "
                         f"got {len(payload)}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def save_tensor(path, arr: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        write_tensor(f, arr)
    os.replace(tmp, path)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor(f)


def bundle_bytes(meta: dict, tensors: dict[str, np.ndarray]) -> bytes:
    """Serialize a named-tensor bundle with a JSON metadata header."""
    header = dict(meta)
    header["tensors"] = list(tensors.keys())
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [BUNDLE_MAGIC, struct.pack("<I", len(blob)), blob]
    import io

    for name in tensors:
        buf = io.BytesIO()
        write_tensor(buf, tensors[name])
        parts.append(buf.getvalue())
    return b"".join(parts)


def read_bundle_bytes(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    import io

    f = io.BytesIO(data)
    magic = f.read(4)
    if magic != BUNDLE_MAGIC:
        raise ValueError(f"bad bundle magic {magic!r}, expected {BUNDLE_MAGIC!r}")
    (hlen,) = struct.unpack("<I", f.read(4))
    header = json.loads(f.read(hlen).decode("utf-8"))
    names = header.pop("tensors")
    tensors = {name: read_tensor(f) for name in names}
    return header, tensors


def save_bundle(path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(bundle_bytes(meta, tensors))
    os.replace(tmp, path)


def load_bundle(path) -> tuple[dict, dict[str, np.ndarray]]:
    return read_bundle_bytes(Path(path).read_bytes())


def bundle_hash(meta: dict, tensors: dict[str, np.ndarray]) -> str:
    return hashlib.sha256(bundle_bytes(meta, tensors)).hexdigest()
