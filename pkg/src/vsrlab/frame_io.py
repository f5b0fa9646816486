"""Binary PPM (P6) / PGM (P5) frame I/O with exact 8-bit round trips.

Pixels map to [0, 1] via /255 on read and round half away from zero on
write, so write(read(x)) reproduces the original bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _read_header_token(f) -> bytes:
    # netpbm tokens are separated by whitespace; '#' starts a comment
    token = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise ValueError("truncated header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_frame(path) -> np.ndarray:
    """Read a P6 (3,H,W) or P5 (1,H,W) image as float32 in [0, 1]."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic not in (b"P6", b"P5"):
            raise ValueError(f"{path}: unsupported magic {magic!r}")
        width = int(_read_header_token(f))
        height = int(_read_header_token(f))
        maxval = int(_read_header_token(f))
        if maxval != 255:
            raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
        channels = 3 if magic == b"P6" else 1
        payload = f.read(width * height * channels)
        if len(payload) != width * height * channels:
            raise ValueError(f"{path}: truncated payload "
                             f"({len(payload)} of {width * height * channels} bytes)")
    data = np.frombuffer(payload, dtype=np.uint8)
    img = data.reshape(height, width, channels).transpose(2, 0, 1)
    return (img.astype(np.float32) / 255.0)


def write_frame(tensor: np.ndarray, path) -> None:
    """Write a (3,H,W) tensor as P6 or a (1,H,W)/(H,W) tensor as P5."""
    x = np.asarray(tensor)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ValueError(f"write_frame: expected (1|3, H, W), got {x.shape}")
    # round half away from zero; inputs are non-negative after the clip
    q = np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    c, h, w = q.shape
    magic = b"P6" if c == 3 else b"P5"
    header = magic + f"\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + q.transpose(1, 2, 0).tobytes())


def read_frame_dir(dirpath, pattern: str = "*.ppm") -> tuple[list, list]:
    """Read all frames in a directory, sorted by name. Returns (frames, names)."""
    paths = sorted(Path(dirpath).glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no {pattern} frames in {dirpath}")
    return [read_frame(p) for p in paths], [p.name for p in paths]
