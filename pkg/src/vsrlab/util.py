"""Shared plumbing: seeded random substreams, key-value files, atomic writes."""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np

_U64 = (1 << 64) - 1


def substream(seed: int, *labels) -> np.random.Generator:
    """Derive an independent, reproducible generator from a root seed.

    Labels (strings or ints) name the stream, e.g. substream(seed,
    "degrade/noise", frame_index). The same (seed, labels) pair always
    yields the same generator state, on any platform.
    """
    entropy = [int(seed) & _U64]
    for label in labels:
        if isinstance(label, (int, np.integer)):
            entropy.append(int(label) & _U64)
        else:
            digest = hashlib.sha256(str(label).encode("utf-8")).digest()
            entropy.append(int.from_bytes(digest[:8], "little"))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def write_kv(path, pairs: dict) -> None:
    """Write a plain-text key-value file atomically (write-then-rename)."""
    path = Path(path)
    lines = [f"{k}: {v}\n" for k, v in pairs.items()]
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("".join(lines), encoding="utf-8")
    os.replace(tmp, path)


def read_kv(path) -> dict[str, str]:
    """Read a key-value file written by write_kv. '#' lines are comments."""
    out: dict[str, str] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise ValueError(f"{path}: malformed line {raw!r}")
        key, value = line.split(":", 1)
        out[key.strip()] = value.strip()
    return out
