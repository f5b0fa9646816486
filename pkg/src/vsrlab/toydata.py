"""Toy clip generator: moving geometric shapes over textured backgrounds.

HR clips are rendered at lr_size * scale, written as PPM, then pushed
through the degradation pipeline (one parameter set per clip) to produce
the paired LR frames. The corpus is small enough for desk-scale training
yet has the structure the model needs: sharp edges, texture, and motion.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import tensor_ops as T
from .degradation import ClipManifest, degrade_frame, sample_params
from .frame_io import read_frame, write_frame
from .trainer import Clip
from .util import read_kv, substream, write_kv


def _textured_background(rng, size: int) -> np.ndarray:
    # low-contrast texture: visible structure, but the unrecoverable detail
    # it loses at 4x downsampling stays a small share of the total error
    coarse = rng.uniform(0.35, 0.65, size=(3, max(2, size // 8),
                                           max(2, size // 8))).astype(np.float32)
    bg = T.bilinear_resize(coarse, size / coarse.shape[1])
    return np.clip(bg[:, :size, :size], 0.0, 1.0)


def render_clip(rng: np.random.Generator, frames: int, size: int) -> list:
    """Render one HR clip: static textured background + 2-4 moving shapes."""
    bg = _textured_background(rng, size)
    n_shapes = int(rng.integers(3, 6))
    shapes = []
    for _ in range(n_shapes):
        kind = "circle" if rng.random() < 0.5 else "rect"
        color = rng.uniform(0.0, 1.0, size=3).astype(np.float32)
        cx, cy = rng.uniform(0, size, size=2)
        vx, vy = rng.uniform(-size / 20, size / 20, size=2)
        # large flat shapes: their interiors restore cleanly, their long
        # edges carry the structure super-resolution can actually recover
        radius = rng.uniform(size / 8, size / 3)
        shapes.append((kind, color, cx, cy, vx, vy, radius))

    yy, xx = np.meshgrid(np.arange(size, dtype=np.float32),
                         np.arange(size, dtype=np.float32), indexing="ij")
    clip = []
    for t in range(frames):
        frame = bg.copy()
        for kind, color, cx, cy, vx, vy, radius in shapes:
            px = (cx + vx * t) % size
            py = (cy + vy * t) % size
            # wrap-around distance keeps shapes whole across the border
            dx = np.minimum(np.abs(xx - px), size - np.abs(xx - px))
            dy = np.minimum(np.abs(yy - py), size - np.abs(yy - py))
            if kind == "circle":
                mask = dx * dx + dy * dy <= radius * radius
            else:
                mask = (dx <= radius) & (dy <= radius * 0.7)
            frame[:, mask] = color[:, None]
        clip.append(frame)
    return clip


def make_toy_data(out_dir, seed: int = 0, clips: int = 8, frames: int = 5,
                  lr_size: int = 16, scale: int = 4,
                  val_clips: int = 1) -> dict:
    """Write the paired toy corpus; returns {split: [clip dirs]}."""
    out_dir = Path(out_dir)
    written: dict = {}
    for split, count, label in (("train", clips, "toy/train"),
                                ("val", val_clips, "toy/val")):
        written[split] = []
        for i in range(count):
            rng = substream(seed, label, i)
            hr = render_clip(rng, frames, lr_size * scale)
            params = sample_params(substream(seed, label + "/params", i),
                                   r=scale)
            clip_dir = out_dir / split / f"clip_{i:03d}"
            (clip_dir / "hr").mkdir(parents=True, exist_ok=True)
            (clip_dir / "lr").mkdir(parents=True, exist_ok=True)
            names = []
            for t, frame in enumerate(hr):
                name = f"f_{t + 1:06d}.ppm"
                write_frame(frame, clip_dir / "hr" / name)
                # degrade exactly what training will read back: the 8-bit HR
                stored = read_frame(clip_dir / "hr" / name)
                write_frame(degrade_frame(stored, params, t),
                            clip_dir / "lr" / name)
                names.append(name)
            manifest = ClipManifest(f"{split}/clip_{i:03d}", params, names)
            write_kv(clip_dir / "manifest.txt", manifest.to_kv())
            written[split].append(clip_dir)
    return written


def load_clip(clip_dir) -> Clip:
    clip_dir = Path(clip_dir)
    manifest = ClipManifest.from_kv(read_kv(clip_dir / "manifest.txt"))
    lr = [read_frame(clip_dir / "lr" / n) for n in manifest.files]
    hr = [read_frame(clip_dir / "hr" / n) for n in manifest.files]
    return Clip(lr, hr, manifest.clip_id)


def load_dataset(data_dir, split: str = "train") -> list[Clip]:
    root = Path(data_dir) / split
    dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not dirs:
        raise FileNotFoundError(f"no clips under {root}")
    return [load_clip(d) for d in dirs]
