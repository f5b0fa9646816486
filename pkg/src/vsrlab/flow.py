"""Optical-flow substitutes for aligning the propagated hidden state.

Two providers: "zero" (no motion) and "block" (per-block integer
displacement minimizing the sum of absolute differences over a search
radius, broadcast to per-pixel). Flow fields are (2, H, W): channel 0 is
dx (columns), channel 1 is dy (rows); backward_warp(prev, flow) then pulls
prev toward the current frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROVIDERS = ("zero", "block")


@dataclass(frozen=True)
class FlowConfig:
    provider: str = "block"
    block_size: int = 8
    radius: int = 4

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValueError(f"unknown flow provider {self.provider!r}; "
                             f"choose from {PROVIDERS}")
        if self.block_size < 1 or self.radius < 0:
            raise ValueError("block_size must be >= 1 and radius >= 0")


def estimate_flow(prev: np.ndarray, cur: np.ndarray,
                  cfg: FlowConfig = FlowConfig()) -> np.ndarray:
    """Displacement field mapping current-frame pixels into the previous frame."""
    prev = np.asarray(prev)
    cur = np.asarray(cur)
    if prev.shape != cur.shape or prev.ndim != 3:
        raise ValueError(f"estimate_flow: frame shapes differ, "
                         f"{prev.shape} vs {cur.shape}")
    h, w = prev.shape[1], prev.shape[2]
    if cfg.provider == "zero":
        return np.zeros((2, h, w), dtype=np.float32)
    return _block_matching(prev, cur, cfg)


def _block_matching(prev, cur, cfg: FlowConfig) -> np.ndarray:
    h, w = prev.shape[1], prev.shape[2]
    r, bs = cfg.radius, cfg.block_size
    prev_g = prev.mean(axis=0)
    cur_g = cur.mean(axis=0)
    prev_pad = np.pad(prev_g, r, mode="edge")

    # candidate displacements ordered center-out so SAD ties resolve to the
    # smallest motion (identical frames -> zero flow)
    cands = sorted(((dy, dx) for dy in range(-r, r + 1)
                    for dx in range(-r, r + 1)),
                   key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]))

    y_edges = list(range(0, h, bs))
    x_edges = list(range(0, w, bs))
    n_by, n_bx = len(y_edges), len(x_edges)
    best_sad = np.full((n_by, n_bx), np.inf)
    best_dy = np.zeros((n_by, n_bx), dtype=np.float32)
    best_dx = np.zeros((n_by, n_bx), dtype=np.float32)

    for dy, dx in cands:
        shifted = prev_pad[r + dy:r + dy + h, r + dx:r + dx + w]
        diff = np.abs(cur_g - shifted)
        sad = np.add.reduceat(np.add.reduceat(diff, y_edges, axis=0),
                              x_edges, axis=1)
        better = sad < best_sad - 1e-12
        best_sad = np.where(better, sad, best_sad)
        best_dy = np.where(better, np.float32(dy), best_dy)
        best_dx = np.where(better, np.float32(dx), best_dx)

    flow = np.empty((2, h, w), dtype=np.float32)
    flow[0] = np.repeat(np.repeat(best_dx, bs, axis=0), bs, axis=1)[:h, :w]
    flow[1] = np.repeat(np.repeat(best_dy, bs, axis=0), bs, axis=1)[:h, :w]
    return flow
