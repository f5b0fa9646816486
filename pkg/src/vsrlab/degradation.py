"""Synthetic degradation: blur -> noise -> downsample -> block compression.

Training pairs are made by pushing clean HR frames through a Gaussian
blur, additive Gaussian noise (std on the 0..255 scale), r x r area
downsampling, and an in-process compression stand-in: per-channel 8x8
block DCT with AC-coefficient quantization whose step grows as
2^((crf - 18) / 6) times a fixed base table. The DC coefficient passes
through untouched so constant frames survive every stage exactly. One
parameter set is sampled per clip; only the noise differs per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor_ops as T
from .util import substream

SIGMA_RANGE = (0.2, 3.0)
DELTA_RANGE = (1.0, 5.0)
CRF_RANGE = (18, 35)


@dataclass(frozen=True)
class DegradationParams:
    """One sampled (sigma, delta, r, crf) tuple plus its noise seed."""

    sigma: float
    delta: float
    r: int
    crf: int | None
    seed: int = 0

    def __post_init__(self):
        if self.sigma < 0 or self.delta < 0 or self.r < 1:
            raise ValueError(f"invalid degradation params {self}")
        if self.crf is not None and not (CRF_RANGE[0] <= self.crf <= CRF_RANGE[1]):
            raise ValueError(f"crf {self.crf} outside {CRF_RANGE}")


@dataclass
class ClipManifest:
    """Reproducibility record: same manifest -> bit-identical degraded clip."""

    clip_id: str
    params: DegradationParams
    files: list[str]

    def to_kv(self) -> dict:
        p = self.params
        return {
            "clip_id": self.clip_id,
            "sigma": repr(float(p.sigma)),
            "delta": repr(float(p.delta)),
            "r": p.r,
            "crf": "off" if p.crf is None else p.crf,
            "seed": p.seed,
            "frames": " ".join(self.files),
        }

    @staticmethod
    def from_kv(kv: dict) -> "ClipManifest":
        crf = None if kv["crf"] == "off" else int(kv["crf"])
        params = DegradationParams(float(kv["sigma"]), float(kv["delta"]),
                                   int(kv["r"]), crf, int(kv["seed"]))
        return ClipManifest(kv["clip_id"], params, kv["frames"].split())


def sample_params(rng: np.random.Generator, r: int = 4,
                  seed: int | None = None) -> DegradationParams:
    """Uniform draw over the configured ranges; crf uniform over integers."""
    sigma = float(rng.uniform(*SIGMA_RANGE))
    delta = float(rng.uniform(*DELTA_RANGE))
    crf = int(rng.integers(CRF_RANGE[0], CRF_RANGE[1] + 1))
    if seed is None:
        seed = int(rng.integers(0, 2 ** 31 - 1))
    return DegradationParams(sigma, delta, r, crf, seed)


def gaussian_kernel(sigma: float, size: int | None = None) -> np.ndarray:
    """Normalized discrete Gaussian; sigma = 0 gives the delta kernel.

    Default size is 2*ceil(2*sigma) + 1 (always odd, >= 1).
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if size is None:
        size = 2 * int(np.ceil(2 * sigma)) + 1
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if sigma == 0:
        k = np.zeros((size, size), dtype=np.float64)
        k[size // 2, size // 2] = 1.0
        return k.astype(np.float32)
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma ** 2))
    return (g / g.sum()).astype(np.float32)


# ---------------------------------------------------------------------------
# compression stand-in
# ---------------------------------------------------------------------------

_BLOCK = 8

# JPEG-style luminance quantization weights rescaled to the [0, 1] pixel
# range of an orthonormal 8x8 DCT
_BASE_QUANT = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float32) / 400.0


def _dct_matrix(n: int = _BLOCK) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)
    m = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * k[None, :] + 1) * k[:, None]
                                  / (2 * n))
    m[0] /= np.sqrt(2.0)
    return m.astype(np.float32)


_DCT = _dct_matrix()


def dct2_blocks(blocks: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of a stack of (..., 8, 8) blocks."""
    return np.einsum("ij,...jk,lk->...il", _DCT, blocks, _DCT)


def idct2_blocks(coeffs: np.ndarray) -> np.ndarray:
    return np.einsum("ji,...jk,kl->...il", _DCT, coeffs, _DCT)


def compress_standin(frame: np.ndarray, crf: int) -> np.ndarray:
    """8x8 block-DCT quantization with a crf-controlled step.

    Quantization applies to AC coefficients only; DC passes through, so
    constant frames are exact fixed points. Higher crf means a coarser
    step and non-decreasing distortion.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3:
        raise ValueError(f"compress_standin: expected (C, H, W), got {frame.shape}")
    if not (CRF_RANGE[0] <= crf <= CRF_RANGE[1]):
        raise ValueError(f"crf {crf} outside {CRF_RANGE}")
    c, h, w = frame.shape
    pad_h = (-h) % _BLOCK
    pad_w = (-w) % _BLOCK
    x = np.pad(frame, ((0, 0), (0, pad_h), (0, pad_w)), mode="edge")
    hb, wb = x.shape[1] // _BLOCK, x.shape[2] // _BLOCK
    blocks = x.reshape(c, hb, _BLOCK, wb, _BLOCK).transpose(0, 1, 3, 2, 4)
    coeffs = dct2_blocks(blocks.astype(np.float32))
    step = _BASE_QUANT * np.float32(2.0 ** ((crf - CRF_RANGE[0]) / 6.0))
    dc = coeffs[..., 0, 0].copy()
    coeffs = np.round(coeffs / step) * step
    coeffs[..., 0, 0] = dc
    out = idct2_blocks(coeffs)
    out = out.transpose(0, 1, 3, 2, 4).reshape(c, hb * _BLOCK, wb * _BLOCK)
    return np.clip(out[:, :h, :w], 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def degrade_frame(frame: np.ndarray, params: DegradationParams,
                  frame_index: int = 0) -> np.ndarray:
    """Blur + noise + area downsample + compression, clamped to [0, 1].

    The noise stream is derived from (params.seed, frame_index) so frames
    of a clip are independent yet individually reproducible.
    """
    x = np.asarray(frame, dtype=np.float32)
    if x.ndim != 3 or x.shape[0] != 3:
        raise ValueError(f"degrade_frame: expected (3, H, W), got {x.shape}")
    _, h, w = x.shape
    if h % params.r or w % params.r:
        raise ValueError(f"frame dims {h}x{w} not divisible by r={params.r}")
    if params.sigma > 0:
        x = T.filter2d(x, gaussian_kernel(params.sigma))
    if params.delta > 0:
        rng = substream(params.seed, "degrade/noise", frame_index)
        noise = rng.standard_normal(x.shape, dtype=np.float32)
        x = x + noise * np.float32(params.delta / 255.0)
    if params.r > 1:
        r = params.r
        x = x.reshape(3, h // r, r, w // r, r).mean(axis=(2, 4))
    if params.crf is not None:
        x = compress_standin(np.clip(x, 0.0, 1.0), params.crf)
    return np.clip(x, 0.0, 1.0).astype(np.float32)


def degrade_sequence(frames, params: DegradationParams) -> list[np.ndarray]:
    """Degrade a clip with one shared parameter set, per-frame noise."""
    if len(frames) == 0:
        raise ValueError("degrade_sequence: empty clip")
    return [degrade_frame(f, params, i) for i, f in enumerate(frames)]
