"""Dense tensor primitives for the recurrent super-resolution pipeline.

Tensors are plain numpy arrays in channels-major (C, H, W) row-major
layout, float32 in production code (float64 is tolerated so test oracles
and gradient shadow passes can run the same code paths). Every exported
operation is pure, preserves dtype, and raises rather than returning
NaN/Inf.
"""

from __future__ import annotations

import math

import numpy as np

Array = np.ndarray

PAD_ZERO = "zero"
PAD_REPLICATE = "replicate"


def _check_finite(out: Array, op: str) -> Array:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"{op}: non-finite values in output")
    return out


def _require_chw(x: Array, op: str) -> Array:
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"{op}: expected (C, H, W) tensor, got shape {x.shape}")
    return x


def _padded(x: Array, pad_h: int, pad_w: int, pad_mode: str) -> Array:
    if pad_mode not in (PAD_ZERO, PAD_REPLICATE):
        raise ValueError(f"unknown pad_mode {pad_mode!r}")
    if pad_h == 0 and pad_w == 0:
        return x
    widths = ((0, 0), (pad_h, pad_h), (pad_w, pad_w))
    if pad_mode == PAD_ZERO:
        return np.pad(x, widths)
    return np.pad(x, widths, mode="edge")


def _window_view(x: Array, kh: int, kw: int, pad_h: int, pad_w: int,
                 pad_mode: str, stride: int):
    """Sliding (C, OH, OW, Kh, Kw) view of the padded input (no copy)."""
    c, h, w = x.shape
    oh = (h + 2 * pad_h - kh) // stride + 1
    ow = (w + 2 * pad_w - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ValueError(
            f"conv window {kh}x{kw} with padding ({pad_h},{pad_w}) does not fit "
            f"input of shape {x.shape}")
    xp = _padded(x, pad_h, pad_w, pad_mode)
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    return view[:, ::stride, ::stride]


def fold_padding(gxp: Array, h: int, w: int, pad_h: int, pad_w: int) -> Array:
    """Adjoint of edge-replicate padding: fold margin rows/cols onto the edges."""
    a = gxp[:, pad_h:pad_h + h, :].copy()
    if pad_h:
        a[:, 0, :] += gxp[:, :pad_h, :].sum(axis=1)
        a[:, h - 1, :] += gxp[:, pad_h + h:, :].sum(axis=1)
    out = a[:, :, pad_w:pad_w + w].copy()
    if pad_w:
        out[:, :, 0] += a[:, :, :pad_w].sum(axis=2)
        out[:, :, w - 1] += a[:, :, pad_w + w:].sum(axis=2)
    return out


def conv2d(x: Array, kernel: Array, padding: int = 0, pad_mode: str = PAD_ZERO,
           stride: int = 1) -> Array:
    """Cross-correlate x (C,H,W) with kernel (O,C,Kh,Kw) -> (O,H',W').

    H' = floor((H + 2*padding - Kh)/stride) + 1. No kernel flip.
    """
    x = _require_chw(x, "conv2d")
    kernel = np.asarray(kernel)
    if kernel.ndim != 4:
        raise ValueError(f"conv2d: expected (O, C, Kh, Kw) kernel, got {kernel.shape}")
    if kernel.shape[1] != x.shape[0]:
        raise ValueError(
            f"conv2d: kernel {kernel.shape} expects {kernel.shape[1]} input "
            f"channels but input has shape {x.shape}")
    if stride < 1:
        raise ValueError(f"conv2d: stride must be >= 1, got {stride}")
    patches = _window_view(x, kernel.shape[2], kernel.shape[3],
                           padding, padding, pad_mode, stride)
    out = np.tensordot(kernel.astype(x.dtype, copy=False), patches,
                       axes=([1, 2, 3], [0, 3, 4]))
    return _check_finite(np.ascontiguousarray(out), "conv2d")


def filter2d(x: Array, kernel2d: Array, pad_mode: str = PAD_REPLICATE) -> Array:
    """Depthwise same-size filtering: one (Kh,Kw) kernel applied per channel."""
    x = _require_chw(x, "filter2d")
    kernel2d = np.asarray(kernel2d)
    if kernel2d.ndim != 2:
        raise ValueError(f"filter2d: expected 2-D kernel, got {kernel2d.shape}")
    kh, kw = kernel2d.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"filter2d: kernel dims must be odd, got {kernel2d.shape}")
    _, h, w = x.shape
    xp = _padded(x, (kh - 1) // 2, (kw - 1) // 2, pad_mode)
    k = kernel2d.astype(x.dtype, copy=False)
    out = np.zeros_like(x)
    for u in range(kh):
        for v in range(kw):
            out += k[u, v] * xp[:, u:u + h, v:v + w]
    return _check_finite(out, "filter2d")


def softmax_over_axis(x: Array, axis: int) -> Array:
    """Numerically stable softmax (max subtraction) along one axis."""
    x = np.asarray(x)
    if x.shape[axis] == 0:
        raise ValueError(f"softmax_over_axis: empty axis {axis} in shape {x.shape}")
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _check_finite(out, "softmax_over_axis")


def _bilinear_gather(x: Array, py: Array, px: Array):
    """Sample x (C,H,W) at float coords (py, px), edge-clamped.

    Returns the sampled (C,) + py.shape array plus the index/weight grids
    needed by the adjoint scatter.
    """
    _, h, w = x.shape
    py = np.clip(py, 0.0, h - 1.0)
    px = np.clip(px, 0.0, w - 1.0)
    y0 = np.floor(py).astype(np.intp)
    x0 = np.floor(px).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (py - y0).astype(x.dtype)
    wx = (px - x0).astype(x.dtype)
    top = x[:, y0, x0] * (1 - wx) + x[:, y0, x1] * wx
    bot = x[:, y1, x0] * (1 - wx) + x[:, y1, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out, (y0, y1, x0, x1, wy, wx)


def bilinear_scatter(g: Array, coords, h: int, w: int) -> Array:
    """Adjoint of _bilinear_gather: scatter-add gradient to source pixels."""
    y0, y1, x0, x1, wy, wx = coords
    c = g.shape[0]
    gx = np.zeros((h * w, c), dtype=g.dtype)
    gflat = g.reshape(c, -1).T
    wyf = wy.ravel()[:, None]
    wxf = wx.ravel()[:, None]
    np.add.at(gx, (y0.ravel() * w + x0.ravel()), gflat * (1 - wyf) * (1 - wxf))
    np.add.at(gx, (y0.ravel() * w + x1.ravel()), gflat * (1 - wyf) * wxf)
    np.add.at(gx, (y1.ravel() * w + x0.ravel()), gflat * wyf * (1 - wxf))
    np.add.at(gx, (y1.ravel() * w + x1.ravel()), gflat * wyf * wxf)
    return gx.T.reshape(c, h, w)


def resize_coords(n_in: int, n_out: int, scale: float, dtype) -> Array:
    # align_corners=false convention: pixel centers at (i + 0.5) / scale - 0.5
    half = np.dtype(dtype).type(0.5)
    s = np.dtype(dtype).type(scale)
    return ((np.arange(n_out, dtype=dtype) + half) / s) - half


def bilinear_resize(x: Array, scale: float) -> Array:
    """Resize (C,H,W) by a positive scale factor, align-corners=false."""
    x = _require_chw(x, "bilinear_resize")
    if scale <= 0:
        raise ValueError(f"bilinear_resize: scale must be positive, got {scale}")
    _, h, w = x.shape
    oh = int(math.floor(h * scale + 1e-9))
    ow = int(math.floor(w * scale + 1e-9))
    if oh < 1 or ow < 1:
        raise ValueError(
            f"bilinear_resize: output would be {oh}x{ow} for input {x.shape} "
            f"at scale {scale}")
    ys = resize_coords(h, oh, scale, x.dtype)
    xs = resize_coords(w, ow, scale, x.dtype)
    py = np.broadcast_to(ys[:, None], (oh, ow))
    px = np.broadcast_to(xs[None, :], (oh, ow))
    out, _ = _bilinear_gather(x, py, px)
    return _check_finite(np.ascontiguousarray(out), "bilinear_resize")


def backward_warp(x: Array, flow: Array) -> Array:
    """Sample x at p + flow(p): output(p) = x(px + dx, py + dy), edge-clamped.

    flow is (2, H, W) with channel 0 = dx (columns), channel 1 = dy (rows).
    """
    x = _require_chw(x, "backward_warp")
    flow = np.asarray(flow)
    if flow.shape != (2,) + x.shape[1:]:
        raise ValueError(
            f"backward_warp: flow shape {flow.shape} does not match input "
            f"{x.shape} (expected (2, H, W))")
    _, h, w = x.shape
    gy, gx = np.meshgrid(np.arange(h, dtype=x.dtype),
                         np.arange(w, dtype=x.dtype), indexing="ij")
    out, _ = _bilinear_gather(x, gy + flow[1], gx + flow[0])
    return _check_finite(np.ascontiguousarray(out), "backward_warp")


def pixel_shuffle(x: Array, r: int) -> Array:
    """Rearrange (C*r*r, H, W) -> (C, r*H, r*W) sub-pixel upsampling."""
    x = _require_chw(x, "pixel_shuffle")
    c2, h, w = x.shape
    if r < 1 or c2 % (r * r) != 0:
        raise ValueError(
            f"pixel_shuffle: channel count {c2} not divisible by r^2 = {r * r}")
    c = c2 // (r * r)
    out = x.reshape(c, r, r, h, w).transpose(0, 3, 1, 4, 2).reshape(c, h * r, w * r)
    return np.ascontiguousarray(out)


def pixel_unshuffle(x: Array, r: int) -> Array:
    """Inverse of pixel_shuffle: (C, r*H, r*W) -> (C*r*r, H, W)."""
    x = _require_chw(x, "pixel_unshuffle")
    c, hh, ww = x.shape
    if r < 1 or hh % r != 0 or ww % r != 0:
        raise ValueError(
            f"pixel_unshuffle: spatial dims of {x.shape} not divisible by r = {r}")
    h, w = hh // r, ww // r
    out = x.reshape(c, h, r, w, r).transpose(0, 2, 4, 1, 3).reshape(c * r * r, h, w)
    return np.ascontiguousarray(out)


def concat_channels(a: Array, b: Array) -> Array:
    """Concatenate along the channel axis; a's channels precede b's."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[1:] != b.shape[1:]:
        raise ValueError(
            f"concat_channels: spatial dims must match, got {a.shape} and {b.shape}")
    return np.concatenate([a, b], axis=0)


def concat_many(parts) -> Array:
    """n-ary channel concatenation with the same contract as concat_channels."""
    parts = [np.asarray(p) for p in parts]
    if not parts:
        raise ValueError("concat_many: no tensors given")
    base = parts[0].shape[1:]
    for p in parts:
        if p.ndim != 3 or p.shape[1:] != base:
            raise ValueError(
                f"concat_many: spatial dims must match, got "
                f"{[p.shape for p in parts]}")
    return np.concatenate(parts, axis=0)


def slice_channels(x: Array, start: int, stop: int) -> Array:
    x = _require_chw(x, "slice_channels")
    if not (0 <= start <= stop <= x.shape[0]):
        raise ValueError(
            f"slice_channels: [{start}:{stop}] out of range for shape {x.shape}")
    return x[start:stop]


def clamp01(x: Array) -> Array:
    return np.clip(x, 0.0, 1.0)
