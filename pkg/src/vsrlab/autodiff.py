"""Tape-based reverse-mode differentiation over the tensor primitives.

A Tape records one forward pass as a topologically ordered node list;
backward() walks it in reverse and accumulates gradients into the named
leaves. Ops are exposed as functions (conv2d, relu, add, ...) that accept
either Nodes or plain numpy arrays: plain arrays are treated as constants
and receive no gradient, so fixed filter kernels and flow fields stay
outside the differentiated graph. Values are computed eagerly with the
same tensor_ops code used at inference, so forward parity is bit-exact.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import tensor_ops as T

Array = np.ndarray


class Node:
    """One recorded value: result of a primitive, or a named leaf."""

    __slots__ = ("tape", "value", "op", "parents", "grad", "name", "_bwd")

    def __init__(self, tape, value, op, parents, name=None, bwd=None):
        self.tape = tape
        self.value = value
        self.op = op
        self.parents = parents
        self.grad = None
        self.name = name
        self._bwd = bwd

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Node(op={self.op!r}, shape={self.value.shape}, name={self.name!r})"


class Tape:
    """Topologically ordered record of one forward pass."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def leaf(self, value, name: str | None = None) -> Node:
        node = Node(self, np.asarray(value), "leaf", [], name=name)
        self.nodes.append(node)
        return node

    def record(self, op: str, inputs, **params) -> Node:
        """Run a registered primitive forward and register its backward rule."""
        if op not in _REGISTRY:
            raise ValueError(f"unknown primitive {op!r}")
        fwd, bwd = _REGISTRY[op]
        values = [i.value if isinstance(i, Node) else np.asarray(i) for i in inputs]
        parents = [i if isinstance(i, Node) else None for i in inputs]
        for p in parents:
            if p is not None and p.tape is not self:
                raise ValueError(f"{op}: input node belongs to a different tape")
        out = fwd(*values, **params)
        if not np.isfinite(out).all():
            raise FloatingPointError(f"{op}: non-finite values in output")
        needs = [p is not None for p in parents]

        def _bwd(g, values=values, out=out, needs=needs, params=params, bwd=bwd):
            return bwd(g, values, out, needs, **params)

        node = Node(self, out, op, parents, bwd=_bwd)
        self.nodes.append(node)
        return node


def backward(loss: Node) -> dict[str, Array]:
    """Reverse-accumulate d(loss)/d(leaf) for every named leaf on the tape.

    The loss must be a single scalar. Unused leaves get zero gradients.
    """
    if not isinstance(loss, Node):
        raise TypeError("backward expects a Node")
    if np.size(loss.value) != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.value.shape}")
    tape = loss.tape
    for node in tape.nodes:
        node.grad = None
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is None or node._bwd is None:
            continue
        grads = node._bwd(node.grad)
        for parent, g in zip(node.parents, grads):
            if parent is None or g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g
    return {
        node.name: (node.grad if node.grad is not None
                    else np.zeros_like(node.value))
        for node in tape.nodes if node.op == "leaf" and node.name is not None
    }


# ---------------------------------------------------------------------------
# primitive registry
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, tuple[Callable, Callable]] = {}


def _register(name):
    def deco(pair):
        _REGISTRY[name] = pair()
        return pair
    return deco


def _unbroadcast(g: Array, shape) -> Array:
    """Sum g down to `shape` (adjoint of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


@_register("add")
def _op_add():
    def fwd(a, b):
        return a + b

    def bwd(g, values, out, needs):
        a, b = values
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(g, b.shape) if needs[1] else None)
    return fwd, bwd


@_register("sub")
def _op_sub():
    def fwd(a, b):
        return a - b

    def bwd(g, values, out, needs):
        a, b = values
        return (_unbroadcast(g, a.shape) if needs[0] else None,
                _unbroadcast(-g, b.shape) if needs[1] else None)
    return fwd, bwd


@_register("mul")
def _op_mul():
    def fwd(a, b):
        return a * b

    def bwd(g, values, out, needs):
        a, b = values
        return (_unbroadcast(g * b, a.shape) if needs[0] else None,
                _unbroadcast(g * a, b.shape) if needs[1] else None)
    return fwd, bwd


@_register("scale")
def _op_scale():
    def fwd(a, factor):
        return a * a.dtype.type(factor)

    def bwd(g, values, out, needs, factor):
        return (g * g.dtype.type(factor),)
    return fwd, bwd


@_register("relu")
def _op_relu():
    def fwd(a):
        return np.maximum(a, 0)

    def bwd(g, values, out, needs):
        return (g * (values[0] > 0),)
    return fwd, bwd


@_register("abs")
def _op_abs():
    def fwd(a):
        return np.abs(a)

    def bwd(g, values, out, needs):
        # subgradient 0 at ties
        return (g * np.sign(values[0]),)
    return fwd, bwd


@_register("clamp01")
def _op_clamp01():
    def fwd(a):
        return T.clamp01(a)

    def bwd(g, values, out, needs):
        a = values[0]
        return (g * ((a >= 0) & (a <= 1)),)
    return fwd, bwd


@_register("conv2d")
def _op_conv2d():
    def fwd(x, k, padding=0, pad_mode=T.PAD_ZERO, stride=1):
        return T.conv2d(x, k, padding=padding, pad_mode=pad_mode, stride=stride)

    def bwd(g, values, out, needs, padding=0, pad_mode=T.PAD_ZERO, stride=1):
        x, k = values
        gx = _conv2d_input_grad(g, x.shape, k, padding, pad_mode, stride) \
            if needs[0] else None
        gk = _conv2d_kernel_grad(g, x, k.shape, padding, pad_mode, stride) \
            if needs[1] else None
        return gx, gk
    return fwd, bwd


def _dilate(g: Array, stride: int, rows: int, cols: int) -> Array:
    """Insert stride-1 zeros between gradient samples, padded up to rows x cols."""
    o, gh, gw = g.shape
    out = np.zeros((o, rows, cols), dtype=g.dtype)
    out[:, :(gh - 1) * stride + 1:stride, :(gw - 1) * stride + 1:stride] = g
    return out


def _conv2d_input_grad(g, x_shape, k, padding, pad_mode, stride):
    c, h, w = x_shape
    kh, kw = k.shape[2], k.shape[3]
    # full correlation of the (dilated) output grad with the flipped kernel
    # yields the padded-input gradient of size (C, H + 2p, W + 2p)
    if stride > 1:
        g = _dilate(g, stride, h + 2 * padding - kh + 1, w + 2 * padding - kw + 1)
    kt = np.ascontiguousarray(k.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    gxp = T.conv2d(g, kt, padding=kh - 1, pad_mode=T.PAD_ZERO)
    if pad_mode == T.PAD_REPLICATE:
        return T.fold_padding(gxp, h, w, padding, padding)
    return np.ascontiguousarray(gxp[:, padding:padding + h, padding:padding + w])


def _conv2d_kernel_grad(g, x, k_shape, padding, pad_mode, stride):
    patches = T._window_view(x, k_shape[2], k_shape[3], padding, padding,
                             pad_mode, stride)
    return np.tensordot(g, patches, axes=([1, 2], [1, 2]))


@_register("filter2d")
def _op_filter2d():
    def fwd(x, k2, pad_mode=T.PAD_REPLICATE):
        return T.filter2d(x, k2, pad_mode=pad_mode)

    def bwd(g, values, out, needs, pad_mode=T.PAD_REPLICATE):
        if not needs[0]:
            return None, None
        x, k2 = values
        kh, kw = k2.shape
        ph, pw = (kh - 1) // 2, (kw - 1) // 2
        h, w = x.shape[1], x.shape[2]
        # full correlation with the flipped kernel gives the padded-input grad
        gp = T._padded(g, kh - 1, kw - 1, T.PAD_ZERO)
        flipped = k2[::-1, ::-1].astype(g.dtype)
        gxp = np.zeros((x.shape[0], h + 2 * ph, w + 2 * pw), dtype=g.dtype)
        for u in range(kh):
            for v in range(kw):
                gxp += flipped[u, v] * gp[:, u:u + h + 2 * ph, v:v + w + 2 * pw]
        if pad_mode == T.PAD_REPLICATE:
            return T.fold_padding(gxp, h, w, ph, pw), None
        return np.ascontiguousarray(gxp[:, ph:ph + h, pw:pw + w]), None
    return fwd, bwd


@_register("concat")
def _op_concat():
    def fwd(*parts):
        return T.concat_many(parts)

    def bwd(g, values, out, needs):
        grads = []
        offset = 0
        for v, need in zip(values, needs):
            c = v.shape[0]
            grads.append(np.ascontiguousarray(g[offset:offset + c]) if need else None)
            offset += c
        return tuple(grads)
    return fwd, bwd


@_register("slice_channels")
def _op_slice_channels():
    def fwd(x, start, stop):
        return T.slice_channels(x, start, stop)

    def bwd(g, values, out, needs, start, stop):
        gx = np.zeros_like(values[0])
        gx[start:stop] = g
        return (gx,)
    return fwd, bwd


@_register("pixel_shuffle")
def _op_pixel_shuffle():
    def fwd(x, r):
        return T.pixel_shuffle(x, r)

    def bwd(g, values, out, needs, r):
        return (T.pixel_unshuffle(g, r),)
    return fwd, bwd


@_register("pixel_unshuffle")
def _op_pixel_unshuffle():
    def fwd(x, r):
        return T.pixel_unshuffle(x, r)

    def bwd(g, values, out, needs, r):
        return (T.pixel_shuffle(g, r),)
    return fwd, bwd


@_register("bilinear_resize")
def _op_bilinear_resize():
    def fwd(x, scale):
        return T.bilinear_resize(x, scale)

    def bwd(g, values, out, needs, scale):
        x = values[0]
        _, h, w = x.shape
        oh, ow = g.shape[1], g.shape[2]
        ys = T.resize_coords(h, oh, scale, x.dtype)
        xs = T.resize_coords(w, ow, scale, x.dtype)
        py = np.broadcast_to(np.clip(ys, 0, h - 1)[:, None], (oh, ow))
        px = np.broadcast_to(np.clip(xs, 0, w - 1)[None, :], (oh, ow))
        _, coords = T._bilinear_gather(x, py, px)
        return (T.bilinear_scatter(g, coords, h, w),)
    return fwd, bwd


@_register("backward_warp")
def _op_backward_warp():
    def fwd(x, flow):
        return T.backward_warp(x, flow)

    def bwd(g, values, out, needs):
        # differentiable w.r.t. the sampled tensor only; flow is a constant
        x, flow = values
        _, h, w = x.shape
        gy, gx = np.meshgrid(np.arange(h, dtype=x.dtype),
                             np.arange(w, dtype=x.dtype), indexing="ij")
        _, coords = T._bilinear_gather(x, gy + flow[1], gx + flow[0])
        return (T.bilinear_scatter(g, coords, h, w), None)
    return fwd, bwd


@_register("softmax")
def _op_softmax():
    def fwd(x, axis):
        return T.softmax_over_axis(x, axis)

    def bwd(g, values, out, needs, axis):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)
    return fwd, bwd


@_register("sum_axis")
def _op_sum_axis():
    def fwd(x, axis, keepdims=True):
        return x.sum(axis=axis, keepdims=keepdims)

    def bwd(g, values, out, needs, axis, keepdims=True):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, values[0].shape).copy(),)
    return fwd, bwd


@_register("sum_all")
def _op_sum_all():
    def fwd(x):
        return np.asarray(x.sum())

    def bwd(g, values, out, needs):
        return (np.full_like(values[0], g),)
    return fwd, bwd


@_register("mean_all")
def _op_mean_all():
    def fwd(x):
        return np.asarray(x.mean())

    def bwd(g, values, out, needs):
        x = values[0]
        return (np.full_like(x, g / x.size),)
    return fwd, bwd


# ---------------------------------------------------------------------------
# dispatching functional surface (Node in -> Node out, arrays stay arrays)
# ---------------------------------------------------------------------------

def _dispatch(op, inputs, **params):
    tape = next((i.tape for i in inputs if isinstance(i, Node)), None)
    if tape is None:
        fwd, _ = _REGISTRY[op]
        return fwd(*[np.asarray(i) for i in inputs], **params)
    return tape.record(op, inputs, **params)


def add(a, b):
    return _dispatch("add", [a, b])


def sub(a, b):
    return _dispatch("sub", [a, b])


def mul(a, b):
    return _dispatch("mul", [a, b])


def scale(a, factor: float):
    return _dispatch("scale", [a], factor=float(factor))


def relu(a):
    return _dispatch("relu", [a])


def absolute(a):
    return _dispatch("abs", [a])


def clamp01(a):
    return _dispatch("clamp01", [a])


def conv2d(x, kernel, padding=0, pad_mode=T.PAD_ZERO, stride=1):
    return _dispatch("conv2d", [x, kernel], padding=padding,
                     pad_mode=pad_mode, stride=stride)


def filter2d(x, kernel2d, pad_mode=T.PAD_REPLICATE):
    return _dispatch("filter2d", [x, kernel2d], pad_mode=pad_mode)


def concat(parts):
    return _dispatch("concat", list(parts))


def concat_channels(a, b):
    return _dispatch("concat", [a, b])


def slice_channels(x, start, stop):
    return _dispatch("slice_channels", [x], start=start, stop=stop)


def pixel_shuffle(x, r):
    return _dispatch("pixel_shuffle", [x], r=r)


def bilinear_resize(x, scale_factor):
    return _dispatch("bilinear_resize", [x], scale=float(scale_factor))


def backward_warp(x, flow):
    return _dispatch("backward_warp", [x, flow])


def softmax_over_axis(x, axis):
    return _dispatch("softmax", [x], axis=axis)


def sum_axis(x, axis, keepdims=True):
    return _dispatch("sum_axis", [x], axis=axis, keepdims=keepdims)


def sum_all(x):
    return _dispatch("sum_all", [x])


def mean_all(x):
    return _dispatch("mean_all", [x])


def value_of(x) -> Array:
    return x.value if isinstance(x, Node) else np.asarray(x)


# ---------------------------------------------------------------------------
# numeric verification
# ---------------------------------------------------------------------------

def grad_check(build_fn, leaves: dict[str, Array], epsilon: float = 1e-6) -> float:
    """Compare analytic gradients against central finite differences.

    build_fn receives a dict of leaf-name -> Node and must return a scalar
    loss Node. The whole check runs in a float64 shadow pass so epsilon can
    be small. Returns max over all leaf coordinates of
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    base = {k: np.asarray(v, dtype=np.float64) for k, v in leaves.items()}

    def run(vals) -> float:
        tape = Tape()
        nodes = {k: tape.leaf(v, k) for k, v in vals.items()}
        return build_fn(nodes)

    loss = run(base)
    if not isinstance(loss, Node):
        raise TypeError("build_fn must return a Node")
    analytic = backward(loss)

    worst = 0.0
    for name, arr in base.items():
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            bumped = dict(base)
            up = arr.copy()
            up[idx] += epsilon
            bumped[name] = up
            f_up = float(run(bumped).value)
            down = arr.copy()
            down[idx] -= epsilon
            bumped[name] = down
            f_down = float(run(bumped).value)
            numeric[idx] = (f_up - f_down) / (2.0 * epsilon)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        worst = max(worst, float((np.abs(a - numeric) / denom).max()))
    return worst
