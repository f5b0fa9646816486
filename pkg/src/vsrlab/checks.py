"""Built-in verification: the gradient suite and the stage benchmark."""

from __future__ import annotations

import time

import numpy as np

from . import autodiff as ad
from .engine import ModelWeights, RunOptions, _step_core, fuse_deep, init_weights, upsample
from .filter_bank import build_pool, default_bank
from .hsa import hsa_transform, sca_aggregate
from .trainer import l1_loss


def _sq_loss(y):
    return ad.mean_all(ad.mul(y, y))


def gradcheck_suite(seed: int = 0) -> list[tuple[str, float]]:
    """Max finite-difference error per differentiable primitive.

    Each entry runs on at least three random small shapes; errors are the
    worst over shapes and coordinates.
    """
    rng = np.random.default_rng(seed)
    results = []

    def rand(*shape):
        return rng.standard_normal(shape).astype(np.float64)

    # conv2d: zero / replicate padding and strided
    err = 0.0
    for pad_mode, padding, stride, xs, ks in [
        ("zero", 1, 1, (2, 5, 5), (3, 2, 3, 3)),
        ("replicate", 1, 1, (3, 4, 4), (2, 3, 3, 3)),
        ("zero", 0, 1, (1, 6, 6), (2, 1, 3, 3)),
        ("zero", 1, 2, (2, 5, 5), (2, 2, 3, 3)),
    ]:
        leaves = {"x": rand(*xs), "k": 0.5 * rand(*ks)}
        err = max(err, ad.grad_check(
            lambda n, pm=pad_mode, p=padding, s=stride: _sq_loss(
                ad.conv2d(n["x"], n["k"], padding=p, pad_mode=pm, stride=s)),
            leaves))
    results.append(("conv2d", err))

    err = 0.0
    for shape, axis in [((5, 2, 2), 0), ((3, 4, 4), 0), ((2, 3, 5), 2)]:
        err = max(err, ad.grad_check(
            lambda n, a=axis: _sq_loss(ad.softmax_over_axis(n["x"], a)),
            {"x": 2.0 * rand(*shape)}))
    results.append(("softmax", err))

    err = 0.0
    for shape, scale in [((2, 4, 4), 2.0), ((1, 6, 6), 0.5), ((3, 3, 5), 1.5)]:
        err = max(err, ad.grad_check(
            lambda n, s=scale: _sq_loss(ad.bilinear_resize(n["x"], s)),
            {"x": rand(*shape)}))
    results.append(("bilinear_resize", err))

    err = 0.0
    for shape, r in [((4, 2, 2), 2), ((8, 3, 3), 2), ((16, 2, 2), 4)]:
        err = max(err, ad.grad_check(
            lambda n, rr=r: _sq_loss(ad.pixel_shuffle(n["x"], rr)),
            {"x": rand(*shape)}))
    results.append(("pixel_shuffle", err))

    err = 0.0
    for shape in [(2, 4, 4), (1, 5, 5), (3, 4, 6)]:
        flow = (0.8 * rng.standard_normal((2,) + shape[1:])).astype(np.float64)
        err = max(err, ad.grad_check(
            lambda n, fl=flow: _sq_loss(ad.backward_warp(n["x"], fl)),
            {"x": rand(*shape)}))
    results.append(("backward_warp", err))

    err = 0.0
    for c, hw in [(2, 4), (3, 3), (4, 2)]:
        leaves = {
            "x": rand(c, hw, hw),
            "w1": 0.4 * rand(c, c, 3, 3), "b1": 0.1 * rand(c, 1, 1),
            "w2": 0.4 * rand(c, c, 3, 3), "b2": 0.1 * rand(c, 1, 1),
        }
        from .engine import residual_block
        err = max(err, ad.grad_check(
            lambda n: _sq_loss(residual_block(n["x"], n["w1"], n["b1"],
                                              n["w2"], n["b2"])),
            leaves))
    results.append(("residual_block", err))

    err = 0.0
    for c, hw, n_pool in [(3, 3, 2), (4, 2, 3), (2, 4, 5)]:
        leaves = {"q": rand(c, hw, hw)}
        for i in range(n_pool):
            leaves[f"k{i}"] = rand(c, hw, hw)
            leaves[f"v{i}"] = rand(c, hw, hw)

        def build(nodes, n_pool=n_pool):
            out, _ = sca_aggregate(nodes["q"],
                                   [nodes[f"k{i}"] for i in range(n_pool)],
                                   [nodes[f"v{i}"] for i in range(n_pool)])
            return _sq_loss(out)

        err = max(err, ad.grad_check(build, leaves))
    results.append(("sca_aggregate", err))

    err = 0.0
    for shape in [(1, 4, 4), (3, 2, 2), (2, 3, 3)]:
        err = max(err, ad.grad_check(
            lambda n: l1_loss(n["pred"], n["gt"]),
            {"pred": rand(*shape), "gt": rand(*shape)}))
    results.append(("l1_loss", err))

    return results


def bench_stages(channels: int = 16, size: int = 64, deep_blocks: int = 6,
                 repeats: int = 5, seed: int = 0) -> dict[str, float]:
    """Median wall-clock per pipeline stage at the given hidden-state size.

    Returns seconds for pool construction, the attention module, the deep
    fusion stack, the upsampler, and one full recurrent step, plus the
    pool/step ratio.
    """
    rng = np.random.default_rng(seed)
    w = init_weights(channels=channels, scale=4, shallow_blocks=2,
                     deep_blocks=deep_blocks, seed=seed)
    h = rng.standard_normal((channels, size, size)).astype(np.float32)
    f_s = rng.standard_normal((channels, size, size)).astype(np.float32)
    x = rng.uniform(0, 1, (3, size, size)).astype(np.float32)
    x_prev = rng.uniform(0, 1, (3, size, size)).astype(np.float32)
    bank = w.bank

    def timeit(fn):
        best = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            best.append(time.perf_counter() - t0)
        return float(np.median(best))

    pool = build_pool(h, bank)
    times = {
        "pool_build": timeit(lambda: build_pool(h, bank)),
        "sca": timeit(lambda: hsa_transform(h, f_s, bank, w.sca(), pool=pool)),
        "rb2": timeit(lambda: fuse_deep(h, f_s, w)),
        "up": timeit(lambda: upsample(h, w)),
        "step": timeit(lambda: _step_core(h, x_prev, x, w, RunOptions(), 1)),
    }
    times["pool_step_ratio"] = times["pool_build"] / times["step"]
    return times
