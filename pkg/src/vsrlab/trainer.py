"""Desk-scale stage-1 training: L1 loss, Adam, temporal flip, EMA.

Each iteration samples a clip and a random LR crop, optionally reverses
the frame order (p = 0.5), runs the full recurrence, and backpropagates
the mean L1 over all output frames through time. All randomness flows
from one seed through named substreams so runs replay bit-identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .engine import ModelWeights, RunOptions, run_sequence
from .util import substream


@dataclass
class TrainingConfig:
    iterations: int = 500
    batch_size: int = 1
    learning_rate: float = 1e-4
    clip_length: int = 5
    patch_size: int = 16
    ema_decay: float = 0.999
    seed: int = 0
    hsa: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self, scale: int) -> None:
        if min(self.iterations, self.batch_size, self.clip_length,
               self.patch_size) < 1 or self.learning_rate < 0:
            raise ValueError(f"invalid training config {self}")
        if not (0 < self.ema_decay < 1):
            raise ValueError(f"ema_decay must be in (0, 1), got {self.ema_decay}")
        if self.patch_size % scale:
            raise ValueError(f"patch size {self.patch_size} not divisible by "
                             f"scale {scale}")


@dataclass
class LossRecord:
    iteration: int
    loss: float
    stamp: float


def l1_loss(pred, gt):
    """Mean absolute error over all elements (traced when given Nodes)."""
    if ad.value_of(pred).shape != ad.value_of(gt).shape:
        raise ValueError(f"l1_loss: shapes {ad.value_of(pred).shape} and "
                         f"{ad.value_of(gt).shape} differ")
    out = ad.mean_all(ad.absolute(ad.sub(pred, gt)))
    return out if isinstance(out, ad.Node) else float(out)


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10*log10(1/MSE) for [0,1] images; identical inputs report inf."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"psnr: shapes {pred.shape} and {gt.shape} differ")
    mse = float(np.mean((pred.astype(np.float64) - gt.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * float(np.log10(1.0 / mse))


def temporal_flip(clip: list) -> list:
    """Reverse the frame order of a clip."""
    if len(clip) == 0:
        raise ValueError("temporal_flip: empty clip")
    return list(clip[::-1])


def maybe_temporal_flip(clip: list, rng: np.random.Generator):
    """Flip with probability 0.5; returns (frames, flipped)."""
    if rng.random() < 0.5:
        return temporal_flip(clip), True
    return list(clip), False


def ema_update(weights: ModelWeights, shadow: ModelWeights,
               decay: float) -> ModelWeights:
    """shadow' = decay * shadow + (1 - decay) * weights, per parameter."""
    if set(weights.params) != set(shadow.params):
        raise ValueError("ema_update: parameter sets differ")
    d = np.float32(decay)
    new = {k: d * shadow.params[k] + (np.float32(1.0) - d) * weights.params[k]
           for k in shadow.params}
    return replace(shadow, params=new)


class Adam:
    """Adaptive-moment optimizer over a named parameter dict."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correct1 = 1.0 - b1 ** self.t
        correct2 = 1.0 - b2 ** self.t
        out = {}
        for name, p in params.items():
            g = grads[name].astype(np.float32)
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            self.m[name] = m
            self.v[name] = v
            m_hat = m / correct1
            v_hat = v / correct2
            out[name] = (p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
                         ).astype(np.float32)
        return out


@dataclass
class Clip:
    """One paired training clip: LR frames and the aligned HR ground truth."""

    lr: list
    hr: list
    name: str = ""

    def __post_init__(self):
        if len(self.lr) != len(self.hr) or not self.lr:
            raise ValueError(f"clip {self.name!r}: {len(self.lr)} LR vs "
                             f"{len(self.hr)} HR frames")


def _sample_window(clip: Clip, cfg: TrainingConfig, scale: int,
                   rng: np.random.Generator) -> Clip:
    """Pick a clip_length window and a random aligned LR/HR crop."""
    n = len(clip.lr)
    length = min(cfg.clip_length, n)
    t0 = int(rng.integers(0, n - length + 1))
    lh, lw = clip.lr[0].shape[1:]
    ps = min(cfg.patch_size, lh, lw)
    y0 = int(rng.integers(0, lh - ps + 1))
    x0 = int(rng.integers(0, lw - ps + 1))
    lr = [f[:, y0:y0 + ps, x0:x0 + ps] for f in clip.lr[t0:t0 + length]]
    hr = [f[:, y0 * scale:(y0 + ps) * scale, x0 * scale:(x0 + ps) * scale]
          for f in clip.hr[t0:t0 + length]]
    return Clip(lr, hr, clip.name)


def sequence_loss(lr_frames, hr_frames, w: ModelWeights, opts: RunOptions):
    """Mean per-frame L1 between the model outputs and ground truth."""
    result = run_sequence(lr_frames, w, opts)
    total = None
    for y, gt in zip(result.outputs, hr_frames):
        term = l1_loss(y, gt)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / len(hr_frames))


def train_stage1(dataset: list[Clip], cfg: TrainingConfig, w0: ModelWeights):
    """L1 training loop; returns (weights, EMA weights, loss curve)."""
    if not dataset:
        raise ValueError("train_stage1: empty dataset")
    cfg.validate(w0.scale)
    weights = w0.copy()
    shadow = w0.copy()
    opt = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    crop_rng = substream(cfg.seed, "train/crop")
    flip_rng = substream(cfg.seed, "train/flip")
    run_opts = RunOptions(hsa=cfg.hsa)
    curve: list[LossRecord] = []

    for it in range(cfg.iterations):
        grad_sum: dict = {}
        loss_sum = 0.0
        for _ in range(cfg.batch_size):
            clip = dataset[int(crop_rng.integers(0, len(dataset)))]
            sample = _sample_window(clip, cfg, w0.scale, crop_rng)
            frames, flipped = maybe_temporal_flip(sample.lr, flip_rng)
            targets = temporal_flip(sample.hr) if flipped else sample.hr
            tape = ad.Tape()
            lifted = weights.lift(tape)
            loss = sequence_loss(frames, targets, lifted, run_opts)
            loss_val = float(loss.value)
            if not np.isfinite(loss_val):
                raise RuntimeError(f"non-finite loss at iteration {it}")
            grads = ad.backward(loss)
            loss_sum += loss_val
            for k, g in grads.items():
                grad_sum[k] = g if k not in grad_sum else grad_sum[k] + g
        mean_grads = {k: g / cfg.batch_size for k, g in grad_sum.items()}
        if cfg.learning_rate > 0:
            weights = replace(weights,
                              params=opt.step(weights.params, mean_grads))
        shadow = ema_update(weights, shadow, cfg.ema_decay)
        curve.append(LossRecord(it, loss_sum / cfg.batch_size, time.time()))
    return weights, shadow, curve


def smoothed_endpoints(curve: list[LossRecord], window: int = 50):
    """Mean loss over the first and last `window` iterations."""
    losses = [r.loss for r in curve]
    k = min(window, len(losses))
    return float(np.mean(losses[:k])), float(np.mean(losses[-k:]))
