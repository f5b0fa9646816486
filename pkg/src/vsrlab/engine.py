"""Unidirectional recurrent super-resolution engine and hidden-state lab.

One step: shallow features from the current frame, warp the propagated
hidden state with the estimated flow, optionally clean it with hidden-state
attention, fuse (concat + deep residual stack), upsample, and add the
bilinear base. The deep feature becomes the next hidden state.

The lab operations (zero-hidden ablation, hidden-state replay from a
stored trace, single-step injection, pool override) all run through the
same driver, so their documented byte-level equivalences are structural
rather than approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import hst
from .filter_bank import (FilterBank, build_override_pool, build_pool,
                          default_bank)
from .flow import FlowConfig, estimate_flow
from .hsa import AttentionMaps, SCAWeights, hsa_transform
from .util import read_kv, write_kv

MODE_ALL_BLUR = "all-blur"
MODE_ALL_SHARP = "all-sharp"
TRACE_RAW = "raw"
TRACE_POST_HSA = "post_hsa"


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

@dataclass
class ModelWeights:
    """All learnable parameters with named access, plus the pinned bank."""

    channels: int
    scale: int
    shallow_blocks: int
    deep_blocks: int
    params: dict
    bank: FilterBank

    def sca(self) -> SCAWeights:
        p = self.params
        return SCAWeights(p["sca.q.w"], p["sca.q.b"], p["sca.k.w"],
                          p["sca.k.b"], p["sca.v.w"], p["sca.v.b"])

    @property
    def up_stages(self) -> int:
        return self.scale.bit_length() - 1

    def lift(self, tape: ad.Tape) -> "ModelWeights":
        """Copy with every parameter registered as a named tape leaf."""
        return replace(self, params={k: tape.leaf(v, k)
                                     for k, v in self.params.items()})

    def copy(self) -> "ModelWeights":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def meta(self) -> dict:
        return {
            "kind": "vsrlab-model",
            "version": 1,
            "channels": self.channels,
            "scale": self.scale,
            "shallow_blocks": self.shallow_blocks,
            "deep_blocks": self.deep_blocks,
            "bank": [{"name": k.name, "mode": k.mode} for k in self.bank],
        }


def _he(rng, out_c, in_c, gain=1.0):
    std = gain * np.sqrt(2.0 / (in_c * 9))
    return (std * rng.standard_normal((out_c, in_c, 3, 3))).astype(np.float32)


def _bias(c):
    return np.zeros((c, 1, 1), dtype=np.float32)


def init_weights(channels: int = 64, scale: int = 4, shallow_blocks: int = 2,
                 deep_blocks: int = 28, seed: int = 0,
                 bank: FilterBank | None = None) -> ModelWeights:
    """Fresh model; residual-stack convs start small, output conv smaller.

    scale must be a power of two >= 2 (each upsampling stage doubles).
    """
    if scale < 2 or scale & (scale - 1):
        raise ValueError(f"scale must be a power of two >= 2, got {scale}")
    if shallow_blocks < 1 or deep_blocks < 1:
        raise ValueError("block counts must be >= 1")
    rng = np.random.default_rng(seed)
    c = channels
    p: dict = {}
    p["head.w"] = _he(rng, c, 3)
    p["head.b"] = _bias(c)
    for i in range(shallow_blocks):
        p[f"rb1.{i}.c1.w"] = _he(rng, c, c, gain=0.1)
        p[f"rb1.{i}.c1.b"] = _bias(c)
        p[f"rb1.{i}.c2.w"] = _he(rng, c, c, gain=0.1)
        p[f"rb1.{i}.c2.b"] = _bias(c)
    p["fuse.w"] = _he(rng, c, 2 * c)
    p["fuse.b"] = _bias(c)
    for i in range(deep_blocks):
        p[f"rb2.{i}.c1.w"] = _he(rng, c, c, gain=0.1)
        p[f"rb2.{i}.c1.b"] = _bias(c)
        p[f"rb2.{i}.c2.w"] = _he(rng, c, c, gain=0.1)
        p[f"rb2.{i}.c2.b"] = _bias(c)
    for s in range(scale.bit_length() - 1):
        p[f"up{s + 1}.w"] = _he(rng, 4 * c, c)
        p[f"up{s + 1}.b"] = _bias(4 * c)
    p["out.w"] = (0.01 * rng.standard_normal((3, c, 3, 3))).astype(np.float32)
    p["out.b"] = _bias(3)
    sca = SCAWeights.init(c, rng)
    p["sca.q.w"], p["sca.q.b"] = sca.query_w, sca.query_b
    p["sca.k.w"], p["sca.k.b"] = sca.key_w, sca.key_b
    p["sca.v.w"], p["sca.v.b"] = sca.value_w, sca.value_b
    return ModelWeights(channels, scale, shallow_blocks, deep_blocks, p,
                        bank or default_bank())


def save_model(path, w: ModelWeights, extra_meta: dict | None = None) -> None:
    meta = w.meta()
    if extra_meta:
        meta.update(extra_meta)
    tensors = dict(w.params)
    for i, k in enumerate(w.bank):
        tensors[f"bank.{i}"] = k.base
    hst.save_bundle(path, meta, tensors)


def load_model(path) -> ModelWeights:
    meta, tensors = hst.load_bundle(path)
    if meta.get("kind") != "vsrlab-model":
        raise ValueError(f"{path}: not a model bundle")
    from .filter_bank import FilterKernel

    kernels = tuple(
        FilterKernel(e["name"], e["mode"], tensors.pop(f"bank.{i}"))
        for i, e in enumerate(meta["bank"]))
    return ModelWeights(meta["channels"], meta["scale"],
                        meta["shallow_blocks"], meta["deep_blocks"],
                        tensors, FilterBank(kernels))


def model_hash(w: ModelWeights) -> str:
    tensors = dict(w.params)
    for i, k in enumerate(w.bank):
        tensors[f"bank.{i}"] = k.base
    return hst.bundle_hash(w.meta(), tensors)


# ---------------------------------------------------------------------------
# state, traces, options
# ---------------------------------------------------------------------------

@dataclass
class RecurrentState:
    prev_frame: np.ndarray | None
    hidden: object
    index: int


@dataclass
class HiddenTrace:
    """Per-frame hidden states from one run, with provenance tags."""

    states: list
    kind: str = TRACE_RAW
    model_hash: str = ""

    def __len__(self):
        return len(self.states)

    def save(self, dirpath) -> None:
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        for t, h in enumerate(self.states):
            hst.save_tensor(dirpath / f"h_{t + 1:06d}.hst", h)
        c, hh, ww = self.states[0].shape
        write_kv(dirpath / "manifest.txt", {
            "model_hash": self.model_hash,
            "kind": self.kind,
            "frames": len(self.states),
            "channels": c,
            "height": hh,
            "width": ww,
        })

    @staticmethod
    def load(dirpath) -> "HiddenTrace":
        dirpath = Path(dirpath)
        meta = read_kv(dirpath / "manifest.txt")
        n = int(meta["frames"])
        states = [hst.load_tensor(dirpath / f"h_{t + 1:06d}.hst")
                  for t in range(n)]
        return HiddenTrace(states, meta.get("kind", TRACE_RAW),
                           meta.get("model_hash", ""))


@dataclass
class RunOptions:
    """Knobs for one sequence run, including the lab's state-source hooks."""

    hsa: bool = True
    flow: FlowConfig = field(default_factory=FlowConfig)
    hsa_before_warp: bool = False
    pool_override: str | None = None
    override_index: int = 0
    zero_hidden: bool = False
    combine_trace: HiddenTrace | None = None
    inject_trace: HiddenTrace | None = None
    inject_at: int | None = None
    record_trace: str | None = None
    collect_maps: bool = False


@dataclass
class RunResult:
    outputs: list
    trace: HiddenTrace | None = None
    maps: list | None = None


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def residual_block(x, w1, b1, w2, b2):
    """conv3x3 -> ReLU -> conv3x3 with identity skip, no normalization."""
    y = ad.relu(ad.add(ad.conv2d(x, w1, padding=1), b1))
    y = ad.add(ad.conv2d(y, w2, padding=1), b2)
    return ad.add(x, y)


def extract_shallow(x, w: ModelWeights):
    """Input conv to C channels, then the shallow residual stack."""
    if ad.value_of(x).shape[0] != 3:
        raise ValueError(f"extract_shallow: expected a 3-channel frame, got "
                         f"shape {ad.value_of(x).shape}")
    p = w.params
    f = ad.add(ad.conv2d(x, p["head.w"], padding=1), p["head.b"])
    for i in range(w.shallow_blocks):
        f = residual_block(f, p[f"rb1.{i}.c1.w"], p[f"rb1.{i}.c1.b"],
                           p[f"rb1.{i}.c2.w"], p[f"rb1.{i}.c2.b"])
    return f


def fuse_deep(hidden, f_s, w: ModelWeights):
    """Concat(hidden, shallow) -> 2C->C conv -> deep residual stack."""
    p = w.params
    f = ad.concat_channels(hidden, f_s)
    f = ad.add(ad.conv2d(f, p["fuse.w"], padding=1), p["fuse.b"])
    for i in range(w.deep_blocks):
        f = residual_block(f, p[f"rb2.{i}.c1.w"], p[f"rb2.{i}.c1.b"],
                           p[f"rb2.{i}.c2.w"], p[f"rb2.{i}.c2.b"])
    return f


def upsample(f_d, w: ModelWeights):
    """Sub-pixel upsampling stages then the 3-channel output conv."""
    p = w.params
    u = f_d
    for s in range(w.up_stages):
        u = ad.relu(ad.add(ad.conv2d(u, p[f"up{s + 1}.w"], padding=1),
                           p[f"up{s + 1}.b"]))
        u = ad.pixel_shuffle(u, 2)
    return ad.add(ad.conv2d(u, p["out.w"], padding=1), p["out.b"])


def _apply_hsa(h, f_s, w: ModelWeights, opts: RunOptions):
    if opts.pool_override is not None:
        mode = {MODE_ALL_BLUR: "blur", MODE_ALL_SHARP: "sharp"}.get(
            opts.pool_override)
        if mode is None:
            raise ValueError(f"unknown pool override {opts.pool_override!r}")
        pool = build_override_pool(h, w.bank, mode, opts.override_index)
    else:
        pool = build_pool(h, w.bank)
    return hsa_transform(h, f_s, w.bank, w.sca(), pool=pool)


def _step_core(h_in, prev_frame, x, w: ModelWeights, opts: RunOptions, t: int):
    """One recurrent step. Returns (y, f_d, consumed_hidden, maps)."""
    f_s = extract_shallow(x, w)
    h = h_in
    maps = None

    def warp(hh):
        if t == 0 or prev_frame is None:
            return hh
        fl = estimate_flow(prev_frame, x, opts.flow)
        return ad.backward_warp(hh, fl)

    if opts.hsa and opts.hsa_before_warp:
        h, maps = _apply_hsa(h, f_s, w, opts)
        h = warp(h)
    else:
        h = warp(h)
        if opts.hsa:
            h, maps = _apply_hsa(h, f_s, w, opts)

    f_d = fuse_deep(h, f_s, w)
    y = ad.clamp01(ad.add(upsample(f_d, w), ad.bilinear_resize(x, w.scale)))
    return y, f_d, h, maps


def step(state: RecurrentState, x_t, w: ModelWeights,
         options: RunOptions | None = None):
    """Advance the recurrence by one frame.

    Returns (y_t, new_state, maps) where maps is None when HSA is off.
    """
    opts = options or RunOptions()
    x_t = np.asarray(x_t)
    expected = (w.channels, x_t.shape[1], x_t.shape[2])
    h_shape = ad.value_of(state.hidden).shape
    if h_shape != expected:
        raise ValueError(f"step: hidden state shape {h_shape} drifted from "
                         f"expected {expected}")
    y, f_d, _, maps = _step_core(state.hidden, state.prev_frame, x_t, w, opts,
                                 state.index)
    new_state = RecurrentState(x_t, f_d, state.index + 1)
    maps_out = None
    if maps is not None:
        maps_out = AttentionMaps(ad.value_of(maps), w.bank)
    return y, new_state, maps_out


# ---------------------------------------------------------------------------
# sequence driver and lab operations
# ---------------------------------------------------------------------------

def _validate_frames(frames):
    if len(frames) == 0:
        raise ValueError("empty frame sequence")
    shape = np.asarray(frames[0]).shape
    for i, f in enumerate(frames):
        fa = np.asarray(f)
        if fa.ndim != 3 or fa.shape[0] != 3:
            raise ValueError(f"frame {i}: expected (3, H, W), got {fa.shape}")
        if fa.shape != shape:
            raise ValueError(f"frame {i}: shape {fa.shape} differs from "
                             f"frame 0 shape {shape}")


def _validate_trace(trace, frames, w, what):
    if len(trace.states) != len(frames):
        raise ValueError(f"{what}: trace has {len(trace.states)} states for "
                         f"{len(frames)} frames")
    expected = (w.channels,) + np.asarray(frames[0]).shape[1:]
    for i, s in enumerate(trace.states):
        if np.asarray(s).shape != expected:
            raise ValueError(f"{what}: trace state {i} has shape "
                             f"{np.asarray(s).shape}, expected {expected}")


def run_sequence(frames, w: ModelWeights,
                 options: RunOptions | None = None) -> RunResult:
    """Left-to-right recurrence over a frame list, hidden starting at zero.

    The lab hooks in RunOptions redirect where each step's incoming hidden
    state comes from before warping/fusion:

    - zero_hidden: always zeros (ablation);
    - combine_trace: states[t-1] from a stored trace (full replay);
    - inject_trace/inject_at: states[t-1] at one step only (0-based frame
      index; the first frame cannot be injected since nothing precedes it).

    Frames may be numpy arrays (inference) while weights are tape nodes
    (training); recording and map collection require plain-array runs.
    """
    opts = options or RunOptions()
    _validate_frames(frames)
    if opts.combine_trace is not None:
        _validate_trace(opts.combine_trace, frames, w, "run_combine")
    if (opts.inject_trace is None) != (opts.inject_at is None):
        raise ValueError("inject_trace and inject_at must be given together")
    if opts.inject_at is not None:
        if not (1 <= opts.inject_at < len(frames)):
            raise ValueError(f"inject_at {opts.inject_at} out of range "
                             f"[1, {len(frames) - 1}]")
        _validate_trace(opts.inject_trace, frames, w, "inject_hidden")

    c = w.channels
    h0, w0 = np.asarray(frames[0]).shape[1:]
    hidden = np.zeros((c, h0, w0), dtype=np.float32)
    prev = None
    outputs = []
    trace_states = []
    maps_list = []

    for t, x in enumerate(frames):
        incoming = hidden
        if opts.zero_hidden:
            incoming = np.zeros((c, h0, w0), dtype=np.float32)
        elif opts.combine_trace is not None and t >= 1:
            incoming = opts.combine_trace.states[t - 1]
        elif opts.inject_at is not None and t == opts.inject_at:
            incoming = opts.inject_trace.states[t - 1]
        y, f_d, consumed, maps = _step_core(incoming, prev, np.asarray(x), w,
                                            opts, t)
        outputs.append(y)
        if opts.record_trace is not None:
            src = f_d if opts.record_trace == TRACE_RAW else consumed
            if isinstance(src, ad.Node):
                raise ValueError("trace recording requires an untraced run")
            trace_states.append(np.asarray(src))
        if opts.collect_maps and maps is not None:
            maps_list.append(AttentionMaps(ad.value_of(maps), w.bank))
        hidden = f_d
        prev = np.asarray(x)

    trace = None
    if opts.record_trace is not None:
        if opts.record_trace not in (TRACE_RAW, TRACE_POST_HSA):
            raise ValueError(f"unknown trace kind {opts.record_trace!r}")
        trace = HiddenTrace(trace_states, opts.record_trace, model_hash(w))
    return RunResult(outputs, trace, maps_list if opts.collect_maps else None)


def ablate_zero_hidden(frames, w: ModelWeights,
                       options: RunOptions | None = None) -> list:
    """Run with the incoming hidden state forced to zeros at every step."""
    opts = replace(options or RunOptions(), zero_hidden=True)
    return run_sequence(frames, w, opts).outputs


def run_combine(frames, w: ModelWeights, trace: HiddenTrace,
                options: RunOptions | None = None) -> list:
    """Replay: discard the propagated hidden state, use trace[t-1] instead.

    The first step is unchanged (zero initial hidden). With a trace recorded
    from the same model and inputs this is byte-identical to run_sequence.
    """
    opts = replace(options or RunOptions(), combine_trace=trace)
    return run_sequence(frames, w, opts).outputs


def inject_hidden(frames, w: ModelWeights, trace: HiddenTrace, t_inject: int,
                  options: RunOptions | None = None) -> list:
    """Overwrite the incoming hidden state at one step (0-based t_inject)."""
    opts = replace(options or RunOptions(), inject_trace=trace,
                   inject_at=t_inject)
    return run_sequence(frames, w, opts).outputs


def pool_override(frames, w: ModelWeights, mode: str, kernel_index: int = 0,
                  options: RunOptions | None = None) -> list:
    """Run with the pool filled by N copies of one blur or sharp variant."""
    if mode not in (MODE_ALL_BLUR, MODE_ALL_SHARP):
        raise ValueError(f"pool_override mode must be {MODE_ALL_BLUR!r} or "
                         f"{MODE_ALL_SHARP!r}, got {mode!r}")
    opts = replace(options or RunOptions(), pool_override=mode,
                   override_index=kernel_index, hsa=True)
    return run_sequence(frames, w, opts).outputs
