"""Command-line surface for the super-resolution lab.

Subcommands: make-toy-data, degrade, train, infer, lab, attention-dump,
gradcheck, bench. Every command that takes --seed is byte-reproducible,
and nothing overwrites existing outputs without --force.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks, engine, toydata
from .degradation import ClipManifest, DegradationParams, degrade_frame, sample_params
from .engine import (HiddenTrace, ModelWeights, RunOptions, load_model,
                     model_hash, run_sequence, save_model)
from .flow import FlowConfig
from .frame_io import read_frame_dir, write_frame
from .hsa import summarize_attention
from .hst import save_tensor
from .trainer import (TrainingConfig, psnr, smoothed_endpoints, train_stage1)
from .util import read_kv, substream, write_kv


def _refuse_overwrite(paths, force: bool) -> None:
    if force:
        return
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing:
        raise FileExistsError(
            f"refusing to overwrite {existing[0]} (and "
            f"{len(existing) - 1} more); pass --force to allow"
            if len(existing) > 1 else
            f"refusing to overwrite {existing[0]}; pass --force to allow")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-hsa", action="store_true",
                   help="bypass the hidden-state attention module")
    p.add_argument("--flow", choices=["block", "zero"], default="block")
    p.add_argument("--block-size", type=int, default=8)
    p.add_argument("--radius", type=int, default=4)
    p.add_argument("--hsa-before-warp", action="store_true",
                   help="apply attention before flow warping (order study)")


def _run_options(args) -> RunOptions:
    return RunOptions(
        hsa=not args.no_hsa,
        flow=FlowConfig(args.flow, args.block_size, args.radius),
        hsa_before_warp=args.hsa_before_warp,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_make_toy_data(args) -> int:
    out = Path(args.out)
    _refuse_overwrite([out / "train", out / "val"], args.force)
    written = toydata.make_toy_data(out, seed=args.seed, clips=args.clips,
                                    frames=args.frames, lr_size=args.lr_size,
                                    scale=args.scale, val_clips=args.val_clips)
    print(f"wrote {len(written['train'])} train + {len(written['val'])} val "
          f"clips under {out}")
    return 0


def cmd_degrade(args) -> int:
    frames, names = read_frame_dir(args.in_dir)
    out = Path(args.out)
    if args.manifest:
        manifest = ClipManifest.from_kv(read_kv(args.manifest))
        params = manifest.params
    else:
        explicit = [args.sigma, args.delta, args.crf]
        if all(v is not None for v in explicit):
            params = DegradationParams(args.sigma, args.delta, args.r,
                                       None if args.crf == 0 else args.crf,
                                       args.seed)
        elif any(v is not None for v in explicit):
            raise ValueError("give all of --sigma/--delta/--crf or none")
        else:
            params = sample_params(substream(args.seed, "degrade/params"),
                                   r=args.r, seed=args.seed)
    _refuse_overwrite([out / n for n in names] + [out / "manifest.txt"],
                      args.force)
    out.mkdir(parents=True, exist_ok=True)
    for i, (frame, name) in enumerate(zip(frames, names)):
        write_frame(degrade_frame(frame, params, i), out / name)
    write_kv(out / "manifest.txt",
             ClipManifest(args.clip_id, params, names).to_kv())
    print(f"degraded {len(frames)} frames -> {out} "
          f"(sigma={params.sigma:.3f} delta={params.delta:.3f} "
          f"r={params.r} crf={params.crf})")
    return 0


_TRAIN_KEYS = {
    "data_dir": str, "out_dir": str, "iterations": int, "batch_size": int,
    "learning_rate": float, "clip_length": int, "patch_size": int,
    "ema_decay": float, "seed": int, "hsa": str, "channels": int,
    "scale": int, "shallow_blocks": int, "deep_blocks": int, "init_seed": int,
}

_TRAIN_DEFAULTS = {
    "iterations": 500, "batch_size": 1, "learning_rate": 1e-4,
    "clip_length": 5, "patch_size": 16, "ema_decay": 0.999, "seed": 0,
    "hsa": "on", "channels": 16, "scale": 4, "shallow_blocks": 2,
    "deep_blocks": 6, "init_seed": 0,
}


def cmd_train(args) -> int:
    raw = read_kv(args.config)
    unknown = set(raw) - set(_TRAIN_KEYS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "data_dir" not in raw or "out_dir" not in raw:
        raise ValueError("config must set data_dir and out_dir")
    cfgmap = dict(_TRAIN_DEFAULTS)
    cfgmap.update({k: _TRAIN_KEYS[k](v) for k, v in raw.items()})

    out_dir = Path(cfgmap["out_dir"])
    outputs = [out_dir / "model.hst", out_dir / "model_ema.hst",
               out_dir / "loss.csv"]
    _refuse_overwrite(outputs, args.force)
    out_dir.mkdir(parents=True, exist_ok=True)

    dataset = toydata.load_dataset(cfgmap["data_dir"], "train")
    w0 = engine.init_weights(channels=cfgmap["channels"],
                             scale=cfgmap["scale"],
                             shallow_blocks=cfgmap["shallow_blocks"],
                             deep_blocks=cfgmap["deep_blocks"],
                             seed=cfgmap["init_seed"])
    cfg = TrainingConfig(iterations=cfgmap["iterations"],
                         batch_size=cfgmap["batch_size"],
                         learning_rate=cfgmap["learning_rate"],
                         clip_length=cfgmap["clip_length"],
                         patch_size=cfgmap["patch_size"],
                         ema_decay=cfgmap["ema_decay"],
                         seed=cfgmap["seed"],
                         hsa=cfgmap["hsa"].lower() in ("on", "true", "1"))
    weights, ema, curve = train_stage1(dataset, cfg, w0)

    bank_hash = model_hash(replace(w0, params={}))
    save_model(out_dir / "model.hst", weights,
               {"iteration": cfg.iterations, "ema": False,
                "bank_hash": bank_hash})
    save_model(out_dir / "model_ema.hst", ema,
               {"iteration": cfg.iterations, "ema": True,
                "bank_hash": bank_hash})
    tmp = out_dir / "loss.csv.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write("iteration,loss\n")
        for rec in curve:
            f.write(f"{rec.iteration},{rec.loss:.8f}\n")
    import os

    os.replace(tmp, out_dir / "loss.csv")
    first, last = smoothed_endpoints(curve)
    print(f"trained {cfg.iterations} iterations; smoothed loss "
          f"{first:.5f} -> {last:.5f}; checkpoints in {out_dir}")
    return 0


def _load_run_inputs(args):
    w = load_model(args.model)
    frames, names = read_frame_dir(args.in_dir)
    return w, frames, names


def _write_outputs(outputs, names, out_dir, force) -> None:
    out_dir = Path(out_dir)
    _refuse_overwrite([out_dir / n for n in names], force)
    out_dir.mkdir(parents=True, exist_ok=True)
    for y, name in zip(outputs, names):
        write_frame(np.asarray(y), out_dir / name)


def cmd_infer(args) -> int:
    w, frames, names = _load_run_inputs(args)
    opts = _run_options(args)
    if args.trace_out:
        opts = replace(opts, record_trace=args.trace_kind)
    result = run_sequence(frames, w, opts)
    _write_outputs(result.outputs, names, args.out, args.force)
    if args.trace_out:
        _refuse_overwrite([Path(args.trace_out) / "manifest.txt"], args.force)
        result.trace.save(args.trace_out)
    print(f"restored {len(frames)} frames -> {args.out}")
    return 0


def cmd_lab(args) -> int:
    modes = [bool(args.zero_hidden), args.combine is not None,
             args.inject is not None, args.pool_override is not None]
    if sum(modes) != 1:
        raise ValueError("lab needs exactly one of --zero-hidden, --combine, "
                         "--inject, --pool-override")
    w, frames, names = _load_run_inputs(args)
    opts = _run_options(args)

    if args.zero_hidden:
        outputs = engine.ablate_zero_hidden(frames, w, opts)
    elif args.combine is not None:
        outputs = engine.run_combine(frames, w, HiddenTrace.load(args.combine),
                                     opts)
    elif args.inject is not None:
        if args.inject_at is None:
            raise ValueError("--inject requires --inject-at")
        trace = HiddenTrace.load(args.inject)
        t_inject = args.inject_at - 1  # CLI is 1-based
        if args.inject_noise > 0:
            rng = substream(args.noise_seed, "lab/inject-noise")
            states = [s.copy() for s in trace.states]
            idx = t_inject - 1
            states[idx] = states[idx] + args.inject_noise * rng.standard_normal(
                states[idx].shape).astype(np.float32)
            trace = HiddenTrace(states, trace.kind, trace.model_hash)
        outputs = engine.inject_hidden(frames, w, trace, t_inject, opts)
    else:
        outputs = engine.pool_override(frames, w, args.pool_override,
                                       args.kernel_index, opts)
    _write_outputs(outputs, names, args.out, args.force)
    print(f"lab run wrote {len(outputs)} frames -> {args.out}")
    return 0


def cmd_attention_dump(args) -> int:
    w, frames, names = _load_run_inputs(args)
    opts = replace(_run_options(args), collect_maps=True)
    if not opts.hsa:
        raise ValueError("attention-dump requires HSA enabled")
    result = run_sequence(frames, w, opts)
    out = Path(args.out)
    stems = [Path(n).stem for n in names]
    targets = []
    for stem in stems:
        targets.append(out / f"{stem}.maps.hst")
        targets.extend(out / f"{stem}.{tag}.pgm"
                       for tag in ["blur_sum", "sharp_sum", "binary"])
        targets.extend(out / f"{stem}.entry{i}.pgm" for i in range(len(w.bank)))
    _refuse_overwrite(targets, args.force)
    out.mkdir(parents=True, exist_ok=True)
    for stem, maps in zip(stems, result.maps):
        save_tensor(out / f"{stem}.maps.hst", maps.weights)
        blur_sum, sharp_sum, binary = summarize_attention(maps, w.bank)
        for i in range(maps.weights.shape[0]):
            write_frame(maps.weights[i], out / f"{stem}.entry{i}.pgm")
        write_frame(blur_sum, out / f"{stem}.blur_sum.pgm")
        write_frame(sharp_sum, out / f"{stem}.sharp_sum.pgm")
        write_frame(binary, out / f"{stem}.binary.pgm")
    print(f"dumped attention for {len(frames)} frames "
          f"({len(w.bank) + 3} images each) -> {out}")
    return 0


def cmd_gradcheck(args) -> int:
    results = checks.gradcheck_suite(seed=args.seed)
    worst = 0.0
    for name, err in results:
        status = "ok" if err < 1e-3 else "FAIL"
        print(f"{name:16s} max rel error {err:.3e}  {status}")
        worst = max(worst, err)
    return 0 if worst < 1e-3 else 1


def cmd_bench(args) -> int:
    times = checks.bench_stages(channels=args.channels, size=args.size,
                                deep_blocks=args.deep_blocks,
                                repeats=args.repeats)
    for stage in ["pool_build", "sca", "rb2", "up", "step"]:
        print(f"{stage:12s} {times[stage] * 1e3:8.2f} ms")
    print(f"pool/step ratio: {times['pool_step_ratio'] * 100:.1f}%")
    return 0


def cmd_psnr(args) -> int:
    a, _ = read_frame_dir(args.a)
    b, _ = read_frame_dir(args.b)
    if len(a) != len(b):
        raise ValueError(f"frame counts differ: {len(a)} vs {len(b)}")
    values = [psnr(x, y) for x, y in zip(a, b)]
    print(f"mean PSNR {np.mean(values):.3f} dB over {len(values)} frames")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vsrlab",
                                description="recurrent video super-resolution lab")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("make-toy-data", help="render the paired toy corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--clips", type=int, default=8)
    sp.add_argument("--frames", type=int, default=5)
    sp.add_argument("--lr-size", type=int, default=16)
    sp.add_argument("--scale", type=int, default=4)
    sp.add_argument("--val-clips", type=int, default=1)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(fn=cmd_make_toy_data)

    sp = sub.add_parser("degrade", help="degrade a directory of frames")
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--r", type=int, default=4)
    sp.add_argument("--crf", type=int, help="18..35, or 0 for off")
    sp.add_argument("--manifest", help="replay an existing manifest exactly")
    sp.add_argument("--clip-id", default="clip")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(fn=cmd_degrade)

    sp = sub.add_parser("train", help="stage-1 L1 training from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("infer", help="restore a frame sequence")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--trace-out", help="also record the hidden-state trace")
    sp.add_argument("--trace-kind", choices=["raw", "post_hsa"], default="raw")
    sp.add_argument("--force", action="store_true")
    _add_run_flags(sp)
    sp.set_defaults(fn=cmd_infer)

    sp = sub.add_parser("lab", help="hidden-state experiments")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--zero-hidden", action="store_true")
    sp.add_argument("--combine", metavar="TRACE_DIR")
    sp.add_argument("--inject", metavar="TRACE_DIR")
    sp.add_argument("--inject-at", type=int,
                    help="1-based frame index for --inject")
    sp.add_argument("--inject-noise", type=float, default=0.0,
                    help="corrupt the injected state with this noise std")
    sp.add_argument("--noise-seed", type=int, default=0)
    sp.add_argument("--pool-override", choices=["all-blur", "all-sharp"])
    sp.add_argument("--kernel-index", type=int, default=0)
    sp.add_argument("--force", action="store_true")
    _add_run_flags(sp)
    sp.set_defaults(fn=cmd_lab)

    sp = sub.add_parser("attention-dump",
                        help="write per-entry and summed attention maps")
    sp.add_argument("--model", required=True)
    sp.add_argument("--in", dest="in_dir", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--force", action="store_true")
    _add_run_flags(sp)
    sp.set_defaults(fn=cmd_attention_dump)

    sp = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_gradcheck)

    sp = sub.add_parser("bench", help="per-stage wall-clock timings")
    sp.add_argument("--channels", type=int, default=16)
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--deep-blocks", type=int, default=6)
    sp.add_argument("--repeats", type=int, default=5)
    sp.set_defaults(fn=cmd_bench)

    sp = sub.add_parser("psnr", help="mean PSNR between two frame directories")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.set_defaults(fn=cmd_psnr)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, FileExistsError,
            FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
