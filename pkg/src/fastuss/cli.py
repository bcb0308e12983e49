"""``fastuss`` command line: profile, run, verify, masks, init-weights, calibrate.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cost
from .config import CALIBRATION_PATH, ID_ROWS, ModelConfig, load_config, preset
from .css import chunk_plan, css_separate
from .io import RunManifest, load_weights, read_wav, save_weights, write_wav
from .kernels import ConfigError
from .masks import build_mask
from .model import init_weights, parse_prompts, separate
from .streaming import stream_separate
from .verify import SUITES

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _config(args) -> ModelConfig:
    return load_config(args.config or args.preset)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


# --- profile ---------------------------------------------------------------------


def _table1(args) -> int:
    fps, n = args.frames_per_second, args.prompts
    print(f"{'ID':<6}{'S':>3}{'G':>4}{'FFN1':>6}{'params M':>10}{'target':>7}{'MAC G':>9}{'target':>7}{'resid':>8}  status")
    ok = True
    rows = []
    for pid, (s, g, f1, dws, _) in ID_ROWS.items():
        cfg = preset(pid)
        rep = cost.model_cost(cfg, 1.0, n, fps)
        mac, par = rep.macs_total / 1e9, rep.params_total / 1e6
        target = cost.REFERENCE_MACS[pid]
        resid = mac - target
        if pid in cost.PRIMARY_IDS:
            good = abs(resid) <= cost.MAC_TOLERANCE_G
            ok &= good
            status = "ok" if good else "OUT OF TOLERANCE"
        elif pid in cost.SECONDARY_IDS:
            rel = abs(resid) / target
            status = f"{rel:.1%} ({'within' if rel <= cost.SECONDARY_TOLERANCE else 'beyond'} 15%)"
        else:
            status = "reported"
        gtxt = "Cin" if dws else str(g)
        print(f"{pid:<6}{s:>3}{gtxt:>4}{'yes' if f1 else 'no':>6}{par:>10.2f}{cost.REFERENCE_PARAMS[pid]:>7.1f}{mac:>9.2f}{target:>7.1f}{resid:>+8.2f}  {status}")
        rows.append({"id": pid, "params_m": par, "macs_g": mac, "target_g": target, "residual_g": resid})
    if args.json:
        print(json.dumps(rows, indent=2))
    return EXIT_OK if ok else EXIT_VERIFY


def _table2(args) -> int:
    cfg = _config(args)
    print(f"{'chunk s':>8}{'overlap':>9}{'chunks':>8}{'MAC T':>9}{'target':>7}")
    ok = True
    for (chunk, ov), target in cost.CSS_REFERENCE_MACS.items():
        macs = cost.css_cost(cfg, cost.CSS_TOTAL_S, chunk, ov, args.prompts, args.frames_per_second) / 1e12
        ok &= abs(macs - target) <= cost.CSS_TOLERANCE * target
        print(f"{chunk:>8g}{ov:>9.0%}{cost.n_chunks(cost.CSS_TOTAL_S, chunk, ov):>8}{macs:>9.2f}{target:>7.1f}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_profile(args) -> int:
    if args.table1:
        return _table1(args)
    if args.table2:
        return _table2(args)
    cfg = _config(args)
    if args.breakdown:
        rows = cost.compute_breakdown(cfg, args.durations, args.prompts, args.frames_per_second)
        print(f"{'duration s':>10}{'conv':>8}{'MHSA':>8}")
        for dur, conv, attn in rows:
            print(f"{dur:>10g}{conv:>8.3f}{attn:>8.3f}")
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["duration_s", "conv_share", "attn_share"])
                w.writerows(rows)
        return EXIT_OK
    rep = cost.model_cost(cfg, args.duration, args.prompts, args.frames_per_second)
    print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.table())
    return EXIT_OK


# --- run -------------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config(args)
    prompts = parse_prompts(args.prompts.split(","), cfg.max_prompts)
    if args.streaming and (args.chunk is not None):
        raise ConfigError("--streaming and --chunk are mutually exclusive")
    if args.streaming and not cfg.causal:
        raise ConfigError(f"--streaming needs a CAUSAL preset; {cfg.name} uses {cfg.mask_variant.value}")
    dtype = np.float64 if args.dtype == "float64" else np.float32
    if args.weights:
        weights = load_weights(args.weights, cfg, strict=args.strict).astype(dtype)
    else:
        weights = init_weights(cfg, args.seed, dtype)
    x, rate = read_wav(args.input)
    if rate != cfg.frontend.sample_rate:
        raise ConfigError(f"{args.input} is {rate} Hz but {cfg.name} expects {cfg.frontend.sample_rate} Hz")
    x = x.astype(dtype)
    if args.streaming:
        outs, _ = stream_separate(x, prompts, weights, cfg)
    elif args.chunk is not None:
        outs = css_separate(x, prompts, weights, cfg, args.chunk, args.overlap)
        plan = chunk_plan(len(x), args.chunk, args.overlap, rate)
        print(f"{len(plan)} chunks of {plan.chunk_len} samples, hop {plan.hop}")
    else:
        outs = separate(x, prompts, weights, cfg)
    out_dir = Path(args.output_dir or Path(args.input).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    paths = []
    for i, (p, y) in enumerate(zip(prompts, outs)):
        path = out_dir / f"{stem}.{i}.{p.value}.wav"
        write_wav(path, y, rate)
        paths.append(str(path))
        print(path)
    seconds = len(x) / rate
    try:
        if args.chunk is not None:
            mac = cost.css_cost(cfg, seconds, min(args.chunk, seconds), args.overlap, len(prompts), cfg.frontend.sample_rate / cfg.frontend.hop)
        else:
            mac = cost.model_cost(cfg, seconds, len(prompts), cfg.frontend.sample_rate / cfg.frontend.hop).macs_total
    except ConfigError:
        mac = None
    manifest = RunManifest.for_run(
        cfg,
        seed=None if args.weights else args.seed,
        weights=args.weights,
        input=str(args.input),
        prompts=[p.value for p in prompts],
        chunk_s=args.chunk,
        overlap=args.overlap if args.chunk is not None else None,
        streaming=args.streaming,
        outputs=paths,
        mac_estimate=mac,
    )
    mpath = out_dir / f"{stem}.manifest.json"
    manifest.save(mpath)
    print(mpath)
    return EXIT_OK


# --- verify / masks / weights / calibrate -----------------------------------------


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        print(f"== {name}")
        for check in SUITES[name]():
            print(check.line())
            ok &= check.ok
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_masks(args) -> int:
    mask = build_mask(args.variant, args.n, args.sos, args.t)
    rows = mask.rows()
    for i, row in enumerate(rows):
        if i == mask.n_prompt:
            print()
        print(row)
    return EXIT_OK


def cmd_init_weights(args) -> int:
    cfg = _config(args)
    dtype = np.float64 if args.dtype == "float64" else np.float32
    bundle = init_weights(cfg, args.seed, dtype)
    save_weights(args.out, bundle)
    print(f"{args.out}: {len(bundle)} tensors, {bundle.n_params} parameters, config {cfg.hash}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    cal = cost.calibrate()
    out = Path(args.out) if args.out else CALIBRATION_PATH
    cal.save(out)
    print(f"frames/s={cal.frames_per_second}  prompts={cal.n_prompts}  grouping scope={cal.grouping_scope}")
    print(f"primary max relative error {cal.primary_max_rel_error:.2%}")
    for pid in cost.PRIMARY_IDS + cost.SECONDARY_IDS:
        print(f"  {pid:<5}{cal.residuals_g[pid]:>+8.3f} G  ({cal.rel_errors[pid]:+.2%})")
    print(f"written to {out}")
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def _add_config(p: argparse.ArgumentParser, default: Optional[str] = "ID1") -> None:
    p.add_argument("--preset", default=default, help="preset name (ID1..ID9, ID7P, BLINDPROMPT, ..., TOY)")
    p.add_argument("--config", help="path to a JSON config document (overrides --preset)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fastuss", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="parameter and MAC report")
    _add_config(p)
    p.add_argument("--duration", type=float, default=1.0, help="seconds of audio")
    p.add_argument("-N", "--prompts", type=int, help="prompt count (default: calibrated)")
    p.add_argument("--frames-per-second", type=float, help="override the calibrated frame rate")
    p.add_argument("--table1", action="store_true", help="every ID preset with its reference MACs and residual")
    p.add_argument("--table2", action="store_true", help="continuous-separation MACs for 60 s")
    p.add_argument("--breakdown", action="store_true", help="conv vs attention MAC shares")
    p.add_argument("--durations", type=_floats, default=[1.0, 5.0, 10.0, 30.0])
    p.add_argument("--csv", help="write the breakdown to this CSV file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("run", help="separate a WAV file")
    _add_config(p)
    p.add_argument("--input", required=True)
    p.add_argument("--prompts", required=True, help="comma list, e.g. Speech,SFX,Music-mix")
    p.add_argument("--weights", help="FTSS weight file (default: random init from --seed)")
    p.add_argument("--strict", action="store_true", help="fail when the weight file was made for another config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk", type=float, help="chunk length in seconds")
    p.add_argument("--overlap", type=float, default=0.0, help="chunk overlap fraction")
    p.add_argument("--streaming", action="store_true", help="frame-by-frame inference (CAUSAL presets)")
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run a property suite")
    p.add_argument("suite", choices=(*SUITES, "all"))
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("masks", help="print an attention mask")
    p.add_argument("--variant", required=True)
    p.add_argument("-N", dest="n", type=int, required=True, help="number of prompts")
    p.add_argument("-T", dest="t", type=int, required=True, help="number of frames")
    p.add_argument("--sos", action="store_true", help="include the <SOS> token in the prompt block")
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("init-weights", help="write a randomly initialised weight file")
    _add_config(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("calibrate", help="fit frames/s, prompt count and grouping scope to the reference MACs")
    p.add_argument("--out", help=f"output JSON (default {CALIBRATION_PATH})")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fastuss: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"fastuss: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
