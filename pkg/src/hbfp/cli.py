"""Command-line entry point: ``hbfp <subcommand> ...``.

Exit codes: 0 on success, 1 on invalid input or usage, 2 when a ``*-check``
command finds a mismatch. Every run writes a manifest (JSON) next to its
outputs, or to stderr when there is no output path. Numeric results go to
files or to stdout as JSON/CSV; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import itertools
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import landscape, quantization_distance
from .core import Blocking, QuantConfig, ZERO_EXPONENT, dequantize_tensor, quantize_tensor
from .density import TABLE_HEADER, density_table, format_table_csv, load_calibration
from .io import atomic_write_bytes, dump_hbq, dump_hbt, load_hbq, load_hbt
from .kernels import bfp_matmul, dot_blocks, emulated_dot_blocks, reference_matmul
from .training import (
    TrainConfig, evaluate, layer_configs, load_model, make_dataset, train,
)

__all__ = ["main", "dispatch", "RunManifest"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: list[str]
    tool_version: str = __version__
    config_hash: Optional[str] = None
    seeds: list[int] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    started: str = ""
    finished: str = ""
    exit_code: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _write_text(path, text: str) -> str:
    atomic_write_bytes(path, text.encode())
    return str(path)


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        print(human)


# -- quantize / dequantize ---------------------------------------------

def cmd_quantize(args, man: RunManifest) -> int:
    x = load_hbt(args.inp)
    cfg = QuantConfig(args.mantissa, args.block)
    q = quantize_tensor(x, cfg, Blocking(args.blocking, args.axis))
    dump_hbq(args.out, q)
    man.outputs.append(str(args.out))
    zero = int(np.sum(q.exponents == ZERO_EXPONENT))
    _emit(args, {"blocks": q.n_blocks, "padding": q.padding_count, "zero_blocks": zero,
                 "shape": list(q.logical_shape), "out": str(args.out)},
          f"wrote {args.out}: {q.n_blocks} blocks, padding {q.padding_count}")
    return 0


def cmd_dequantize(args, man: RunManifest) -> int:
    q = load_hbq(args.inp)
    dump_hbt(args.out, dequantize_tensor(q))
    man.outputs.append(str(args.out))
    _emit(args, {"shape": list(q.logical_shape), "out": str(args.out)},
          f"wrote {args.out}: shape {tuple(q.logical_shape)}")
    return 0


# -- checks ------------------------------------------------------------

def cmd_matmul_check(args, man: RunManifest) -> int:
    rng = np.random.default_rng(args.seed)
    man.seeds = [args.seed]
    failures = []
    for case in range(args.cases):
        M, K, N = (int(v) for v in rng.integers(1, 97, 3))
        cfg = QuantConfig(int(rng.choice([4, 5, 6, 8])), int(rng.choice([16, 64, 256, 576])))
        scale = 10.0 ** rng.uniform(-4, 4, 2)
        A = (rng.standard_normal((M, K)) * scale[0]).astype(np.float32)
        B = (rng.standard_normal((K, N)) * scale[1]).astype(np.float32)
        if bfp_matmul(A, B, cfg).tobytes() != reference_matmul(A, B, cfg).tobytes():
            failures.append({"case": case, "shape": [M, K, N], "config": cfg.to_dict()})
    ok = not failures
    _emit(args, {"cases": args.cases, "failures": failures, "passed": ok},
          f"matmul-check: {args.cases - len(failures)}/{args.cases} cases bit-exact")
    return 0 if ok else 2


def _emulation_mismatches(ma, mb, e) -> int:
    v1, i1 = dot_blocks(e, ma, e, mb, 6)
    v2, i2 = emulated_dot_blocks(e, ma, e, mb)
    return int(np.sum((i1 != i2) | (v1.view(np.uint32) != v2.view(np.uint32))))


def cmd_emulate_check(args, man: RunManifest) -> int:
    man.seeds = [args.seed]
    mags = np.arange(32)
    a, b = (g.reshape(-1, 1) for g in np.meshgrid(mags, mags, indexing="ij"))
    e = np.zeros(len(a), dtype=np.int64)
    exhaustive = 0
    for sa, sb in itertools.product((1, -1), repeat=2):
        exhaustive += _emulation_mismatches(sa * a, sb * b, e)
    rng = np.random.default_rng(args.seed)
    random_bad = 0
    for start in range(0, args.blocks, 10_000):
        n = min(10_000, args.blocks - start)
        ma = rng.integers(-31, 32, (n, 64))
        mb = rng.integers(-31, 32, (n, 64))
        random_bad += _emulation_mismatches(ma, mb, rng.integers(-60, 61, n))
    ok = exhaustive == 0 and random_bad == 0
    _emit(args, {"exhaustive_pairs": 4 * 32 * 32, "exhaustive_mismatches": exhaustive,
                 "random_blocks": args.blocks, "random_mismatches": random_bad, "passed": ok},
          f"emulate-check: exhaustive mismatches {exhaustive}, random mismatches {random_bad}")
    return 0 if ok else 2


# -- density -----------------------------------------------------------

def cmd_density(args, man: RunManifest) -> int:
    cal = load_calibration(args.calib)
    formats = [f.strip() for f in args.formats.split(",") if f.strip()]
    rows = density_table(formats, _ints(args.blocks), N=args.n, calibration=cal)
    text = format_table_csv(rows)
    if args.csv:
        man.outputs.append(_write_text(args.csv, text))
    if args.json:
        print(json.dumps({"rows": [dict(zip(TABLE_HEADER, r)) for r in rows],
                          "calibration": cal}, sort_keys=True))
    elif not args.csv:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.csv}: {len(rows)} rows")
    man.config_hash = _hash({"formats": formats, "blocks": args.blocks, "n": args.n, "cal": cal})
    return 0


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# -- train -------------------------------------------------------------

def cmd_train(args, man: RunManifest) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError("run config must be a JSON object")
    base = TrainConfig.from_dict(raw)
    seeds = _ints(args.seeds) if args.seeds else [base.seed]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man.config_hash = base.config_hash()
    man.seeds = seeds
    summary = {"config_hash": base.config_hash(), "numeric": base.numeric.label, "runs": []}
    for seed in seeds:
        cfg = TrainConfig.from_dict(dict(raw, seed=seed))
        stem = out / f"seed{seed}"
        print(f"training seed {seed} ({cfg.numeric.label})", file=sys.stderr)
        report = train(cfg, checkpoint=f"{stem}.hbc")
        man.outputs += [_write_text(f"{stem}.report.json", report.to_json() + "\n"),
                        _write_text(f"{stem}.curves.csv", report.curves_csv()),
                        report.checkpoint]
        summary["runs"].append({"seed": seed, "final_val_acc": report.final_val_acc,
                                "diverged": report.diverged, "mac_fraction": report.mac_fraction})
    accs = [r["final_val_acc"] for r in summary["runs"]]
    summary["mean_final_val_acc"] = float(np.mean(accs))
    summary["std_final_val_acc"] = float(np.std(accs))
    man.outputs.append(_write_text(out / "summary.json", json.dumps(summary, sort_keys=True, indent=2) + "\n"))
    _emit(args, summary, f"mean final val acc {summary['mean_final_val_acc']:.2f} over {len(seeds)} seeds")
    return 0


# -- analyze -----------------------------------------------------------

def cmd_wasserstein(args, man: RunManifest) -> int:
    x = load_hbt(args.inp)
    cfg = QuantConfig(args.mantissa, args.block)
    d = quantization_distance(x, cfg, Blocking(args.blocking, args.axis))
    payload = {"wasserstein": d, "mantissa_bits": args.mantissa, "block_size": args.block,
               "elements": int(x.size)}
    print(json.dumps(payload, sort_keys=True) if args.json else repr(d))
    return 0


def cmd_landscape(args, man: RunManifest) -> int:
    model, meta = load_model(args.model)
    tcfg = TrainConfig.from_dict(meta["train_config"])
    _, _, xv, yv = make_dataset(tcfg.dataset, tcfg.seed)
    n_layers = len(model.layers)
    if args.mantissa is not None:
        cfgs = [QuantConfig(args.mantissa, args.block)] * n_layers
    else:
        cfgs = layer_configs(tcfg.numeric, tcfg.epochs - 1, tcfg.epochs, n_layers)
    if args.max_samples:
        xv, yv = xv[:args.max_samples], yv[:args.max_samples]

    def loss_fn(params):
        with np.errstate(over="raise", invalid="raise"):
            return evaluate(model.with_params(params), xv, yv, cfgs)[0]

    grid = landscape(model.params(), loss_fn, (args.lo, args.hi), args.steps, args.mode,
                     args.seed, not args.linear)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "beta", "loss"])
    for a, b, v in grid.rows():
        w.writerow([repr(a), repr(b), repr(v)])
    man.seeds = [args.seed]
    man.config_hash = tcfg.config_hash()
    if args.csv:
        man.outputs.append(_write_text(args.csv, buf.getvalue()))
    payload = {"center_loss": grid.center, "points": int(grid.losses.size), "mode": args.mode,
               "log_scale": grid.log_scale}
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    elif args.csv:
        print(f"wrote {args.csv}: {grid.losses.size} points, center loss {grid.center!r}")
    else:
        sys.stdout.write(buf.getvalue())
    return 0


# -- parser ------------------------------------------------------------

def _add_quant_flags(p, required=True):
    p.add_argument("--mantissa", type=int, required=required, help="total mantissa bits incl. sign")
    p.add_argument("--block", type=int, default=64)
    p.add_argument("--blocking", choices=["1d", "2d"], default="1d")
    p.add_argument("--axis", type=int, default=-1)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # SUPPRESS keeps a flag given before the subcommand from being reset by it.
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="print a JSON object on stdout")
    common.add_argument("--manifest", default=argparse.SUPPRESS,
                        help="manifest path (default: next to the outputs)")

    p = _Parser(prog="hbfp", description="Hybrid block floating point toolkit.", parents=[common])
    p.add_argument("--version", action="version", version=f"hbfp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantize", parents=[common], help="HBT1 tensor -> HBQ1 blocks")
    q.add_argument("--in", dest="inp", required=True)
    q.add_argument("--out", required=True)
    _add_quant_flags(q)
    q.set_defaults(func=cmd_quantize)

    d = sub.add_parser("dequantize", parents=[common], help="HBQ1 blocks -> HBT1 tensor")
    d.add_argument("--in", dest="inp", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dequantize)

    m = sub.add_parser("matmul-check", parents=[common], help="bfp_matmul vs. reference oracle")
    m.add_argument("--cases", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.set_defaults(func=cmd_matmul_check)

    e = sub.add_parser("emulate-check", parents=[common], help="6-bit dot via 4-bit passes")
    e.add_argument("--blocks", type=int, default=100_000, help="random block pairs")
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_emulate_check)

    dn = sub.add_parser("density", parents=[common], help="systolic-array density table")
    dn.add_argument("--formats", default="hbfp8,hbfp6,hbfp4,mx9,mx6,mx4,mxfp8,mxfp6,mxfp4,fp32,bf16,fp8")
    dn.add_argument("--blocks", default="64")
    dn.add_argument("--n", type=int, default=8, help="array side")
    dn.add_argument("--calib", help="calibration JSON (default: $HBFP_CALIB or built-in)")
    dn.add_argument("--csv", help="write the table here instead of stdout")
    dn.set_defaults(func=cmd_density)

    t = sub.add_parser("train", parents=[common], help="train the desk MLP")
    t.add_argument("--config", required=True, help="run.json mirroring TrainConfig")
    t.add_argument("--seeds", help="comma-separated seeds (default: config seed)")
    t.add_argument("--out", default="runs")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("analyze", help="distribution and landscape analysis")
    asub = a.add_subparsers(dest="analysis", required=True, parser_class=_Parser)
    w = asub.add_parser("wasserstein", parents=[common], help="distance of a tensor to its quantization")
    w.add_argument("--in", dest="inp", required=True)
    _add_quant_flags(w)
    w.set_defaults(func=cmd_wasserstein)

    ls = asub.add_parser("landscape", parents=[common], help="loss around a checkpoint")
    ls.add_argument("--model", required=True)
    ls.add_argument("--mode", choices=["slice", "grid"], default="slice")
    ls.add_argument("--steps", type=int, default=None, help="odd; default 51 (slice) or 25 (grid)")
    ls.add_argument("--seed", type=int, default=0)
    ls.add_argument("--range", dest="range_", type=float, nargs=2, default=(-1.0, 1.0),
                    metavar=("LO", "HI"))
    ls.add_argument("--linear", action="store_true", help="store raw loss, not log loss")
    ls.add_argument("--max-samples", type=int, default=0, help="cap validation samples")
    ls.add_argument("--csv")
    _add_quant_flags(ls, required=False)
    ls.set_defaults(func=cmd_landscape)
    return p


def _manifest_path(args, man: RunManifest) -> Optional[Path]:
    if args.manifest:
        return Path(args.manifest)
    if getattr(args, "command", None) == "train":
        return Path(args.out) / "manifest.json"
    if man.outputs:
        return Path(man.outputs[0] + ".manifest.json")
    return None


def dispatch(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    man = RunManifest(command=["hbfp", *argv], started=_now())
    args = None
    try:
        args = build_parser().parse_args(argv)
        args.json = getattr(args, "json", False)
        args.manifest = getattr(args, "manifest", None)
        if hasattr(args, "range_"):
            args.lo, args.hi = args.range_
        code = args.func(args, man)
    except UsageError as exc:
        print(f"hbfp: usage error: {exc}", file=sys.stderr)
        code = 1
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"hbfp: error: {exc}", file=sys.stderr)
        code = 1
    man.finished = _now()
    man.exit_code = code
    if args is not None:
        path = _manifest_path(args, man)
        try:
            if path is None:
                sys.stderr.write(man.to_json())
            else:
                _write_text(path, man.to_json())
        except OSError as exc:
            print(f"hbfp: could not write manifest: {exc}", file=sys.stderr)
            code = code or 1
    return code


def main() -> None:
    sys.exit(dispatch())
