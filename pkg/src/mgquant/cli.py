"""Command-line surface.

Subcommands: ``gram`` (accumulate calibration Gram), ``hessian`` (damped
inverse-Gram Cholesky factor), ``train`` (fit the allocator over a layer
directory), ``quantize`` (allocate widths + blockwise quantize), ``baseline``
(reference methods) and ``eval`` (compare original vs quantized).

stdout carries exactly one JSON line per successful command; diagnostics go
to stderr. Exit codes: 0 success, 2 usage/validation, 3 malformed data
file, 4 numeric failure (e.g. a Gram that is not positive definite).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .baselines import METHODS, BaselineSpec, run_baseline
from .calibration import GramAccumulator, build_hessian_cholesky
from .config import RunConfig, load_run_config
from .gptq import proxy_loss
from .linalg import NotPositiveDefiniteError
from .pipeline import (
    calib_from_sections,
    params_from_sections,
    params_to_sections,
    quantize_with_allocator,
    result_to_sections,
)
from .report import build_report, layer_entry, write_report
from .tensorfile import TensorFileError, read_tensor_file, write_tensor_file
from .training import format_training_log, train

__all__ = ["main"]


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def _write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_weights(path: str) -> np.ndarray:
    sections = read_tensor_file(path)
    if "weights" not in sections:
        raise ValueError(f"{path}: missing 'weights' section")
    w = sections["weights"]
    if w.ndim != 2:
        raise ValueError(f"{path}: 'weights' must be 2-D, got shape {w.shape}")
    return w


def _load_hessian(path: str) -> np.ndarray:
    sections = read_tensor_file(path)
    if "hessian_cholesky" not in sections:
        raise ValueError(f"{path}: missing 'hessian_cholesky' section")
    hc = sections["hessian_cholesky"]
    if hc.ndim != 2 or hc.shape[0] != hc.shape[1]:
        raise ValueError(f"{path}: 'hessian_cholesky' must be square, got {hc.shape}")
    return hc


def _load_calib(paths: list[str]):
    return calib_from_sections([read_tensor_file(p) for p in paths])


def cmd_gram(args) -> int:
    acc: GramAccumulator | None = None
    for path in args.calib:
        sections = read_tensor_file(path)
        for name, arr in sections.items():
            if arr.ndim != 2:
                raise ValueError(f"{path}: section {name!r} must be 2-D, got {arr.shape}")
            if acc is None:
                acc = GramAccumulator(d_col=arr.shape[1])
            elif arr.shape[1] != acc.d_col:
                raise ValueError(
                    f"{path}: section {name!r} has {arr.shape[1]} columns, "
                    f"expected {acc.d_col}"
                )
            acc.accumulate(arr)
    if acc is None or acc.samples_seen == 0:
        raise ValueError("no calibration rows found in the given files")
    write_tensor_file(
        args.out,
        {"gram": acc.gram, "samples": np.array([float(acc.samples_seen)])},
    )
    _emit({"out": args.out, "d_col": acc.d_col, "samples": acc.samples_seen})
    return 0


def cmd_hessian(args) -> int:
    sections = read_tensor_file(args.gram)
    for key in ("gram", "samples"):
        if key not in sections:
            raise ValueError(f"{args.gram}: missing {key!r} section")
    acc = GramAccumulator.from_gram(sections["gram"], int(sections["samples"].flat[0]))
    hc = build_hessian_cholesky(acc, damp_frac=args.damp)
    write_tensor_file(args.out, {"hessian_cholesky": hc})
    _emit({"out": args.out, "d_col": acc.d_col, "damp": args.damp})
    return 0


def _paired_layers(weights_dir: str, hessians_dir: str) -> list[tuple[str, Path, Path]]:
    wdir, hdir = Path(weights_dir), Path(hessians_dir)
    if not wdir.is_dir():
        raise ValueError(f"{wdir}: not a directory")
    if not hdir.is_dir():
        raise ValueError(f"{hdir}: not a directory")
    wfiles = {p.stem: p for p in sorted(wdir.glob("*.mgqt"))}
    hfiles = {p.stem: p for p in sorted(hdir.glob("*.mgqt"))}
    only_w = sorted(set(wfiles) - set(hfiles))
    only_h = sorted(set(hfiles) - set(wfiles))
    if only_w or only_h:
        raise ValueError(
            f"unpaired layer files: weights-only {only_w}, hessians-only {only_h}"
        )
    if not wfiles:
        raise ValueError(f"no .mgqt layer files found in {wdir}")
    return [(stem, wfiles[stem], hfiles[stem]) for stem in sorted(wfiles)]


def cmd_train(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    cfg.validate()
    weights_dir = args.weights or cfg.weights_dir
    hessians_dir = args.hessians or cfg.hessians_dir
    if not weights_dir or not hessians_dir:
        raise ValueError("both --weights and --hessians directories are required")
    pairs = _paired_layers(weights_dir, hessians_dir)
    layers = [
        (_load_weights(str(wp)), _load_hessian(str(hp))) for _, wp, hp in pairs
    ]
    params, records = train(layers, cfg.train_config(), arch="gcn")
    out = args.out or cfg.out_path
    if not out:
        raise ValueError("--out is required")
    write_tensor_file(
        out, params_to_sections(params, symmetrize_adjacency=cfg.symmetrize_adjacency)
    )
    log_path = args.log or cfg.log_path or (out + ".log")
    _write_text_atomic(Path(log_path), format_training_log(records))
    if records:
        last = records[-1]
        _emit(
            {
                "l_quant": last.l_quant,
                "l_bit": last.l_bit,
                "total": last.total,
                "hard_mean_bits": last.hard_mean_bits,
                "soft_mean_bits": last.soft_mean_bits,
                "out": out,
                "log": log_path,
            }
        )
    else:
        _emit(
            {
                "l_quant": None,
                "l_bit": None,
                "total": None,
                "hard_mean_bits": None,
                "soft_mean_bits": None,
                "out": out,
                "log": log_path,
            }
        )
    return 0


def cmd_quantize(args) -> int:
    w = _load_weights(args.weights)
    hc = _load_hessian(args.hessian)
    params, symmetrize = params_from_sections(read_tensor_file(args.params))
    calib = _load_calib(args.calib) if args.calib else None
    dtype = np.float32 if args.precision == "f32" else np.float64

    result, timings = quantize_with_allocator(
        w, hc, params,
        block_size=args.block,
        dtype=dtype,
        symmetrize_adjacency=symmetrize,
        calib=calib,
    )
    write_tensor_file(args.out, result_to_sections(result))

    name = Path(args.weights).stem
    entry = layer_entry(name, result, w.shape[0], w.shape[1], params.t_max)
    report = build_report(
        seed=args.seed,
        config_echo={
            "command": "quantize",
            "block_size": args.block,
            "precision": args.precision,
            "symmetrize_adjacency": symmetrize,
            "params": args.params,
        },
        layers=[entry],
        timing={
            "layers": [
                {
                    "name": name,
                    "allocator_time": timings.allocator_time,
                    "engine_time": timings.engine_time,
                    "wall_time": timings.total,
                }
            ],
            "total_wall_time": timings.total,
        },
    )
    if args.report:
        write_report(args.report, report)
    _emit(
        {
            "out": args.out,
            "report": args.report,
            "mean_bits": entry["mean_bits"],
            "proxy_loss": entry["proxy_loss"],
        }
    )
    return 0


def cmd_baseline(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    cfg.validate()
    w = _load_weights(args.weights)
    hc = _load_hessian(args.hessian)
    calib = _load_calib(args.calib) if args.calib else None
    spec = BaselineSpec(
        method=args.method,
        bits=args.bits,
        target_bits=args.target_bits,
    )
    start = time.perf_counter()
    result = run_baseline(spec, w, hc, calib=calib, cfg=cfg.train_config())
    wall = time.perf_counter() - start
    if args.out:
        write_tensor_file(args.out, result_to_sections(result))
    name = Path(args.weights).stem
    entry = layer_entry(name, result, w.shape[0], w.shape[1], cfg.t_max)
    report = build_report(
        seed=cfg.seed,
        config_echo={
            "command": "baseline",
            "method": spec.method,
            "bits": spec.bits,
            "target_bits": spec.target_bits,
            "block_size": cfg.block_size,
        },
        layers=[entry],
        timing={
            "layers": [{"name": name, "wall_time": wall, "engine_time": result.wall_time}],
            "total_wall_time": wall,
        },
    )
    if args.report:
        write_report(args.report, report)
    _emit(
        {
            "method": spec.method,
            "out": args.out,
            "report": args.report,
            "mean_bits": entry["mean_bits"],
            "proxy_loss": entry["proxy_loss"],
        }
    )
    return 0


def cmd_eval(args) -> int:
    w = _load_weights(args.orig)
    qsections = read_tensor_file(args.quant)
    if "quantized" not in qsections:
        raise ValueError(f"{args.quant}: missing 'quantized' section")
    q = qsections["quantized"]
    if q.shape != w.shape:
        raise ValueError(
            f"shape mismatch: {args.orig} has {w.shape}, {args.quant} has {q.shape}"
        )
    calib = _load_calib(args.calib)
    loss = proxy_loss(w, q, calib)
    max_abs = float(np.max(np.abs(np.asarray(w, dtype=np.float64) - q))) if w.size else 0.0
    payload: dict = {
        "proxy_loss": loss,
        "max_abs_error": max_abs,
        "orig": args.orig,
        "quant": args.quant,
    }
    if "widths" in qsections:
        widths = qsections["widths"].astype(np.int64)
        t_max = int(widths.max()) if widths.size else 0
        hist = np.bincount(widths, minlength=t_max + 1)[1:]
        payload["bit_histogram"] = [int(c) for c in hist]
        payload["mean_bits"] = round(float(widths.mean()), 3)
    if args.report:
        report = {
            "schema": "mgquant-eval-v1",
            "metrics": payload,
        }
        write_report(args.report, report)
    _emit(payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgquant",
        description="Mixed-precision weight quantization with a graph-network bit allocator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gram", help="accumulate the calibration Gram matrix")
    p.add_argument("--calib", nargs="+", required=True, help="calibration tensor files")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gram)

    p = sub.add_parser("hessian", help="damped inverse-Gram Cholesky factor")
    p.add_argument("--gram", required=True)
    p.add_argument("--damp", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hessian)

    p = sub.add_parser("train", help="train the bit-width allocator")
    p.add_argument("--weights", help="directory of layer weight files")
    p.add_argument("--hessians", help="directory of matching hessian files")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--out", help="output allocator parameter file")
    p.add_argument("--log", help="training log path (default: <out>.log)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("quantize", help="allocate widths and quantize one layer")
    p.add_argument("--weights", required=True)
    p.add_argument("--hessian", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--block", type=int, default=128)
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--calib", nargs="*", default=[])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("baseline", help="run a reference quantizer")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--bits", type=int, default=2)
    p.add_argument("--target-bits", type=float, default=None)
    p.add_argument("--weights", required=True)
    p.add_argument("--hessian", required=True)
    p.add_argument("--calib", nargs="*", default=[])
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--report")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("eval", help="compare original vs quantized weights")
    p.add_argument("--orig", required=True)
    p.add_argument("--quant", required=True)
    p.add_argument("--calib", nargs="+", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TensorFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NotPositiveDefiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
