"""Command-line front end: batch workflows that write artifacts and emit JSON run reports."""
import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from ._errors import ArgumentError, ConfigError, KernelSeriesError
from .arch_accounting import load_descriptor, parse_config, total_params
from .conv_engine import conv2d, conv2d_continuous, layer_output_error, output_error
from .data_types import FULL32, BasisKind, BfpConfig, ConvSpec, FitConfig, FitMethod, InitScheme
from .kernel_model import (MAGIC as FKC1_MAGIC, CompressedLayer, compress_layer, decode_compressed,
                           layer_param_counts, reconstruct, reconstruction_error, save_compressed)
from .quant import (MAGIC as FKQ1_MAGIC, decode_quantized, model_size_bytes, quantize_bfp,
                    quantize_layer, save_quantized)
from .tensor_core import import_raw, load_tensor, save_tensor
from .utilities import dumps_report, file_digest, read_bytes, write_bytes_atomic, write_json_atomic

TOOL = "kernel-series"

DEFAULT_CONFIG: Dict[str, Any] = {
    'learning_rate': 0.05,
    'max_iters': 2000,
    'grad_tol': 1e-10,
    'method': FitMethod.LEAST_SQUARES.value,
    'seed': 0,
    'threads': 1,
    'precision': 64,
    'log_level': 'INFO',
}

# Tolerance of the conv2d_continuous vs conv2d∘reconstruct check, relative to the output scale.
EQUIVALENCE_TOL = 1e-12

Payload = Tuple[Dict[str, Any], Dict[str, Any]]


def load_config(config_path=None) -> Dict[str, Any]:
    """Load run defaults from config.json, falling back to the built-in defaults"""
    config_path = Path(config_path) if config_path else Path.cwd() / 'config.json'
    if config_path.exists():
        try:
            with open(config_path, 'r', encoding='utf-8') as f:
                config = json.load(f)
            if not isinstance(config, dict):
                raise ValueError('top level is not an object')
            return {**DEFAULT_CONFIG, **config}
        except Exception as e:
            logging.warning(f'Failed to load {config_path}: {e}, using defaults')
    else:
        logging.debug(f'{config_path} not found, using defaults')
    return dict(DEFAULT_CONFIG)


def _input(path) -> Dict[str, str]:
    return {"path": os.fspath(path), "sha256": file_digest(path)}


def _load_rank(path, rank: int):
    tensor = load_tensor(path)
    if len(tensor.shape) != rank:
        what = "kernel (c_out, c_in, K, K)" if rank == 4 else "feature map (c, H, W)"
        raise ArgumentError(f"{path}: expected a rank-{rank} {what} tensor, got shape {tensor.shape}")
    return tensor


def load_layer(path) -> CompressedLayer:
    """Read an FKC1 or FKQ1 artifact, telling the two apart by their magic."""
    blob = read_bytes(path)
    if blob[:4] == FKQ1_MAGIC:
        layer, _ = decode_quantized(blob)
        return layer
    if blob[:4] == FKC1_MAGIC:
        return decode_compressed(blob)
    raise ArgumentError(f"{path}: not a compressed layer (magic {blob[:4]!r})")


def _fit_config(args, config: Dict[str, Any]) -> FitConfig:
    try:
        method = FitMethod(args.method)
        init = InitScheme(args.init) if args.init else None
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return FitConfig(learning_rate=args.lr, max_iters=args.max_iters, grad_tol=args.grad_tol,
                     init=init, method=method, seed=args.seed, threads=args.threads)


def _fit_summary(layer: CompressedLayer) -> Dict[str, Any]:
    report = layer.fit
    summary = {
        "method": report.method,
        "fell_back": report.fell_back,
        "mean_mse": report.mean_mse,
        "max_mse": report.max_mse,
        "per_filter_mse": report.mse,
    }
    if report.max_abs_residual is not None:
        summary["max_abs_residual"] = float(np.max(report.max_abs_residual))
        summary["per_filter_max_abs_residual"] = report.max_abs_residual
    if report.iterations is not None:
        summary["iterations"] = report.iterations
    return summary


def _layer_summary(layer: CompressedLayer) -> Dict[str, Any]:
    return {"basis": layer.kind, "c_out": layer.c_out, "c_in": layer.c_in, "k": layer.k, "n": layer.n,
            "bias": layer.bias is not None}


def cmd_compress(args, config) -> Payload:
    inputs = {"kernels": _input(args.inp)}
    kernels = _load_rank(args.inp, 4)
    layer = compress_layer(kernels, BasisKind(args.basis), args.n, _fit_config(args, config))
    save_compressed(layer, args.out)
    return inputs, {
        "layer": _layer_summary(layer),
        "fit": _fit_summary(layer),
        "params": layer_param_counts(layer),
        "outputs": {"compressed": _input(args.out)},
    }


def cmd_reconstruct(args, config) -> Payload:
    inputs = {"compressed": _input(args.inp)}
    layer = load_layer(args.inp)
    dense = reconstruct(layer)
    save_tensor(dense, args.out, precision=args.precision)
    return inputs, {
        "layer": _layer_summary(layer),
        "shape": list(dense.shape),
        "outputs": {"kernels": _input(args.out)},
    }


def cmd_evaluate(args, config) -> Payload:
    inputs = {"kernels": _input(args.kernels), "compressed": _input(args.compressed),
              "input": _input(args.input)}
    original = _load_rank(args.kernels, 4)
    layer = load_layer(args.compressed)
    feature_map = _load_rank(args.input, 3)
    spec = ConvSpec(stride=args.stride, padding=args.padding, groups=args.groups)

    metrics = layer_output_error(feature_map, original, layer, spec)
    y_cont = conv2d_continuous(feature_map, layer, spec).data
    y_disc = conv2d(feature_map, reconstruct(layer), spec).data
    gap = float(np.max(np.abs(y_cont - y_disc)))
    # relative to the output scale, floored at 1
    scale = max(1.0, float(np.max(np.abs(y_disc))))
    bound = EQUIVALENCE_TOL * scale
    payload: Dict[str, Any] = {
        "layer": _layer_summary(layer),
        "conv": {"stride": spec.stride, "padding": spec.resolve_padding(layer.k), "groups": spec.groups},
        "output_error": metrics,
        "equivalence": {
            "max_abs_diff": gap, "relative_tolerance": EQUIVALENCE_TOL, "scale": scale,
            "tolerance": bound, "status": "pass" if gap <= bound else "fail",
        },
    }
    if args.bits is not None:
        bfp = BfpConfig(mantissa_bits=args.bits)
        y_ref, _ = quantize_bfp(conv2d(feature_map, original, spec).data, bfp)
        y_q, _ = quantize_bfp(y_disc, bfp)
        payload["quantized_output_error"] = {"mantissa_bits": bfp.mantissa_bits, **output_error(y_ref, y_q)}
    return inputs, payload


def parse_n_range(text: str) -> List[int]:
    """``"A-B"`` (inclusive) or a comma list of harmonic counts."""
    text = (text or "").strip()
    if not text:
        raise ArgumentError("empty n-range")
    try:
        if '-' in text:
            lo, hi = (int(part) for part in text.split('-', 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ArgumentError(f"bad n-range {text!r}") from None
    if not values:
        raise ArgumentError(f"n-range {text!r} selects no harmonic counts")
    return values


def cmd_sweep(args, config) -> Payload:
    inputs = {"kernels": _input(args.inp)}
    kernels = _load_rank(args.inp, 4)
    kind = BasisKind(args.basis)
    fit_config = _fit_config(args, config)
    rows = []
    for n in parse_n_range(args.n_range):
        layer = compress_layer(kernels, kind, n, fit_config)
        counts = layer_param_counts(layer)
        rows.append({"n": n, "reduction_pct": counts["reduction_pct"], "retained_pct": counts["retained_pct"],
                     "compressed_params": counts["compressed"],
                     "mean_mse": layer.fit.mean_mse, "max_mse": layer.fit.max_mse})
    return inputs, {"basis": kind, "k": kernels.k, "method": fit_config.method, "rows": rows}


def cmd_quantize(args, config) -> Payload:
    inputs = {"compressed": _input(args.inp)}
    bfp = BfpConfig(mantissa_bits=args.bits)
    layer = load_layer(args.inp)
    quantized, stats = quantize_layer(layer, bfp)
    save_quantized(quantized, bfp, args.out)
    return inputs, {
        "layer": _layer_summary(layer),
        "params": layer_param_counts(layer),
        "quantization": {
            "mantissa_bits": bfp.mantissa_bits,
            "bits_per_value": bfp.bits_per_value,
            **stats,
            "size_bytes": model_size_bytes(stats["values"], bfp),
            "full32_size_bytes": model_size_bytes(stats["values"], FULL32),
        },
        "outputs": {"quantized": _input(args.out)},
    }


def cmd_account(args, config) -> Payload:
    inputs = {"arch": _input(args.arch)}
    arch = load_descriptor(args.arch)
    harmonic = parse_config(args.config, arch) if args.config else None
    totals = total_params(arch, harmonic, args.compressible_only)
    sizes = {
        "baseline_full32": model_size_bytes(totals["baseline_total"], FULL32),
        "compressed_full32": model_size_bytes(totals["total"], FULL32),
    }
    if args.bits is not None:
        bfp = BfpConfig(mantissa_bits=args.bits)
        sizes["baseline_bfp"] = model_size_bytes(totals["baseline_total"], bfp)
        sizes["compressed_bfp"] = model_size_bytes(totals["total"], bfp)
    return inputs, {
        "arch": arch.name,
        "config": args.config,
        "blocks": arch.blocks,
        "accounting": totals,
        "model_size_bytes": sizes,
    }


def parse_filter_selector(text: str, c_out: int, c_in: int) -> Tuple[int, int]:
    """``"o=3,i=1"`` → (3, 1), checked against the layer extents."""
    fields: Dict[str, int] = {}
    for part in text.split(','):
        key, sep, value = part.partition('=')
        key = key.strip()
        if not sep or key not in ('o', 'i') or key in fields:
            raise ArgumentError(f"bad filter selector {text!r}, expected o=INT,i=INT")
        try:
            fields[key] = int(value)
        except ValueError:
            raise ArgumentError(f"bad filter selector {text!r}, expected o=INT,i=INT") from None
    if set(fields) != {'o', 'i'}:
        raise ArgumentError(f"bad filter selector {text!r}, expected o=INT,i=INT")
    o, i = fields['o'], fields['i']
    if not (0 <= o < c_out and 0 <= i < c_in):
        raise ArgumentError(f"filter selector {text!r} is outside the layer's {c_out}x{c_in} filters")
    return o, i


def graymap(values: np.ndarray, lo: float, hi: float) -> bytes:
    """Binary 8-bit PGM of a 2D array, min-max normalized over [lo, hi]."""
    if hi > lo:
        pixels = np.rint(255.0 * (values - lo) / (hi - lo))
    else:
        pixels = np.zeros_like(values)
    height, width = values.shape
    return f"P5\n{width} {height}\n255\n".encode('ascii') + pixels.astype(np.uint8).tobytes()


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_visualize(args, config) -> Payload:
    inputs = {"kernels": _input(args.kernels), "compressed": _input(args.compressed)}
    original = _load_rank(args.kernels, 4)
    layer = load_layer(args.compressed)
    dense = reconstruct(layer)
    errors = reconstruction_error(original, layer)
    if args.filter:
        selected = [parse_filter_selector(text, layer.c_out, layer.c_in) for text in args.filter]
    else:
        selected = [(o, i) for o in range(layer.c_out) for i in range(layer.c_in)]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, written = [], []
    for o, i in selected:
        w = original.data[o, i]
        w_hat = dense.data[o, i]
        stem = f"filter_o{o}_i{i}"
        rows = [(a, b, float(w[a, b]), float(w_hat[a, b]), float(w[a, b] - w_hat[a, b]))
                for a in range(layer.k) for b in range(layer.k)]
        lo, hi = float(min(w.min(), w_hat.min())), float(max(w.max(), w_hat.max()))
        files = {
            f"{stem}.csv": _csv_text(("a", "b", "original", "reconstructed", "residual"), rows).encode('utf-8'),
            f"{stem}_original.pgm": graymap(w, lo, hi),
            f"{stem}_reconstructed.pgm": graymap(w_hat, lo, hi),
        }
        for name, payload in files.items():
            write_bytes_atomic(out_dir / name, payload)
            written.append(name)
        summary.append({"o": o, "i": i, "mse": float(errors["mse"][o, i]), "l2": float(errors["l2"][o, i]),
                        "max_abs": float(errors["max_abs"][o, i])})

    write_bytes_atomic(out_dir / "summary.csv", _csv_text(
        ("o", "i", "mse", "l2", "max_abs"),
        [(r["o"], r["i"], r["mse"], r["l2"], r["max_abs"]) for r in summary]).encode('utf-8'))
    written.append("summary.csv")
    logging.info(f'Exported {len(summary)} filter(s) to {out_dir}')
    return inputs, {"layer": _layer_summary(layer), "filters": summary, "files": written}


def cmd_import_raw(args, config) -> Payload:
    inputs = {"raw": _input(args.inp)}
    try:
        extents = [int(part) for part in args.extents.split(',')]
    except ValueError:
        raise ArgumentError(f"bad extents {args.extents!r}, expected a comma list of integers") from None
    tensor = import_raw(args.inp, extents)
    save_tensor(tensor, args.out, precision=args.precision)
    return inputs, {"shape": list(tensor.shape), "outputs": {"tensor": _input(args.out)}}


COMMANDS: Dict[str, Callable[[argparse.Namespace, Dict[str, Any]], Payload]] = {
    "compress": cmd_compress,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "quantize": cmd_quantize,
    "account": cmd_account,
    "visualize": cmd_visualize,
    "import-raw": cmd_import_raw,
}


def _fitting_flags(config: Dict[str, Any], method: str) -> argparse.ArgumentParser:
    # a fresh parent per subcommand, since parents share their action objects
    fitting = argparse.ArgumentParser(add_help=False)
    fitting.add_argument("--basis", choices=[k.value for k in BasisKind], required=True)
    fitting.add_argument("--method", choices=[m.value for m in FitMethod], default=method)
    fitting.add_argument("--init", choices=[s.value for s in InitScheme], default=None)
    fitting.add_argument("--lr", type=float, default=config['learning_rate'])
    fitting.add_argument("--max-iters", type=int, default=config['max_iters'])
    fitting.add_argument("--grad-tol", type=float, default=config['grad_tol'])
    fitting.add_argument("--seed", type=int, default=config['seed'])
    fitting.add_argument("--threads", type=int, default=config['threads'])
    return fitting


def build_parser(config: Dict[str, Any]) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--report", type=Path, default=None, help="Write the JSON report here instead of stdout")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", action="store_true")
    verbosity.add_argument("--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="compressor", description="Compress CNN kernels with 2D series.")
    sub = parser.add_subparsers(dest="command", required=True)

    cmd = sub.add_parser("compress", parents=[common, _fitting_flags(config, config["method"])],
                         help="Fit series coefficients to a kernel file")
    cmd.add_argument("--in", dest="inp", type=Path, required=True)
    cmd.add_argument("--n", type=int, required=True)
    cmd.add_argument("--out", type=Path, required=True)

    cmd = sub.add_parser("reconstruct", parents=[common], help="Rebuild dense kernels from FKC1/FKQ1")
    cmd.add_argument("--in", dest="inp", type=Path, required=True)
    cmd.add_argument("--out", type=Path, required=True)
    cmd.add_argument("--precision", type=int, choices=(32, 64), default=config['precision'])

    cmd = sub.add_parser("evaluate", parents=[common], help="Compare layer outputs on a feature map")
    cmd.add_argument("--kernels", type=Path, required=True)
    cmd.add_argument("--compressed", type=Path, required=True)
    cmd.add_argument("--input", type=Path, required=True)
    cmd.add_argument("--stride", type=int, default=1)
    cmd.add_argument("--padding", type=int, default=None)
    cmd.add_argument("--groups", type=int, default=1)
    cmd.add_argument("--bits", type=int, default=None, help="Quantize both output maps with an m-bit mantissa")

    cmd = sub.add_parser("sweep", parents=[common, _fitting_flags(config, FitMethod.LEAST_SQUARES.value)],
                         help="Error and size across harmonic counts")
    cmd.add_argument("--in", dest="inp", type=Path, required=True)
    cmd.add_argument("--n-range", required=True, help="A-B or a comma list")

    cmd = sub.add_parser("quantize", parents=[common], help="BFP-quantize a compressed layer")
    cmd.add_argument("--in", dest="inp", type=Path, required=True)
    cmd.add_argument("--bits", type=int, required=True, help="Mantissa bits m")
    cmd.add_argument("--out", type=Path, required=True)

    cmd = sub.add_parser("account", parents=[common], help="Whole-network parameter accounting")
    cmd.add_argument("--arch", type=Path, required=True)
    cmd.add_argument("--config", default=None, help='e.g. "6,3,3,3,2" or "7x3,7x3,7x9,6x3"')
    cmd.add_argument("--compressible-only", action="store_true", default=None)
    cmd.add_argument("--bits", type=int, default=None, help="Also report BFP model sizes")

    cmd = sub.add_parser("visualize", parents=[common], help="Export filters as CSV and PGM")
    cmd.add_argument("--kernels", type=Path, required=True)
    cmd.add_argument("--compressed", type=Path, required=True)
    cmd.add_argument("--filter", action="append", default=None, help="o=INT,i=INT; may repeat")
    cmd.add_argument("--out-dir", type=Path, required=True)

    cmd = sub.add_parser("import-raw", parents=[common], help="Wrap bare float32 data as FKT1")
    cmd.add_argument("--in", dest="inp", type=Path, required=True)
    cmd.add_argument("--extents", required=True, help="e.g. 64,3,7,7")
    cmd.add_argument("--out", type=Path, required=True)
    cmd.add_argument("--precision", type=int, choices=(32, 64), default=config['precision'])
    return parser


def _log_level(args, config) -> int:
    if args.verbose:
        return logging.DEBUG
    if args.quiet:
        return logging.WARNING
    level = logging.getLevelName(str(config.get('log_level', 'INFO')).upper())
    return level if isinstance(level, int) else logging.INFO


def main(argv: Optional[Sequence[str]] = None, config_path=None) -> int:
    """
    Run one subcommand.
    :param argv: Arguments without the program name; defaults to ``sys.argv[1:]``.
    :param config_path: config.json to take defaults from; defaults to the working directory's.
    :return: 0 on success, 2 on a usage or input error, 1 on an internal failure.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    config = load_config(config_path)
    try:
        args = build_parser(config).parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    logging.getLogger().setLevel(_log_level(args, config))

    started = time.perf_counter()
    try:
        inputs, payload = COMMANDS[args.command](args, config)
        report: Dict[str, Any] = {"tool": TOOL, "version": __version__,
                                  "command": argv, "inputs": inputs}
        report.update(payload)
        report["wall_time_s"] = time.perf_counter() - started
        if args.report:
            write_json_atomic(args.report, report)
            logging.info(f'Report written to {args.report}')
        else:
            sys.stdout.write(dumps_report(report))
            sys.stdout.flush()
        return 0
    except FileNotFoundError as e:
        print(f'ERROR: file not found: {e.filename}', file=sys.stderr)
        return 2
    except KernelSeriesError as e:
        print(f'ERROR: {e}', file=sys.stderr)
        return 2
    except Exception:
        logging.exception(f'{args.command} failed:')
        return 1
