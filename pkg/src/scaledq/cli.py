"""Command-line harness.

Subcommands: ``bench`` (one MSE experiment row, or the whole regression
suite), ``invsqrt`` (side-by-side quantized and FP64 Newton traces),
``div-sweep`` (exhaustive quotient error sweep), ``quantize`` (inspect one
encoding), ``gelu-curve`` (sampled activation CSV) and ``info`` (format and
memory accounting).

Exit codes: 0 success, 1 usage or configuration error, 2 numeric domain
error in supplied data.
"""

from __future__ import annotations

import argparse
import json
import sys

from .core import (
    DivisionByZero,
    DomainError,
    GELU_VARIANTS,
    RangeError,
    ScaleConfig,
    ScaledInt,
    dequantize,
    quantize,
)
from .newton import newton_inv_sqrt
from .ops import ShapeError, gelu
from .bench import (
    CSV_HEADER,
    ExperimentSpec,
    OPERATORS,
    UsageError,
    div_sweep,
    load_tensor,
    memory_report,
    reports_to_csv,
    run_bench,
    run_suite,
    save_tensor,
)
from .reference import FTensor, ref_gelu_exact, ref_newton_inv_sqrt


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this harness reserves 2 for
    # numeric domain errors.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--p-bits", type=int)
    p.add_argument("--scale-bits", type=int)
    p.add_argument("--div-t-max", type=int)
    p.add_argument("--newton-iters", type=int)
    p.add_argument("--gelu-variant", choices=GELU_VARIANTS)
    p.add_argument("--seed", type=int)


def _build_config(args) -> tuple[ScaleConfig, int]:
    values = {}
    seed = 0
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        seed = int(raw.pop("seed", 0))
        for key in ("p_bits", "scale_bits", "div_t_max", "newton_iters", "gelu_variant"):
            if key in raw:
                values[key] = raw.pop(key)
        if raw:
            raise UsageError(f"unknown config keys: {sorted(raw)}")
    for attr, key in (("p_bits", "p_bits"), ("scale_bits", "scale_bits"),
                      ("div_t_max", "div_t_max"), ("newton_iters", "newton_iters"),
                      ("gelu_variant", "gelu_variant")):
        flag = getattr(args, attr, None)
        if flag is not None:
            values[key] = flag
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    try:
        return ScaleConfig(**values), seed
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scaledq",
                     description="Scaled-integer quantization benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="run one MSE experiment (or 'suite' for all rows)",
                       parents=[], add_help=True)
    b.add_argument("operator", choices=OPERATORS + ("suite",))
    b.add_argument("--batch", type=int, default=1)
    b.add_argument("--in-channels", type=int, default=3)
    b.add_argument("--out-channels", type=int, default=3)
    b.add_argument("--kernel", type=int, default=1)
    b.add_argument("--height", type=int, default=16)
    b.add_argument("--width", type=int, default=16)
    b.add_argument("--trials", type=int, default=25)
    b.add_argument("--weight-mode", choices=("random", "identity"), default="random")
    b.add_argument("--input-file", help="fixed input tensor (JSON), reused every trial")
    b.add_argument("--json", action="store_true", dest="as_json")
    b.add_argument("--out", help="write report to this path instead of stdout")
    _add_config_flags(b)

    iv = sub.add_parser("invsqrt", help="quantized vs FP64 inverse square root trace")
    iv.add_argument("value", type=float)
    iv.add_argument("--int", type=int, dest="int_", help="stored magnitude (default: quantize VALUE)")
    iv.add_argument("--scale", type=int, help="stored scale for --int")
    iv.add_argument("--y0-int", type=int, default=1)
    iv.add_argument("--y0-scale", type=int, default=6)
    iv.add_argument("--iters", type=int)
    iv.add_argument("--json", action="store_true", dest="as_json")
    _add_config_flags(iv)

    dv = sub.add_parser("div-sweep", help="exhaustive scaled-division error sweep")
    dv.add_argument("--json", action="store_true", dest="as_json")
    _add_config_flags(dv)

    qz = sub.add_parser("quantize", help="show the encoding of one value")
    qz.add_argument("value", type=float)
    qz.add_argument("--json", action="store_true", dest="as_json")
    _add_config_flags(qz)

    gc = sub.add_parser("gelu-curve", help="CSV of x, quantized and exact activation values")
    gc.add_argument("--start", type=float, default=-4.0)
    gc.add_argument("--stop", type=float, default=4.0)
    gc.add_argument("--steps", type=int, default=81)
    gc.add_argument("--variant", choices=GELU_VARIANTS)
    _add_config_flags(gc)

    info = sub.add_parser("info", help="format parameters and memory accounting")
    info.add_argument("--json", action="store_true", dest="as_json")
    _add_config_flags(info)

    st = sub.add_parser("save-tensor", help="generate and store a random f64 tensor")
    st.add_argument("path")
    st.add_argument("--shape", required=True, help="comma-separated dims, e.g. 1,3,16,16")
    st.add_argument("--low", type=float, default=0.0)
    st.add_argument("--high", type=float, default=1.0)
    _add_config_flags(st)

    return parser


def _cmd_bench(args, out) -> int:
    cfg, seed = _build_config(args)
    if args.operator == "suite":
        reports = run_suite(cfg, seed=seed, trials=args.trials,
                            side=args.height)
        text = (json.dumps([r.as_dict() for r in reports], indent=2, sort_keys=True) + "\n"
                if args.as_json else reports_to_csv(reports))
    else:
        spec = ExperimentSpec(
            args.operator, b=args.batch, i=args.in_channels, o=args.out_channels,
            k=args.kernel, h=args.height, w=args.width, trials=args.trials,
            seed=seed, weight_mode=args.weight_mode)
        fixed = None
        if args.input_file:
            loaded = load_tensor(args.input_file, cfg)
            if not isinstance(loaded, FTensor):
                from .reference import dequantize_tensor
                loaded = dequantize_tensor(loaded)
            fixed = loaded
        report = run_bench(spec, cfg, fixed_input=fixed)
        text = (json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n"
                if args.as_json else CSV_HEADER + "\n" + report.csv_row() + "\n")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    return 0


def _cmd_invsqrt(args, out) -> int:
    cfg, _ = _build_config(args)
    if (args.int_ is None) != (args.scale is None):
        raise UsageError("--int and --scale must be given together")
    if args.int_ is not None:
        if args.int_ <= 0:
            raise DomainError("--int must be positive")
        x = ScaledInt(args.int_, args.scale)
    else:
        x = quantize(args.value, cfg)
    y0 = ScaledInt(args.y0_int, args.y0_scale)
    iters = args.iters if args.iters is not None else cfg.newton_iters
    final, trace = newton_inv_sqrt(x, y0, iters, cfg)
    _, fp_seq = ref_newton_inv_sqrt(args.value, dequantize(y0), iters)
    if args.as_json:
        rows = [{"iteration": j, "fp64": fp_seq[j], "int": y.magnitude,
                 "scale": y.scale, "quantized": dequantize(y)}
                for j, y in trace.entries]
        out.write(json.dumps({"rows": rows, "final": dequantize(final)},
                             indent=2, sort_keys=True) + "\n")
    else:
        out.write("iteration,fp64,int,scale,quantized\n")
        for j, y in trace.entries:
            out.write(f"{j},{fp_seq[j]!r},{y.magnitude},{y.scale},{dequantize(y)!r}\n")
    return 0


def _cmd_div_sweep(args, out) -> int:
    cfg, _ = _build_config(args)
    report = div_sweep(cfg)
    if args.as_json:
        out.write(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    else:
        out.write(report.csv())
    return 0


def _cmd_quantize(args, out) -> int:
    cfg, _ = _build_config(args)
    q = quantize(args.value, cfg)
    back = dequantize(q)
    if args.as_json:
        out.write(json.dumps({"value": args.value, "int": q.signed_magnitude,
                              "scale": q.scale, "dequantized": back,
                              "abs_err": abs(back - args.value)},
                             indent=2, sort_keys=True) + "\n")
    else:
        out.write("value,int,scale,dequantized,abs_err\n")
        out.write(f"{args.value!r},{q.signed_magnitude},{q.scale},{back!r},"
                  f"{abs(back - args.value)!r}\n")
    return 0


def _cmd_gelu_curve(args, out) -> int:
    cfg, _ = _build_config(args)
    if args.steps < 2:
        raise UsageError("need at least 2 steps")
    variant = args.variant or cfg.gelu_variant
    step = (args.stop - args.start) / (args.steps - 1)
    out.write("x,quantized,exact\n")
    for i in range(args.steps):
        x = args.start + step * i
        q = dequantize(gelu(quantize(x, cfg), cfg, variant=variant))
        out.write(f"{x!r},{q!r},{ref_gelu_exact(x)!r}\n")
    return 0


def _cmd_info(args, out) -> int:
    cfg, _ = _build_config(args)
    report = memory_report(cfg)
    if args.as_json:
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        keys = list(report)
        out.write(",".join(keys) + "\n")
        out.write(",".join(repr(report[k]) if isinstance(report[k], float)
                           else str(report[k]) for k in keys) + "\n")
    return 0


def _cmd_save_tensor(args, out) -> int:
    import random as _random

    cfg, seed = _build_config(args)
    try:
        shape = tuple(int(d) for d in args.shape.split(","))
    except ValueError as exc:
        raise UsageError(f"bad shape {args.shape!r}") from exc
    if any(d < 1 for d in shape):
        raise UsageError("shape dims must be positive")
    n = 1
    for d in shape:
        n *= d
    rng = _random.Random(seed)
    span = args.high - args.low
    data = tuple(args.low + span * rng.random() for _ in range(n))
    save_tensor(args.path, FTensor(shape, data))
    out.write(f"wrote {args.path}\n")
    return 0


_COMMANDS = {
    "bench": _cmd_bench,
    "invsqrt": _cmd_invsqrt,
    "div-sweep": _cmd_div_sweep,
    "quantize": _cmd_quantize,
    "gelu-curve": _cmd_gelu_curve,
    "info": _cmd_info,
    "save-tensor": _cmd_save_tensor,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args, sys.stdout)
    except UsageError as exc:
        print(f"scaledq: error: {exc}", file=sys.stderr)
        return 1
    except (DomainError, DivisionByZero, RangeError, ShapeError) as exc:
        print(f"scaledq: numeric error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
