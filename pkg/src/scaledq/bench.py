"""Benchmark harness: seeded experiments, error sweeps and report plumbing.

Experiments draw fresh FP64 inputs in [0, 1) and weights/biases in [-1, 1)
per trial, quantize them, run the quantized operator, and score it against
the matching FP64 reference evaluated on the dequantized operands (so the
reported error is the operator's own rounding, not input encoding noise).
Trial ``t`` of an experiment seeded ``s`` uses ``s * 1_000_003 + t``, which
keeps trials independent yet byte-reproducible.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass
from fractions import Fraction

from .core import (
    GELU_SERIES_CUBED,
    GELU_SERIES_LINEAR,
    RangeError,
    SaturationCounter,
    ScaleConfig,
    ScaledInt,
    dequantize,
    quantize,
    scale_div,
)
from .ops import (
    ConvSpec,
    LayerNormParams,
    QTensor,
    ShapeError,
    conv2d,
    depthwise_conv2d,
    gelu_map,
    linear,
    layer_norm,
    softmax_tensor,
)
from . import reference as ref
from .reference import FTensor


class UsageError(ValueError):
    """Bad experiment description or file contents."""


CSV_HEADER = ("operator,B,I,O,K,H,W,trials,mse,max_abs_err,saturations,"
              "bits_per_element,reduction_factor")

OPERATORS = ("conv2d", "depthwise-conv2d", "linear", "layer-norm", "softmax", "gelu")


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark row: operator, geometry, trial count and seeding."""

    operator: str
    b: int = 1
    i: int = 3
    o: int = 3
    k: int = 1
    h: int = 16
    w: int = 16
    trials: int = 25
    seed: int = 0
    input_low: float = 0.0
    input_high: float = 1.0
    weight_low: float = -1.0
    weight_high: float = 1.0
    weight_mode: str = "random"
    label: str = ""

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise UsageError(f"unknown operator {self.operator!r}; choose from {OPERATORS}")
        if min(self.b, self.i, self.o, self.k, self.h, self.w) < 1:
            raise UsageError("all dimensions must be positive")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.weight_mode not in ("random", "identity"):
            raise UsageError("weight_mode must be 'random' or 'identity'")


@dataclass(frozen=True)
class BenchReport:
    """One result row; ``wall_time_s`` is excluded from CSV so reports stay
    byte-identical across runs."""

    spec: ExperimentSpec
    mse: float
    max_abs_err: float
    saturations: int
    bits_per_element: int
    reduction_factor: float
    wall_time_s: float

    @property
    def operator_label(self) -> str:
        return self.spec.label or self.spec.operator

    def csv_row(self) -> str:
        s = self.spec
        return (f"{self.operator_label},{s.b},{s.i},{s.o},{s.k},{s.h},{s.w},"
                f"{s.trials},{self.mse!r},{self.max_abs_err!r},{self.saturations},"
                f"{self.bits_per_element},{self.reduction_factor!r}")

    def as_dict(self) -> dict:
        s = self.spec
        return {
            "operator": self.operator_label,
            "B": s.b, "I": s.i, "O": s.o, "K": s.k, "H": s.h, "W": s.w,
            "trials": s.trials,
            "mse": self.mse,
            "max_abs_err": self.max_abs_err,
            "saturations": self.saturations,
            "bits_per_element": self.bits_per_element,
            "reduction_factor": self.reduction_factor,
            "wall_time_s": self.wall_time_s,
        }


def reports_to_csv(reports: list[BenchReport]) -> str:
    return "\n".join([CSV_HEADER] + [r.csv_row() for r in reports]) + "\n"


def _trial_seed(seed: int, trial: int) -> int:
    return seed * 1_000_003 + trial


def _rand_floats(rng: random.Random, n: int, low: float, high: float) -> list[float]:
    span = high - low
    return [low + span * rng.random() for _ in range(n)]


def _quantize_all(values: list[float], cfg: ScaleConfig) -> list[ScaledInt]:
    return [quantize(v, cfg) for v in values]


def _qtensor(shape: tuple[int, ...], values: list[float], cfg: ScaleConfig) -> QTensor:
    return QTensor(shape, tuple(_quantize_all(values, cfg)))


def _identity_weight(out_f: int, in_f: int) -> QTensor:
    if out_f != in_f:
        raise UsageError("identity weights need matching input/output sizes")
    one = ScaledInt(1, 0)
    zero = ScaledInt(0)
    return QTensor((out_f, in_f),
                   tuple(one if r == c else zero for r in range(out_f) for c in range(in_f)))


def _run_trial(spec: ExperimentSpec, cfg: ScaleConfig, rng: random.Random,
               sat: SaturationCounter, fixed_input: FTensor | None,
               gelu_variant: str | None) -> tuple[QTensor, FTensor]:
    op = spec.operator
    if op in ("conv2d", "depthwise-conv2d"):
        depthwise = op == "depthwise-conv2d"
        cspec = ConvSpec(spec.i, spec.o, spec.k, depthwise=depthwise)
        in_shape = (spec.b, spec.i, spec.h, spec.w)
        w_ch = 1 if depthwise else spec.i
        w_shape = (spec.o, w_ch, spec.k, spec.k)
        if fixed_input is not None:
            if fixed_input.shape != in_shape:
                raise UsageError(f"input file shape {fixed_input.shape} != {in_shape}")
            x = _qtensor(in_shape, list(fixed_input.data), cfg)
        else:
            x = _qtensor(in_shape, _rand_floats(rng, _count(in_shape),
                                                spec.input_low, spec.input_high), cfg)
        w = _qtensor(w_shape, _rand_floats(rng, _count(w_shape),
                                           spec.weight_low, spec.weight_high), cfg)
        bias = _qtensor((spec.o,), _rand_floats(rng, spec.o,
                                                spec.weight_low, spec.weight_high), cfg)
        fn = depthwise_conv2d if depthwise else conv2d
        q_out = fn(x, w, bias, cspec, cfg, sat)
        f_out = ref.ref_conv2d(ref.dequantize_tensor(x), ref.dequantize_tensor(w),
                               ref.dequantize_tensor(bias), cspec)
        return q_out, f_out

    if op == "linear":
        rows = spec.h * spec.w
        in_shape = (rows, spec.i)
        if fixed_input is not None:
            if fixed_input.shape != in_shape:
                raise UsageError(f"input file shape {fixed_input.shape} != {in_shape}")
            x = _qtensor(in_shape, list(fixed_input.data), cfg)
        else:
            x = _qtensor(in_shape, _rand_floats(rng, rows * spec.i,
                                                spec.input_low, spec.input_high), cfg)
        if spec.weight_mode == "identity":
            w = _identity_weight(spec.o, spec.i)
            bias = QTensor((spec.o,), (ScaledInt(0),) * spec.o)
        else:
            w = _qtensor((spec.o, spec.i), _rand_floats(rng, spec.o * spec.i,
                                                        spec.weight_low, spec.weight_high), cfg)
            bias = _qtensor((spec.o,), _rand_floats(rng, spec.o,
                                                    spec.weight_low, spec.weight_high), cfg)
        q_out = linear(x, w, bias, cfg, sat)
        f_out = ref.ref_linear(ref.dequantize_tensor(x), ref.dequantize_tensor(w),
                               ref.dequantize_tensor(bias))
        return q_out, f_out

    n = spec.h * spec.w
    if fixed_input is not None:
        if _count(fixed_input.shape) != n:
            raise UsageError(f"input file has {_count(fixed_input.shape)} elements, need {n}")
        values = list(fixed_input.data)
    else:
        values = _rand_floats(rng, n, spec.input_low, spec.input_high)
    x = _qtensor((n,), values, cfg)
    xd = ref.dequantize_tensor(x)

    if op == "layer-norm":
        gamma = QTensor((n,), tuple(quantize(1.0, cfg) for _ in range(n)))
        beta = QTensor((n,), (ScaledInt(0),) * n)
        params = LayerNormParams(gamma, beta, ScaledInt(1, cfg.scale_max))
        q_out = layer_norm(x, params, cfg, sat)
        f_out = ref.ref_layer_norm(xd, [1.0] * n, [0.0] * n,
                                   dequantize(params.eps))
        return q_out, f_out

    if op == "softmax":
        q_out = softmax_tensor(x, cfg, sat)
        return q_out, FTensor((n,), tuple(ref.ref_softmax_series(xd.data)))

    if op == "gelu":
        variant = gelu_variant or cfg.gelu_variant
        q_out = gelu_map(x, cfg, sat, variant)
        return q_out, FTensor((n,), tuple(ref.ref_gelu_exact(v) for v in xd.data))

    raise UsageError(f"unknown operator {op!r}")


def _count(shape: tuple[int, ...]) -> int:
    n = 1
    for d in shape:
        n *= d
    return n


def run_bench(spec: ExperimentSpec, cfg: ScaleConfig,
              fixed_input: FTensor | None = None,
              gelu_variant: str | None = None) -> BenchReport:
    """Run one experiment, pooling squared error over all trials."""
    start = time.perf_counter()
    sat = SaturationCounter()
    sq_sum = 0.0
    count = 0
    worst = 0.0
    for t in range(spec.trials):
        rng = random.Random(_trial_seed(spec.seed, t))
        q_out, f_out = _run_trial(spec, cfg, rng, sat, fixed_input, gelu_variant)
        if q_out.shape != f_out.shape:
            raise ShapeError("quantized and reference outputs disagree on shape")
        for qe, fe in zip(q_out.data, f_out.data):
            diff = dequantize(qe) - fe
            sq_sum += diff * diff
            if abs(diff) > worst:
                worst = abs(diff)
        count += len(f_out.data)
    return BenchReport(
        spec=spec,
        mse=sq_sum / count,
        max_abs_err=worst,
        saturations=sat.count,
        bits_per_element=cfg.bits_per_element,
        reduction_factor=cfg.reduction_factor,
        wall_time_s=time.perf_counter() - start,
    )


def suite_specs(seed: int = 0, trials: int = 25, side: int = 16) -> list[tuple[ExperimentSpec, str | None]]:
    """Desk-scale MSE regression rows (operator spec, gelu variant override)."""
    base = dict(b=1, k=1, h=side, w=side, trials=trials, seed=seed)
    rows: list[tuple[ExperimentSpec, str | None]] = [
        (ExperimentSpec("conv2d", i=3, o=3, **base), None),
        (ExperimentSpec("conv2d", i=3, o=9, **base), None),
        (ExperimentSpec("conv2d", i=3, o=1, **base), None),
        (ExperimentSpec("layer-norm", i=1, o=1, **base), None),
        (ExperimentSpec("depthwise-conv2d", i=3, o=3, **base), None),
        (ExperimentSpec("depthwise-conv2d", i=3, o=9, **base), None),
        (ExperimentSpec("linear", i=3, o=9, **base), None),
        (ExperimentSpec("linear", i=3, o=1, **base), None),
        (ExperimentSpec("linear", i=3, o=3, **base), None),
        (ExperimentSpec("softmax", i=1, o=1, **base), None),
        (ExperimentSpec("gelu", i=1, o=1, label="gelu[series-cubed]", **base),
         GELU_SERIES_CUBED),
        (ExperimentSpec("gelu", i=1, o=1, label="gelu[series-linear]", **base),
         GELU_SERIES_LINEAR),
    ]
    return rows


def run_suite(cfg: ScaleConfig, seed: int = 0, trials: int = 25,
              side: int = 16) -> list[BenchReport]:
    return [run_bench(spec, cfg, gelu_variant=variant)
            for spec, variant in suite_specs(seed, trials, side)]


@dataclass(frozen=True)
class DivSweepReport:
    pairs: int
    exact: int
    divisible_inexact: int
    max_rel_err: float
    mean_rel_err: float
    worst_dividend: int
    worst_divisor: int

    def csv(self) -> str:
        header = ("pairs,exact,divisible_inexact,max_rel_err,mean_rel_err,"
                  "worst_dividend,worst_divisor")
        row = (f"{self.pairs},{self.exact},{self.divisible_inexact},"
               f"{self.max_rel_err!r},{self.mean_rel_err!r},"
               f"{self.worst_dividend},{self.worst_divisor}")
        return header + "\n" + row + "\n"

    def as_dict(self) -> dict:
        return {
            "pairs": self.pairs,
            "exact": self.exact,
            "divisible_inexact": self.divisible_inexact,
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "worst_dividend": self.worst_dividend,
            "worst_divisor": self.worst_divisor,
        }


def _to_fraction(q: ScaledInt) -> Fraction:
    mag = Fraction(q.magnitude, 1 << q.scale) if q.scale >= 0 else Fraction(q.magnitude << -q.scale)
    return -mag if q.negative else mag


def div_sweep(cfg: ScaleConfig) -> DivSweepReport:
    """Exhaustive quotient check over every magnitude pair at scale 0,
    scored with exact rational arithmetic."""
    top = cfg.max_magnitude
    worst = Fraction(0)
    worst_pair = (1, 1)
    total = Fraction(0)
    exact = 0
    divisible_inexact = 0
    pairs = 0
    for a in range(1, top + 1):
        qa = ScaledInt(a)
        for b in range(1, top + 1):
            got = _to_fraction(scale_div(qa, ScaledInt(b), cfg))
            truth = Fraction(a, b)
            rel = abs(truth - got) / truth
            pairs += 1
            total += rel
            if rel == 0:
                exact += 1
            elif a % b == 0:
                divisible_inexact += 1
            if rel > worst:
                worst = rel
                worst_pair = (a, b)
    return DivSweepReport(
        pairs=pairs,
        exact=exact,
        divisible_inexact=divisible_inexact,
        max_rel_err=float(worst),
        mean_rel_err=float(total / pairs),
        worst_dividend=worst_pair[0],
        worst_divisor=worst_pair[1],
    )


def save_tensor(path: str, tensor: FTensor | QTensor) -> None:
    """Write a tensor file: ``{"shape": [...], "kind": "f64"|"scaled", "data": [...]}``
    where scaled data holds ``[signed_int, scale]`` pairs."""
    if isinstance(tensor, QTensor):
        payload = {
            "shape": list(tensor.shape),
            "kind": "scaled",
            "data": [[e.signed_magnitude, e.scale] for e in tensor.data],
        }
    else:
        payload = {"shape": list(tensor.shape), "kind": "f64", "data": list(tensor.data)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_tensor(path: str, cfg: ScaleConfig) -> FTensor | QTensor:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        shape = tuple(int(d) for d in payload["shape"])
        kind = payload["kind"]
        data = payload["data"]
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read tensor file {path}: {exc}") from exc
    if kind == "f64":
        return FTensor(shape, tuple(float(v) for v in data))
    if kind == "scaled":
        elements = []
        for pair in data:
            value, scale = int(pair[0]), int(pair[1])
            if abs(value) > cfg.max_magnitude:
                raise RangeError(f"stored integer {value} exceeds +/-{cfg.max_magnitude}")
            if not cfg.scale_min <= scale <= cfg.scale_max:
                raise RangeError(f"scale {scale} outside [{cfg.scale_min}, {cfg.scale_max}]")
            elements.append(ScaledInt.from_signed(value, scale))
        return QTensor(shape, tuple(elements))
    raise UsageError(f"unknown tensor kind {kind!r}")


def memory_report(cfg: ScaleConfig) -> dict:
    return {
        "p_bits": cfg.p_bits,
        "scale_bits": cfg.scale_bits,
        "div_t_max": cfg.div_t_max,
        "newton_iters": cfg.newton_iters,
        "gelu_variant": cfg.gelu_variant,
        "bits_per_element": cfg.bits_per_element,
        "reduction_factor": cfg.reduction_factor,
    }
