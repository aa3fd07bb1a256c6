"""Quantized tensor operators built solely from the scaled-integer primitives.

Every operator here performs integer arithmetic only; converting results back
to floating point is the job of the reference/benchmark layer.  Multi-term
sums follow a fixed discipline: compute the maximum scale over the term set,
align every term to it in a wide temporary, add in a fixed order, and
normalize the single wide result once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import (
    ONE,
    ZERO,
    GELU_SERIES_CUBED,
    GELU_SERIES_CUBED_CORRECTED,
    GELU_SERIES_LINEAR,
    SaturationCounter,
    ScaleConfig,
    ScaledInt,
    handle_overflow,
    negate,
    scale_add,
    scale_div,
    scale_mul,
    scale_sub,
    shift_scale,
)
from .newton import default_seed, newton_inv_sqrt


class ShapeError(ValueError):
    """Tensor shapes inconsistent with the requested operation."""


@dataclass(frozen=True)
class QTensor:
    """Shaped, row-major array of scaled integers (one scale per element)."""

    shape: tuple[int, ...]
    data: tuple[ScaledInt, ...]

    def __post_init__(self):
        n = 1
        for d in self.shape:
            n *= d
        if n != len(self.data):
            raise ShapeError(f"shape {self.shape} needs {n} elements, got {len(self.data)}")

    @classmethod
    def build(cls, shape: Sequence[int], elements: Iterable[ScaledInt]) -> "QTensor":
        return cls(tuple(shape), tuple(elements))

    @classmethod
    def filled(cls, shape: Sequence[int], element: ScaledInt) -> "QTensor":
        n = 1
        for d in shape:
            n *= d
        return cls(tuple(shape), (element,) * n)

    @property
    def size(self) -> int:
        return len(self.data)

    def at(self, *idx: int) -> ScaledInt:
        return self.data[flat_index(self.shape, idx)]


@dataclass(frozen=True)
class ConvSpec:
    """Convolution geometry; ``depthwise`` groups input channels so each
    output channel sees exactly one input channel."""

    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    depthwise: bool = False

    def __post_init__(self):
        if self.in_channels < 1 or self.out_channels < 1 or self.kernel < 1:
            raise ShapeError("channel counts and kernel size must be positive")
        if self.stride < 1 or self.padding < 0:
            raise ShapeError("stride must be positive and padding non-negative")
        if self.depthwise and self.out_channels % self.in_channels != 0:
            raise ShapeError("depthwise needs out_channels = in_channels * multiplier")


@dataclass(frozen=True)
class LayerNormParams:
    gamma: QTensor
    beta: QTensor
    eps: ScaledInt = ScaledInt(1, 15)

    def __post_init__(self):
        if self.gamma.shape != self.beta.shape or len(self.gamma.shape) != 1:
            raise ShapeError("gamma and beta must be matching 1-D tensors")


def flat_index(shape: tuple[int, ...], idx: tuple[int, ...]) -> int:
    if len(shape) != len(idx):
        raise ShapeError(f"index {idx} does not match shape {shape}")
    flat = 0
    for dim, i in zip(shape, idx):
        if not 0 <= i < dim:
            raise ShapeError(f"index {idx} out of bounds for shape {shape}")
        flat = flat * dim + i
    return flat


def sum_aligned(
    terms: Sequence[ScaledInt],
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Sum a term set at the maximum scale with one final normalization.

    Zero terms drop out; a single surviving term is returned bit-identical,
    which keeps identity kernels and zero biases exact.
    """
    live = [t for t in terms if t.magnitude]
    if not live:
        return ZERO
    if len(live) == 1:
        return live[0]
    s = max(t.scale for t in live)
    total = 0
    for t in live:
        total += t.signed_magnitude << (s - t.scale)
    if total == 0:
        return ZERO
    return handle_overflow(abs(total), s, cfg, total < 0, sat)


def int_to_scaled(n: int, cfg: ScaleConfig) -> ScaledInt:
    """Non-negative integer as a scaled value (exact while it fits P bits,
    otherwise truncated like any other wide magnitude)."""
    if n < 0:
        raise ShapeError("expected a non-negative count")
    if n == 0:
        return ZERO
    return handle_overflow(n, 0, cfg)


def conv2d(
    x: QTensor,
    weight: QTensor,
    bias: QTensor | None,
    spec: ConvSpec,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """2-D convolution over ``x[B, I, H, W]``.

    Per output element: elementwise products across the kernel window, a
    max-scale-aligned sum per input channel, a second aligned sum across
    channels, then the bias folded in the same way.  Every stage result is
    renormalized before it feeds the next.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"input must be [B, I, H, W], got {x.shape}")
    batch, in_ch, height, width = x.shape
    if in_ch != spec.in_channels:
        raise ShapeError(f"input has {in_ch} channels, spec says {spec.in_channels}")
    out_ch, k = spec.out_channels, spec.kernel
    w_ch = 1 if spec.depthwise else spec.in_channels
    if weight.shape != (out_ch, w_ch, k, k):
        raise ShapeError(f"weight must be {(out_ch, w_ch, k, k)}, got {weight.shape}")
    if bias is not None and bias.shape != (out_ch,):
        raise ShapeError(f"bias must be ({out_ch},), got {bias.shape}")
    h_out = (height + 2 * spec.padding - k) // spec.stride + 1
    w_out = (width + 2 * spec.padding - k) // spec.stride + 1
    if h_out < 1 or w_out < 1:
        raise ShapeError("kernel does not fit the padded input")

    multiplier = out_ch // in_ch if spec.depthwise else 0
    xd, wd = x.data, weight.data
    out: list[ScaledInt] = []
    for b in range(batch):
        for o in range(out_ch):
            channels = [o // multiplier] if spec.depthwise else range(in_ch)
            for oh in range(h_out):
                for ow in range(w_out):
                    per_channel = []
                    for ci, i in enumerate(channels):
                        taps = []
                        for ky in range(k):
                            ih = oh * spec.stride - spec.padding + ky
                            if not 0 <= ih < height:
                                continue
                            for kx in range(k):
                                iw = ow * spec.stride - spec.padding + kx
                                if not 0 <= iw < width:
                                    continue
                                xe = xd[((b * in_ch + i) * height + ih) * width + iw]
                                we = wd[((o * w_ch + ci) * k + ky) * k + kx]
                                taps.append(scale_mul(xe, we, cfg, sat))
                        per_channel.append(sum_aligned(taps, cfg, sat))
                    acc = sum_aligned(per_channel, cfg, sat)
                    if bias is not None:
                        acc = scale_add(acc, bias.data[o], cfg, sat)
                    out.append(acc)
    return QTensor((batch, out_ch, h_out, w_out), tuple(out))


def depthwise_conv2d(
    x: QTensor,
    weight: QTensor,
    bias: QTensor | None,
    spec: ConvSpec,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Grouped convolution with one filter per input channel."""
    if not spec.depthwise:
        spec = ConvSpec(spec.in_channels, spec.out_channels, spec.kernel,
                        spec.stride, spec.padding, depthwise=True)
    return conv2d(x, weight, bias, spec, cfg, sat)


def linear(
    x: QTensor,
    weight: QTensor,
    bias: QTensor | None,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Affine map ``x @ weight.T + bias`` over the trailing axis."""
    if len(weight.shape) != 2:
        raise ShapeError(f"weight must be [O, I], got {weight.shape}")
    out_f, in_f = weight.shape
    if not x.shape or x.shape[-1] != in_f:
        raise ShapeError(f"input trailing dim must be {in_f}, got {x.shape}")
    if bias is not None and bias.shape != (out_f,):
        raise ShapeError(f"bias must be ({out_f},), got {bias.shape}")
    rows = x.size // in_f
    out: list[ScaledInt] = []
    for r in range(rows):
        row = x.data[r * in_f:(r + 1) * in_f]
        for o in range(out_f):
            wrow = weight.data[o * in_f:(o + 1) * in_f]
            acc = sum_aligned(
                [scale_mul(xe, we, cfg, sat) for xe, we in zip(row, wrow)], cfg, sat)
            if bias is not None:
                acc = scale_add(acc, bias.data[o], cfg, sat)
            out.append(acc)
    return QTensor(x.shape[:-1] + (out_f,), tuple(out))


def matmul(
    a: QTensor,
    b: QTensor,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    if len(a.shape) != 2 or len(b.shape) != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    m, k = a.shape
    _, n = b.shape
    out: list[ScaledInt] = []
    for i in range(m):
        arow = a.data[i * k:(i + 1) * k]
        for j in range(n):
            out.append(sum_aligned(
                [scale_mul(arow[t], b.data[t * n + j], cfg, sat) for t in range(k)],
                cfg, sat))
    return QTensor((m, n), tuple(out))


def transpose(a: QTensor) -> QTensor:
    """Index permutation only; no arithmetic."""
    if len(a.shape) != 2:
        raise ShapeError(f"transpose expects a matrix, got {a.shape}")
    m, n = a.shape
    return QTensor((n, m), tuple(a.data[i * n + j] for j in range(n) for i in range(m)))


def layer_norm(
    x: QTensor,
    params: LayerNormParams,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Standardize each trailing-axis vector, then apply the affine pair.

    Mean and (population) variance come from aligned sums and scaled
    division; the inverse square root of ``var + eps`` runs the quantized
    Newton iteration.  A row of identical stored values (equivalently, one
    whose quantized deviations all vanish) short-circuits to beta and never
    consults eps.
    """
    n = x.shape[-1] if x.shape else 0
    if n < 1:
        raise ShapeError("layer_norm needs a non-empty trailing axis")
    if params.gamma.shape != (n,):
        raise ShapeError(f"gamma/beta must be ({n},), got {params.gamma.shape}")
    count = int_to_scaled(n, cfg)
    seed = default_seed(cfg)
    out: list[ScaledInt] = []
    for r in range(x.size // n):
        row = x.data[r * n:(r + 1) * n]
        if all(e == row[0] for e in row[1:]):
            out.extend(params.beta.data)
            continue
        mean = scale_div(sum_aligned(row, cfg, sat), count, cfg, sat)
        devs = [scale_sub(e, mean, cfg, sat) for e in row]
        if all(d.magnitude == 0 for d in devs):
            out.extend(params.beta.data)
            continue
        var = scale_div(
            sum_aligned([scale_mul(d, d, cfg, sat) for d in devs], cfg, sat),
            count, cfg, sat)
        inv_std, _ = newton_inv_sqrt(
            scale_add(var, params.eps, cfg, sat), seed, cfg.newton_iters, cfg, sat)
        for i, d in enumerate(devs):
            scaled = scale_mul(scale_mul(d, inv_std, cfg, sat),
                               params.gamma.data[i], cfg, sat)
            out.append(scale_add(scaled, params.beta.data[i], cfg, sat))
    return QTensor(x.shape, tuple(out))


def softmax(
    xs: Sequence[ScaledInt],
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> list[ScaledInt]:
    """Quadratic-series softmax: ``(1 + x + x^2/2) / sum_j(...)``.

    The numerator polynomial is positive for every real input, so the
    denominator never vanishes.  Halving x^2 is a scale increment, and each
    output is a scaled division of its numerator by the shared denominator.
    """
    if len(xs) < 1:
        raise ShapeError("softmax needs at least one element")
    nums = []
    for xi in xs:
        half_sq = shift_scale(scale_mul(xi, xi, cfg, sat), 1, cfg, sat)
        nums.append(sum_aligned([ONE, xi, half_sq], cfg, sat))
    den = sum_aligned(nums, cfg, sat)
    return [scale_div(ni, den, cfg, sat) for ni in nums]


def softmax_tensor(
    x: QTensor,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Row-wise softmax over the trailing axis."""
    n = x.shape[-1] if x.shape else 0
    if n < 1:
        raise ShapeError("softmax needs a non-empty trailing axis")
    out: list[ScaledInt] = []
    for r in range(x.size // n):
        out.extend(softmax(x.data[r * n:(r + 1) * n], cfg, sat))
    return QTensor(x.shape, tuple(out))


_GELU_LIN = ScaledInt(102, 7)
_GELU_CUB = ScaledInt(18, 9)
_THREE = ScaledInt(3, 0)


def gelu(
    x: ScaledInt,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
    variant: str | None = None,
) -> ScaledInt:
    """Smooth gate ``0.5 * x * (1 + A [, +A^3 | -A^3/3])`` with the dyadic
    series ``A = 102/2^7 * x + 18/2^9 * x^3``.

    ``series-linear`` keeps just ``1 + A``; ``series-cubed`` adds ``A^3``;
    ``series-cubed-corrected`` subtracts ``A^3/3`` instead, the analytic
    continuation of the underlying tanh series.
    """
    variant = variant or cfg.gelu_variant
    x3 = scale_mul(scale_mul(x, x, cfg, sat), x, cfg, sat)
    a = scale_add(scale_mul(_GELU_LIN, x, cfg, sat),
                  scale_mul(_GELU_CUB, x3, cfg, sat), cfg, sat)
    if variant == GELU_SERIES_LINEAR:
        gate = scale_add(ONE, a, cfg, sat)
    else:
        a3 = scale_mul(scale_mul(a, a, cfg, sat), a, cfg, sat)
        if variant == GELU_SERIES_CUBED:
            gate = sum_aligned([ONE, a, a3], cfg, sat)
        elif variant == GELU_SERIES_CUBED_CORRECTED:
            third = scale_div(a3, _THREE, cfg, sat)
            gate = sum_aligned([ONE, a, negate(third)], cfg, sat)
        else:
            raise ValueError(f"unknown gelu variant {variant!r}")
    return shift_scale(scale_mul(x, gate, cfg, sat), 1, cfg, sat)


def gelu_map(
    x: QTensor,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
    variant: str | None = None,
) -> QTensor:
    return QTensor(x.shape, tuple(gelu(e, cfg, sat, variant) for e in x.data))


def relu(x: ScaledInt) -> ScaledInt:
    return ZERO if x.negative else x


def relu_map(x: QTensor) -> QTensor:
    return QTensor(x.shape, tuple(relu(e) for e in x.data))


def _inv_sqrt_of_count(d_m: int, cfg: ScaleConfig,
                       sat: SaturationCounter | None) -> ScaledInt:
    if d_m < 1:
        raise ShapeError("attention head dimension must be positive")
    scaled, _ = newton_inv_sqrt(int_to_scaled(d_m, cfg), default_seed(cfg),
                                cfg.newton_iters, cfg, sat)
    return scaled


def attention(
    q: QTensor,
    k: QTensor,
    v: QTensor,
    d_m: int,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Scaled dot-product attention ``softmax(Q K^T / sqrt(d_m)) V``.

    The ``1/sqrt(d_m)`` factor is computed once per call via the quantized
    Newton iteration and reused across the whole score matrix.
    """
    if q.shape != k.shape or q.shape != v.shape or len(q.shape) != 2:
        raise ShapeError("attention expects matching [T, d] tensors")
    inv_root = _inv_sqrt_of_count(d_m, cfg, sat)
    scores = matmul(q, transpose(k), cfg, sat)
    scaled = QTensor(scores.shape,
                     tuple(scale_mul(e, inv_root, cfg, sat) for e in scores.data))
    weights = softmax_tensor(scaled, cfg, sat)
    return matmul(weights, v, cfg, sat)


def factorized_attention(
    q: QTensor,
    k: QTensor,
    v: QTensor,
    d_m: int,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> QTensor:
    """Linear-complexity attention ``(Q / sqrt(d_m)) (softmax_T(K)^T V)``.

    The key softmax runs over the token axis, independently per feature
    column, so the context matrix is only ``d x d``.
    """
    if q.shape != k.shape or q.shape != v.shape or len(q.shape) != 2:
        raise ShapeError("attention expects matching [T, d] tensors")
    tokens, feats = k.shape
    inv_root = _inv_sqrt_of_count(d_m, cfg, sat)
    cols: list[list[ScaledInt]] = []
    for j in range(feats):
        cols.append(softmax([k.data[t * feats + j] for t in range(tokens)], cfg, sat))
    # cols[j][t] is already softmax(K)^T laid out [feats, tokens]
    sk_t = QTensor((feats, tokens), tuple(e for col in cols for e in col))
    context = matmul(sk_t, v, cfg, sat)
    q_scaled = QTensor(q.shape, tuple(scale_mul(e, inv_root, cfg, sat) for e in q.data))
    return matmul(q_scaled, context, cfg, sat)
