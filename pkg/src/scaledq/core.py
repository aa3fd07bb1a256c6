"""Scaled-integer arithmetic on (magnitude, power-of-two scale) pairs.

A quantity is stored as an unsigned P-bit ``magnitude``, a sign flag and a
small signed ``scale``; it represents ``(-1)**negative * magnitude / 2**scale``.
The four primitives (multiply, add, subtract, divide) and the overflow
normalizer work exclusively with integer add/sub/mul/compare/shift.  Floating
point enters only through :func:`quantize` and :func:`dequantize`, the
conversion layer at the boundary of the integer domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

GELU_SERIES_LINEAR = "series-linear"
GELU_SERIES_CUBED = "series-cubed"
GELU_SERIES_CUBED_CORRECTED = "series-cubed-corrected"
GELU_VARIANTS = (GELU_SERIES_LINEAR, GELU_SERIES_CUBED, GELU_SERIES_CUBED_CORRECTED)


class RangeError(ValueError):
    """Value magnitude not representable under the active format."""


class DivisionByZero(ZeroDivisionError):
    """Scaled division with a zero divisor."""


class DomainError(ValueError):
    """Operand outside an operation's mathematical domain."""


@dataclass(frozen=True)
class ScaleConfig:
    """Global format parameters.

    ``p_bits`` is the magnitude width; ``scale_bits`` sets the stored scale
    range to ``[-2**(scale_bits-1), 2**(scale_bits-1) - 1]``.  ``div_t_max``
    is the minimum number of quotient-extraction rounds in scaled division,
    and ``newton_iters`` the default iteration count for the inverse square
    root.
    """

    p_bits: int = 8
    scale_bits: int = 5
    div_t_max: int = 5
    newton_iters: int = 20
    gelu_variant: str = GELU_SERIES_LINEAR

    def __post_init__(self):
        if self.p_bits < 2:
            raise ValueError("p_bits must be >= 2")
        if self.scale_bits < 2:
            raise ValueError("scale_bits must be >= 2")
        if self.div_t_max < 1:
            raise ValueError("div_t_max must be >= 1")
        if self.newton_iters < 1:
            raise ValueError("newton_iters must be >= 1")
        if self.gelu_variant not in GELU_VARIANTS:
            raise ValueError(f"gelu_variant must be one of {GELU_VARIANTS}")

    @property
    def max_magnitude(self) -> int:
        return (1 << self.p_bits) - 1

    @property
    def scale_min(self) -> int:
        return -(1 << (self.scale_bits - 1))

    @property
    def scale_max(self) -> int:
        return (1 << (self.scale_bits - 1)) - 1

    @property
    def bits_per_element(self) -> int:
        return self.p_bits + self.scale_bits

    @property
    def reduction_factor(self) -> float:
        """Storage reduction versus one FP64 value per element."""
        return 64.0 / self.bits_per_element


DEFAULT_CONFIG = ScaleConfig()


class SaturationCounter:
    """Mutable tally of scale-floor saturation events.

    Passed explicitly by callers that want observability; the primitives
    never share hidden state.
    """

    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def record(self):
        self.count += 1


@dataclass(frozen=True, slots=True)
class ScaledInt:
    """One quantized scalar: ``(-1)**negative * magnitude / 2**scale``.

    Zero is canonical: magnitude 0 forces ``negative=False`` and ``scale=0``.
    """

    magnitude: int
    scale: int = 0
    negative: bool = False

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("magnitude must be unsigned; use from_signed()")
        if self.magnitude == 0 and (self.negative or self.scale != 0):
            object.__setattr__(self, "negative", False)
            object.__setattr__(self, "scale", 0)

    @classmethod
    def from_signed(cls, value: int, scale: int = 0) -> "ScaledInt":
        return cls(abs(value), scale, value < 0)

    @property
    def signed_magnitude(self) -> int:
        return -self.magnitude if self.negative else self.magnitude

    def is_zero(self) -> bool:
        return self.magnitude == 0


ZERO = ScaledInt(0)
ONE = ScaledInt(1, 0)


def negate(q: ScaledInt) -> ScaledInt:
    if q.magnitude == 0:
        return ZERO
    return ScaledInt(q.magnitude, q.scale, not q.negative)


def dequantize(q: ScaledInt) -> float:
    """Exact conversion back to FP64.  Boundary/reference use only; nothing in
    the integer compute path calls this."""
    value = math.ldexp(q.magnitude, -q.scale)
    return -value if q.negative else value


def quantize(value: float, cfg: ScaleConfig = DEFAULT_CONFIG) -> ScaledInt:
    """Encode ``value`` at maximum precision.

    Picks the largest in-range scale whose rounded magnitude still fits in
    P bits; the magnitude rounds half-to-even.  Magnitudes below half the
    finest representable step collapse to canonical zero.
    """
    if math.isnan(value) or math.isinf(value):
        raise RangeError(f"cannot quantize non-finite value {value!r}")
    av = abs(value)
    if av > math.ldexp(cfg.max_magnitude, -cfg.scale_min):
        raise RangeError(f"magnitude {av!r} exceeds representable range")
    if av < math.ldexp(1.0, -cfg.scale_max - 1):
        return ZERO
    # frexp puts av in [0.5, 1) * 2**exp, so av * 2**(p_bits - exp) lands in
    # [2**(p_bits-1), 2**p_bits); one decrement fixes the round-up-to-2**P edge.
    exp = math.frexp(av)[1]
    scale = min(cfg.scale_max, cfg.p_bits - exp)
    magnitude = round(math.ldexp(av, scale))
    if magnitude > cfg.max_magnitude:
        scale -= 1
        magnitude = round(math.ldexp(av, scale))
    if magnitude == 0:
        return ZERO
    return ScaledInt(magnitude, scale, value < 0)


def handle_overflow(
    raw_magnitude: int,
    raw_scale: int,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    negative: bool = False,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Fit a wide intermediate result back into the stored format.

    Oversized magnitudes keep their P most significant bits and the scale
    drops by the number of truncated bits.  A scale above the ceiling is
    resolved by truncating the magnitude toward zero; a scale below the
    floor shifts the magnitude up when the exact value still fits, and
    otherwise saturates at the largest representable value and records the
    event on ``sat``.
    """
    if raw_magnitude == 0:
        return ZERO
    k = raw_magnitude.bit_length() - cfg.p_bits
    if k > 0:
        raw_magnitude >>= k
        raw_scale -= k
    if raw_scale > cfg.scale_max:
        raw_magnitude >>= raw_scale - cfg.scale_max
        if raw_magnitude == 0:
            return ZERO
        raw_scale = cfg.scale_max
    elif raw_scale < cfg.scale_min:
        lift = cfg.scale_min - raw_scale
        if (raw_magnitude << lift) <= cfg.max_magnitude:
            raw_magnitude <<= lift
        else:
            raw_magnitude = cfg.max_magnitude
            if sat is not None:
                sat.record()
        raw_scale = cfg.scale_min
    return ScaledInt(raw_magnitude, raw_scale, negative)


def scale_mul(
    a: ScaledInt,
    b: ScaledInt,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Product: magnitudes multiply, scales add, signs xor."""
    if a.magnitude == 0 or b.magnitude == 0:
        return ZERO
    return handle_overflow(
        a.magnitude * b.magnitude,
        a.scale + b.scale,
        cfg,
        a.negative != b.negative,
        sat,
    )


def scale_add(
    a: ScaledInt,
    b: ScaledInt,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Sum after aligning both operands to the larger scale.

    The finer-scaled operand keeps its bits; the coarser one is shifted left
    into a wide temporary.  Exact cancellation yields canonical zero.
    """
    if a.magnitude == 0:
        return b
    if b.magnitude == 0:
        return a
    s = a.scale if a.scale >= b.scale else b.scale
    total = (a.signed_magnitude << (s - a.scale)) + (b.signed_magnitude << (s - b.scale))
    if total == 0:
        return ZERO
    return handle_overflow(abs(total), s, cfg, total < 0, sat)


def scale_sub(
    a: ScaledInt,
    b: ScaledInt,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Difference, implemented as addition with the subtrahend's sign flipped."""
    return scale_add(a, negate(b), cfg, sat)


def shift_scale(
    q: ScaledInt,
    delta: int,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Multiply by ``2**-delta`` via a scale adjustment (no magnitude bits move
    unless the adjusted scale leaves the stored range)."""
    if q.magnitude == 0:
        return ZERO
    return handle_overflow(q.magnitude, q.scale + delta, cfg, q.negative, sat)


def scale_div(
    a: ScaledInt,
    b: ScaledInt,
    cfg: ScaleConfig = DEFAULT_CONFIG,
    sat: SaturationCounter | None = None,
) -> ScaledInt:
    """Quotient by recursive scaled long division on magnitudes.

    Signs are stripped first and reapplied at the end.  Each round extracts
    ``q, rem = divmod(dividend, divisor)`` and folds ``q`` into a wide
    accumulator at the current effective scale; a remainder smaller than the
    divisor is shifted left just past it before the next extraction, raising
    the effective scale by the shift.  Refinement stops once the remainder is
    exhausted, or once the accumulator has outgrown P bits and at least
    ``div_t_max`` extraction rounds have run; the accumulator then passes
    through :func:`handle_overflow`, so results never overshoot the true
    quotient.
    """
    if b.magnitude == 0:
        raise DivisionByZero("scaled division by zero")
    if a.magnitude == 0:
        return ZERO
    negative = a.negative != b.negative
    dividend = a.magnitude
    divisor = b.magnitude
    s_eff = a.scale - b.scale
    acc = 0
    acc_scale = 0
    rounds = 0
    max_mag = cfg.max_magnitude
    while True:
        if dividend < divisor:
            c = 1
            while (dividend << c) <= divisor:
                c += 1
            dividend <<= c
            s_eff += c
        q, rem = divmod(dividend, divisor)
        if acc == 0:
            acc, acc_scale = q, s_eff
        else:
            acc = (acc << (s_eff - acc_scale)) + q
            acc_scale = s_eff
        rounds += 1
        if rem == 0 or (acc > max_mag and rounds >= cfg.div_t_max):
            break
        dividend = rem
    return handle_overflow(acc, acc_scale, cfg, negative, sat)
