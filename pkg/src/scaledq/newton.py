"""Quantized Newton iteration for the inverse square root.

The update ``y <- (3y - x*y^3) / 2`` is evaluated entirely on stored
magnitudes: the cubic term is aligned to the iterate's scale with a single
truncating shift, the subtraction happens on integers, and the halving rounds
half-up.  The very first update instead folds its halving into the scale
(``scale += 1``) so a tiny seed magnitude such as 1 is not wiped out before
the iteration can grow.  After the first step the stored scale only moves
when a magnitude outgrows P bits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    DomainError,
    SaturationCounter,
    ScaleConfig,
    ScaledInt,
    handle_overflow,
)


@dataclass(frozen=True)
class NewtonTrace:
    """Per-iteration record: ``entries[j] == (j, Y_j)`` with ``entries[0]``
    holding the seed, so the trace has ``iters + 1`` rows."""

    input: ScaledInt
    iters: int
    entries: tuple[tuple[int, ScaledInt], ...]

    def __post_init__(self):
        if len(self.entries) != self.iters + 1:
            raise ValueError("trace must hold iters + 1 entries")


def default_seed(cfg: ScaleConfig) -> ScaledInt:
    """Small positive seed 2**-6 (or the finest available if the scale range
    is narrower); small enough to converge for every input of interest."""
    return ScaledInt(1, min(6, cfg.scale_max))


def newton_inv_sqrt(
    x: ScaledInt,
    y0: ScaledInt,
    iters: int,
    cfg: ScaleConfig,
    sat: SaturationCounter | None = None,
) -> tuple[ScaledInt, NewtonTrace]:
    """Iterate toward ``1/sqrt(x)`` from seed ``y0``.

    Requires positive ``x`` and ``y0``; convergence additionally needs
    ``y0 < sqrt(3/x)``, which the default seed satisfies for every input
    down to 2**-10.  Returns the final iterate plus the full trace.
    """
    if x.magnitude == 0 or x.negative:
        raise DomainError("inverse square root needs a positive input")
    if y0.magnitude == 0 or y0.negative:
        raise DomainError("inverse square root needs a positive seed")
    if iters < 0:
        raise DomainError("iteration count must be non-negative")

    y = y0
    entries = [(0, y0)]
    for j in range(iters):
        mag, scale = y.magnitude, y.scale
        if mag == 0:
            entries.append((j + 1, y))
            continue
        shift = 2 * scale + x.scale
        wide = x.magnitude * mag * mag * mag
        cubic = wide >> shift if shift >= 0 else wide << -shift
        d = 3 * mag - cubic
        if d <= 0:
            # Seed violated the convergence bound; pin at zero rather than
            # oscillate with a negative iterate.
            y = ScaledInt(0)
            entries.append((j + 1, y))
            continue
        if j == 0:
            scale += 1
        else:
            d = (d + 1) >> 1
        y = handle_overflow(d, scale, cfg, False, sat)
        entries.append((j + 1, y))
    trace = NewtonTrace(input=x, iters=iters, entries=tuple(entries))
    return y, trace
