"""Count aggregates and the scalar estimators built on them."""

from __future__ import annotations

import math
from dataclasses import dataclass

QBER_ABORT_THRESHOLD = 0.11


class UndefinedQBER(ValueError):
    """No sifted events, so the error rate is undefined."""


@dataclass(frozen=True)
class CountsSummary:
    """Sifted counts for one (shift, mode) point.

    ``c0``/``c1`` count sifted events on logical detector 0/1 (identical to the
    physical detectors in two-state mode).
    """

    c0: int
    c1: int
    sifted: int
    errors: int
    n_pulses: int

    def __post_init__(self):
        if min(self.c0, self.c1, self.errors, self.n_pulses) < 0:
            raise ValueError("counts must be non-negative")
        if self.c0 + self.c1 != self.sifted:
            raise ValueError("c0 + c1 must equal sifted")
        if self.errors > self.sifted:
            raise ValueError("errors cannot exceed sifted")
        if self.sifted > self.n_pulses:
            raise ValueError("sifted cannot exceed n_pulses")

    def __add__(self, other: CountsSummary) -> CountsSummary:
        if not isinstance(other, CountsSummary):
            return NotImplemented
        return CountsSummary(
            self.c0 + other.c0,
            self.c1 + other.c1,
            self.sifted + other.sifted,
            self.errors + other.errors,
            self.n_pulses + other.n_pulses,
        )

    @classmethod
    def empty(cls) -> CountsSummary:
        return cls(0, 0, 0, 0, 0)


def qber(summary: CountsSummary) -> float:
    if summary.sifted == 0:
        raise UndefinedQBER("QBER undefined without sifted events")
    return summary.errors / summary.sifted


def contrast(c0: float, c1: float) -> float:
    """Normalised detection bias (c0 - c1) / (c0 + c1)."""
    total = c0 + c1
    if total <= 0:
        raise ValueError("contrast needs c0 + c1 > 0")
    return (c0 - c1) / total


def bias_contrast(summary: CountsSummary) -> float:
    return contrast(summary.c0, summary.c1)


def abort_check(qber_value: float, threshold: float = QBER_ABORT_THRESHOLD) -> bool:
    """True when the protocol must abort (QBER strictly above threshold)."""
    return qber_value > threshold


def binomial_sigma(count: float, n: float | None = None) -> float:
    """Standard deviation of a count.

    Without ``n`` this is the square-root (Poisson) rule.  With ``n`` trials the
    binomial form ``sqrt(count * (1 - count / n))`` is used.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if n is None:
        return math.sqrt(count)
    if n <= 0 or count > n:
        raise ValueError("need 0 <= count <= n and n > 0")
    return math.sqrt(count * (1.0 - count / n))


def contrast_sigma(c0: float, c1: float) -> float:
    """Propagated uncertainty of :func:`contrast` under square-root count errors."""
    total = c0 + c1
    if total <= 0:
        raise ValueError("contrast needs c0 + c1 > 0")
    return 2.0 * math.sqrt(c0 * c1 / total**3)


def qber_sigma(summary: CountsSummary) -> float:
    e = qber(summary)
    return math.sqrt(e * (1.0 - e) / summary.sifted)
