"""Eve's time-shift channel: per-pulse delay selection and loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EveStrategy:
    """Time-shift strategy.

    ``kind`` is ``"none"``, ``"fixed"`` (always ``t1_ps``) or ``"two-point"``
    (``t1_ps`` with probability ``p1``, else ``t2_ps``).
    """

    kind: str = "none"
    t1_ps: float = 0.0
    t2_ps: float = 0.0
    p1: float = 1.0
    channel_transmittance: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "two-point"):
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if not 0.0 <= self.p1 <= 1.0:
            raise ValueError("p1 must lie in [0, 1]")
        if not 0.0 < self.channel_transmittance <= 1.0:
            raise ValueError("channel_transmittance must lie in (0, 1]")

    @classmethod
    def none(cls, channel_transmittance: float = 1.0) -> EveStrategy:
        return cls("none", channel_transmittance=channel_transmittance)

    @classmethod
    def fixed(cls, shift_ps: float, channel_transmittance: float = 1.0) -> EveStrategy:
        return cls("fixed", shift_ps, shift_ps, 1.0, channel_transmittance)

    @classmethod
    def two_point(
        cls, t1_ps: float, t2_ps: float, p1: float, channel_transmittance: float = 1.0
    ) -> EveStrategy:
        return cls("two-point", t1_ps, t2_ps, p1, channel_transmittance)

    def branches(self) -> list[tuple[float, float]]:
        """(shift, probability) pairs with non-zero probability."""
        if self.kind == "none":
            return [(0.0, 1.0)]
        if self.kind == "fixed":
            return [(self.t1_ps, 1.0)]
        out = [(self.t1_ps, self.p1), (self.t2_ps, 1.0 - self.p1)]
        return [b for b in out if b[1] > 0.0]


def sample_channel(strategy: EveStrategy, n: int, rng: np.random.Generator):
    """Per-pulse shifts and transmission flags for ``n`` pulses.

    Returns ``(shift_ps, label, transmitted)`` where ``label`` is 0 for the
    first branch and 1 for the second.
    """
    if strategy.kind == "two-point":
        label = (rng.random(n) >= strategy.p1).astype(np.int8)
        shift = np.where(label == 0, strategy.t1_ps, strategy.t2_ps)
    else:
        label = np.zeros(n, dtype=np.int8)
        shift = np.full(n, strategy.t1_ps if strategy.kind == "fixed" else 0.0)
    if strategy.channel_transmittance >= 1.0:
        transmitted = np.ones(n, dtype=bool)
    else:
        transmitted = rng.random(n) < strategy.channel_transmittance
    return shift, label, transmitted


def apply_channel(strategy: EveStrategy, rng: np.random.Generator) -> tuple[float, bool]:
    """Shift and transmission outcome for a single pulse."""
    shift, _, transmitted = sample_channel(strategy, 1, rng)
    return float(shift[0]), bool(transmitted[0])
