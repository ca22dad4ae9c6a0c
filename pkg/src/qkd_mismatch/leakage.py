"""Eve's information about the sifted key from her time-shift labels."""

from __future__ import annotations

import numpy as np

from .channel import EveStrategy
from .detector import DetectorPair, logical_curves
from .protocol import Mode, ReceiverConfig, outcome_table


class NoSiftedEvents(ValueError):
    """The strategy never produces a sifted event."""


def logical_outcomes(pair: DetectorPair, receiver: ReceiverConfig, shifts_ps, transmittance: float = 1.0) -> np.ndarray:
    """Sifted probability per pulse, indexed ``[shift, basis, logical_bit]``.

    Uses the logical-detector model: the receiver is replaced by a two-state
    receiver whose detectors are the logical curves of ``receiver.mode``.
    """
    logical = logical_curves(pair, receiver.mode)
    table = outcome_table(logical, receiver.with_mode(Mode.TWO_STATE), shifts_ps, transmittance)
    return table.sum(axis=2)


def conditional_mutual_information(joint: np.ndarray) -> float:
    """I(L; S | B) in bits for an unnormalised joint ``joint[s, b, l]``."""
    joint = np.asarray(joint, dtype=float)
    total = joint.sum()
    if total <= 0:
        raise NoSiftedEvents("joint distribution has no mass")
    p = joint / total
    p_sb = p.sum(axis=2, keepdims=True)
    p_bl = p.sum(axis=0, keepdims=True)
    p_b = p.sum(axis=(0, 2), keepdims=True)
    mask = p > 0
    num = p * p_b
    den = p_sb * p_bl
    terms = np.zeros_like(p)
    terms[mask] = p[mask] * np.log2(num[mask] / den[mask])
    return max(0.0, float(terms.sum()))


def eve_information(pair: DetectorPair, receiver: ReceiverConfig, strategy: EveStrategy) -> float:
    """Mutual information between the logical sifted bit and Eve's shift label.

    Eve learns the basis and which pulses were sifted from public discussion
    and knows her own shift per pulse, so the information is conditioned on
    the basis.  Computed exactly from the click model.
    """
    branches = strategy.branches()
    shifts = [s for s, _ in branches]
    weights = np.array([w for _, w in branches])
    table = logical_outcomes(pair, receiver, shifts, strategy.channel_transmittance)
    joint = weights[:, None, None] * table
    if joint.sum() <= 0:
        raise NoSiftedEvents("strategy yields no sifted events")
    if len(branches) == 1:
        return 0.0
    return conditional_mutual_information(joint)


def plugin_information(labels: np.ndarray, bases: np.ndarray, bits: np.ndarray) -> float:
    """Plug-in estimate of I(bit; label | basis) from sifted samples."""
    joint = np.zeros((int(labels.max()) + 1, 2, 2))
    np.add.at(joint, (labels, bases, bits), 1.0)
    return conditional_mutual_information(joint)
