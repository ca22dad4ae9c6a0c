"""Phase-encoding BB84: preparation, demodulation, detection and sifting.

Interference follows the sum rule: a total phase ``phi_A + phi_B`` of 0 sends
the photon to physical detector 0 and a total of pi sends it to detector 1.
Both parties draw phases from ``bit * pi + (basis == X) * pi / 2``; for Bob
the "bit" is his flip choice, which is fixed to 0 in two-state mode.

With Bob's nominal X phase of pi/2, Alice's X0 state lands on detector 1, so
the X basis reads bits with an inverted detector reference.  The reference is
derived from the phase constants in :func:`reference_detector`.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import EveStrategy, sample_channel
from .detector import DetectorPair, Mode
from .stats import CountsSummary

Z, X = 0, 1
BASIS_NAMES = ("Z", "X")
HALF_PI = 0.5 * math.pi


def encoded_phase(bit: int, basis: int) -> float:
    return bit * math.pi + basis * HALF_PI


def reference_detector(basis: int) -> int:
    """Detector hit by bit 0 of ``basis`` when Bob applies his flip-0 phase."""
    total = (encoded_phase(0, basis) + encoded_phase(0, basis)) % (2 * math.pi)
    return 0 if math.isclose(total, 0.0, abs_tol=1e-12) or math.isclose(total, 2 * math.pi) else 1


REFERENCE = (reference_detector(Z), reference_detector(X))


class Click(str, enum.Enum):
    NONE = "none"
    DET0 = "det0"
    DET1 = "det1"
    BOTH = "both"


@dataclass(frozen=True)
class AliceChoice:
    bit: int
    basis: int

    def __post_init__(self):
        if self.bit not in (0, 1) or self.basis not in (Z, X):
            raise ValueError("bit and basis must be 0 or 1")

    @property
    def phase(self) -> float:
        return encoded_phase(self.bit, self.basis)

    @property
    def label(self) -> str:
        return f"{BASIS_NAMES[self.basis]}{self.bit}"


@dataclass(frozen=True)
class BobChoice:
    mode: Mode
    basis: int
    flip: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.basis not in (Z, X) or self.flip not in (0, 1):
            raise ValueError("basis and flip must be 0 or 1")
        if self.mode is Mode.TWO_STATE and self.flip:
            raise ValueError("two-state demodulation has no flip")

    @property
    def phase(self) -> float:
        return encoded_phase(self.flip, self.basis)


@dataclass(frozen=True)
class DriveWaveform:
    """Normalised drive amplitude of Bob's phase modulator versus timing offset.

    ``ideal-square`` is 1 everywhere.  ``raised-cosine-edges`` stays at 1 for
    ``|shift| <= plateau_ps`` and then falls to 0 along a raised cosine of
    length ``rise_fall_ps``.  The waveform repeats every clock period.
    """

    shape: str = "ideal-square"
    rise_fall_ps: float = 0.0
    plateau_ps: float = 0.0

    def __post_init__(self):
        if self.shape not in ("ideal-square", "raised-cosine-edges"):
            raise ValueError(f"unknown waveform shape {self.shape!r}")
        if self.rise_fall_ps < 0 or self.plateau_ps < 0:
            raise ValueError("rise_fall_ps and plateau_ps must be non-negative")
        if self.shape == "raised-cosine-edges" and self.rise_fall_ps == 0:
            raise ValueError("raised-cosine-edges needs rise_fall_ps > 0")

    def amplitude(self, shift_ps, period_ps: float):
        s = np.asarray(shift_ps, dtype=float)
        if self.shape == "ideal-square":
            v = np.ones_like(s)
        else:
            d = np.abs((s + 0.5 * period_ps) % period_ps - 0.5 * period_ps)
            x = np.clip((d - self.plateau_ps) / self.rise_fall_ps, 0.0, 1.0)
            v = 0.5 * (1.0 + np.cos(np.pi * x))
        return float(v) if v.ndim == 0 else v


# Edge length that puts the two-state QBER of the default mismatched pair at
# the abort threshold a quarter period away from the arrival time.
DEFAULT_DROOP = DriveWaveform("raised-cosine-edges", 471.0)


@dataclass(frozen=True)
class ReceiverConfig:
    """Bob's receiver settings.

    ``arrival_ps`` is the nominal photon arrival time on the detector curves
    (default: the bin at half the clock period).  ``deadtime_cycles`` discards clicks for
    that many clock cycles after any accepted click; the exact enumerator
    ignores it.
    """

    mode: Mode = Mode.TWO_STATE
    waveform: DriveWaveform = field(default_factory=DriveWaveform)
    visibility: float = 0.94
    deadtime_cycles: int = 0
    arrival_ps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        if self.deadtime_cycles < 0:
            raise ValueError("deadtime_cycles must be non-negative")

    def arrival(self, pair: DetectorPair) -> float:
        return (pair.n_bins // 2) * pair.dt_ps if self.arrival_ps is None else self.arrival_ps

    def with_mode(self, mode: Mode | str) -> ReceiverConfig:
        return replace(self, mode=Mode(mode))


def choose_alice(rng: np.random.Generator) -> AliceChoice:
    bit, basis = rng.integers(0, 2, size=2)
    return AliceChoice(int(bit), int(basis))


def choose_bob(mode: Mode | str, rng: np.random.Generator) -> BobChoice:
    mode = Mode(mode)
    basis = int(rng.integers(0, 2))
    flip = int(rng.integers(0, 2)) if mode is Mode.FOUR_STATE else 0
    return BobChoice(mode, basis, flip)


def effective_phase(bob: BobChoice, waveform: DriveWaveform, shift_ps: float, period_ps: float = 1000.0) -> float:
    """Bob's applied phase after amplitude droop at the given timing offset."""
    return bob.phase * waveform.amplitude(shift_ps, period_ps)


def _click_table(r0, r1, eta0, eta1, dark0, dark1, independent):
    # r0 and r1 are passed separately so that swapping them is exact
    if independent:
        q0 = 1.0 - (1.0 - r0 * eta0) * (1.0 - dark0)
        q1 = 1.0 - (1.0 - r1 * eta1) * (1.0 - dark1)
        return q0 * (1.0 - q1), q1 * (1.0 - q0), q0 * q1, (1.0 - q0) * (1.0 - q1)
    ph0 = r0 * eta0
    ph1 = r1 * eta1
    lost = 1.0 - ph0 - ph1
    only0 = ph0 * (1.0 - dark1) + lost * dark0 * (1.0 - dark1)
    only1 = ph1 * (1.0 - dark0) + lost * dark1 * (1.0 - dark0)
    both = ph0 * dark1 + ph1 * dark0 + lost * dark0 * dark1
    none = lost * (1.0 - dark0) * (1.0 - dark1)
    return only0, only1, both, none


def click_probabilities(
    phi_a: float,
    phi_b_eff: float,
    visibility: float,
    eta0: float,
    eta1: float,
    dark0: float = 0.0,
    dark1: float = 0.0,
    *,
    independent: bool = False,
):
    """Probabilities of (det0 only, det1 only, both, none) for one pulse.

    The photon is routed to detector 0 with probability
    ``(1 + V cos(phi_a + phi_b_eff)) / 2`` and detected there with that
    detector's efficiency.  By default a single photon can fire at most one
    detector; ``independent=True`` instead treats the two detectors as
    independent Bernoulli trials with probabilities ``r_i * eta_i``.  Dark
    counts are OR-ed in independently.
    """
    for name, val in (("visibility", visibility), ("eta0", eta0), ("eta1", eta1), ("dark0", dark0), ("dark1", dark1)):
        if np.any(np.asarray(val) < 0.0) or np.any(np.asarray(val) > 1.0):
            raise ValueError(f"{name} must lie in [0, 1]")
    c = visibility * np.cos(np.asarray(phi_a) + np.asarray(phi_b_eff))
    r0 = 0.5 * (1.0 + c)
    r1 = 0.5 * (1.0 - c)
    out = _click_table(r0, r1, eta0, eta1, dark0, dark1, independent)
    if all(np.ndim(o) == 0 for o in out):
        return tuple(float(o) for o in out)
    return out


def sift(alice: AliceChoice, bob: BobChoice, click: Click | str):
    """Basis sifting and the physical-to-logical bit map.

    Returns ``(sifted, logical_bit, error)``; the last two are ``None`` when the
    event is discarded.  Double clicks must be arbitrated beforehand.
    """
    click = Click(click)
    if click is Click.BOTH:
        raise ValueError("double clicks must be arbitrated before sifting")
    if click is Click.NONE or alice.basis != bob.basis:
        return False, None, None
    detector = 0 if click is Click.DET0 else 1
    physical_bit = detector ^ REFERENCE[bob.basis]
    logical_bit = physical_bit ^ bob.flip
    return True, logical_bit, logical_bit != alice.bit


def arbitrate(click: Click | str, rng: np.random.Generator) -> Click:
    """Resolve a double click to a uniformly random single detector."""
    click = Click(click)
    if click is Click.BOTH:
        return Click.DET0 if rng.integers(0, 2) == 0 else Click.DET1
    return click


@dataclass(frozen=True)
class PulseRecord:
    alice: AliceChoice
    eve_shift_ps: float
    bob: BobChoice
    click: Click
    sifted: bool
    logical_bit: int | None = None
    error: bool | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["bob"]["mode"] = self.bob.mode.value
        d["click"] = self.click.value
        return json.dumps(d, sort_keys=True)


def write_records(records, fh) -> None:
    """Line-delimited JSON, one pulse per line."""
    for rec in records:
        fh.write(rec.to_json() + "\n")


# -- exact per-pulse outcome probabilities ----------------------------------


def outcome_table(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    shifts_ps,
    transmittance: float = 1.0,
    *,
    independent: bool = False,
) -> np.ndarray:
    """Exact probability per sent pulse of each sifted outcome.

    Returns an array ``P[s, basis, alice_bit, logical_bit]`` for every shift in
    ``shifts_ps``.  Alice's four states, Bob's basis and (in four-state mode)
    his flip are averaged with uniform priors; double clicks are split evenly
    between the two detectors.  Deadtime is not modelled here.
    """
    shifts = np.atleast_1d(np.asarray(shifts_ps, dtype=float))
    t = receiver.arrival(pair) + shifts
    eta0 = pair.apd0.at(t) * transmittance
    eta1 = pair.apd1.at(t) * transmittance
    d0, d1 = pair.darks
    v = receiver.waveform.amplitude(shifts, pair.period_ps)
    flips = (0, 1) if receiver.mode is Mode.FOUR_STATE else (0,)
    weight = 0.25 * 0.5 / len(flips)
    V = receiver.visibility
    out = np.zeros((shifts.size, 2, 2, 2))
    for basis in (Z, X):
        for flip in flips:
            # Alice's bit enters only as a sign on the interference term
            c = V * np.cos(basis * HALF_PI + encoded_phase(flip, basis) * v)
            for bit in (0, 1):
                cb = -c if bit else c
                only0, only1, both, _ = _click_table(
                    0.5 * (1.0 + cb), 0.5 * (1.0 - cb), eta0, eta1, d0, d1, independent
                )
                for det, p in ((0, only0 + 0.5 * both), (1, only1 + 0.5 * both)):
                    logical_bit = det ^ REFERENCE[basis] ^ flip
                    out[:, basis, bit, logical_bit] += weight * p
    return out


def expected_rates(table: np.ndarray) -> dict[str, np.ndarray]:
    """Per-pulse sifted, error and logical-detector probabilities from :func:`outcome_table`."""
    sifted = table.sum(axis=(1, 2, 3))
    errors = table[:, :, 0, 1].sum(axis=1) + table[:, :, 1, 0].sum(axis=1)
    # logical detector = logical bit XOR basis reference
    c0 = np.zeros_like(sifted)
    for basis in (Z, X):
        c0 += table[:, basis, :, REFERENCE[basis]].sum(axis=1)
    return {"sifted": sifted, "errors": errors, "c0": c0, "c1": sifted - c0}


def predicted_qber(pair: DetectorPair, receiver: ReceiverConfig, shifts_ps) -> np.ndarray:
    r = expected_rates(outcome_table(pair, receiver, shifts_ps))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r["sifted"] > 0, r["errors"] / r["sifted"], 0.5)


def predicted_bias(pair: DetectorPair, receiver: ReceiverConfig, shifts_ps) -> np.ndarray:
    r = expected_rates(outcome_table(pair, receiver, shifts_ps))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r["sifted"] > 0, (r["c0"] - r["c1"]) / r["sifted"], 0.0)


# -- Monte Carlo -------------------------------------------------------------


def _apply_deadtime(click0: np.ndarray, click1: np.ndarray, cycles: int) -> None:
    idx = np.flatnonzero(click0 | click1)
    blocked_until = -1
    for i in idx:
        if i <= blocked_until:
            click0[i] = click1[i] = False
        else:
            blocked_until = i + cycles


def run_session(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    eve: EveStrategy,
    n_pulses: int,
    rng: np.random.Generator,
    *,
    record: bool = False,
    trace: bool = False,
    independent: bool = False,
):
    """Simulate ``n_pulses`` pulses end to end.

    Returns ``(CountsSummary, records)``; ``records`` is ``None`` unless
    ``record`` is set, in which case it is a list of :class:`PulseRecord`.
    With ``trace`` it is instead a dict of arrays over the sifted pulses
    (``label``, ``basis``, ``alice_bit``, ``logical_bit``).
    The sequence of random draws is fixed, so equal seeds give equal results.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be at least 1")
    n = int(n_pulses)
    a_bit = rng.integers(0, 2, n, dtype=np.int8)
    a_basis = rng.integers(0, 2, n, dtype=np.int8)
    shift, label, transmitted = sample_channel(eve, n, rng)
    b_basis = rng.integers(0, 2, n, dtype=np.int8)
    if receiver.mode is Mode.FOUR_STATE:
        flip = rng.integers(0, 2, n, dtype=np.int8)
    else:
        flip = np.zeros(n, dtype=np.int8)

    v = receiver.waveform.amplitude(shift, pair.period_ps)
    phi_a = a_bit * math.pi + a_basis * HALF_PI
    phi_b = (flip * math.pi + b_basis * HALF_PI) * v
    r0 = 0.5 * (1.0 + receiver.visibility * np.cos(phi_a + phi_b))
    t = receiver.arrival(pair) + shift
    eta0 = pair.apd0.at(t) * transmitted
    eta1 = pair.apd1.at(t) * transmitted

    u_route = rng.random(n)
    u_det = rng.random(n)
    if independent:
        ph0 = u_route < r0 * eta0
        ph1 = u_det < (1.0 - r0) * eta1
    else:
        to0 = u_route < r0
        ph0 = to0 & (u_det < eta0)
        ph1 = ~to0 & (u_det < eta1)
    d0, d1 = pair.darks
    click0 = ph0 | (rng.random(n) < d0)
    click1 = ph1 | (rng.random(n) < d1)
    coin = rng.integers(0, 2, n, dtype=np.int8)
    if receiver.deadtime_cycles:
        _apply_deadtime(click0, click1, receiver.deadtime_cycles)

    clicked = click0 | click1
    det = np.where(click0 & click1, coin, np.where(click1, 1, 0)).astype(np.int8)
    sifted = clicked & (a_basis == b_basis)
    ref = np.asarray(REFERENCE, dtype=np.int8)[b_basis]
    logical_det = det ^ flip
    logical_bit = logical_det ^ ref
    error = sifted & (logical_bit != a_bit)

    n_sift = int(sifted.sum())
    c0 = int((sifted & (logical_det == 0)).sum())
    summary = CountsSummary(c0, n_sift - c0, n_sift, int(error.sum()), n)
    if trace:
        return summary, {
            "label": np.asarray(label)[sifted],
            "basis": b_basis[sifted].astype(np.intp),
            "alice_bit": a_bit[sifted].astype(np.intp),
            "logical_bit": logical_bit[sifted].astype(np.intp),
        }
    if not record:
        return summary, None

    records = []
    for i in range(n):
        if click0[i] and click1[i]:
            click = Click.BOTH
        elif click0[i]:
            click = Click.DET0
        elif click1[i]:
            click = Click.DET1
        else:
            click = Click.NONE
        s = bool(sifted[i])
        records.append(
            PulseRecord(
                AliceChoice(int(a_bit[i]), int(a_basis[i])),
                float(shift[i]),
                BobChoice(receiver.mode, int(b_basis[i]), int(flip[i])),
                click,
                s,
                int(logical_bit[i]) if s else None,
                bool(error[i]) if s else None,
            )
        )
    return summary, records


def calibrate_droop(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    shift_ps: float,
    target_qber: float,
    bracket: tuple[float, float] = (1.0, 2000.0),
    tol_ps: float = 1e-6,
) -> DriveWaveform:
    """Raised-cosine edge length giving ``target_qber`` at ``shift_ps``.

    Bisection on the predicted QBER, which falls as the edges lengthen.  The
    plateau of ``receiver.waveform`` is kept.
    """
    plateau = receiver.waveform.plateau_ps

    def excess(rise_fall):
        wf = DriveWaveform("raised-cosine-edges", rise_fall, plateau)
        return float(predicted_qber(pair, replace(receiver, waveform=wf), [shift_ps])[0]) - target_qber

    lo, hi = bracket
    f_lo, f_hi = excess(lo), excess(hi)
    if f_lo * f_hi > 0:
        raise ValueError("target QBER is not bracketed by the edge-length interval")
    while hi - lo > tol_ps:
        mid = 0.5 * (lo + hi)
        f_mid = excess(mid)
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return DriveWaveform("raised-cosine-edges", hi, plateau)
