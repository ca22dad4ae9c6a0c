"""Secret key rate under characterised detection-efficiency mismatch.

Eve's time-shift strategy is a probability vector ``q`` over arrival-time
bins.  With only diagonal efficiency matrices, bounding the Procrustean
filter's success probability and the filtered phase error reduces to two
small linear programs over ``q``:

* ``min sum(q * p)``, with ``p`` the per-bin filter success probability;
* ``max (e_phase_obs - sum(q * e * (1 - p))) / sum(q * p)``, a linear-fractional
  program solved through the Charnes-Cooper substitution.  Errors caused by
  the shift itself pass the filter with the bin's success probability; the
  remaining observed errors are assumed to pass it unattenuated.

Both are subject to ``sum(q) == 1``, ``q >= 0`` and
``sum(q * e) <= min(e_bit_obs, e_phase_obs)``, where ``e`` is the error rate
Eve's shift adds on top of the zero-shift operating point.  The inequality
leaves Eve free to top up the error with ordinary noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linprog

from .detector import DetectorPair, Mode, logical_curves, resample_pair
from .protocol import ReceiverConfig, predicted_qber
from .stats import QBER_ABORT_THRESHOLD


class InfeasibleBounds(ValueError):
    """No attack strategy reproduces the observed error rates."""


def binary_entropy(x):
    """H2(x) in bits with 0 log 0 := 0."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("binary entropy needs x in [0, 1]")
    inner = (x > 0) & (x < 1)
    xs = np.where(inner, x, 0.5)
    h = np.where(inner, -xs * np.log2(xs) - (1 - xs) * np.log2(1 - xs), 0.0)
    return float(h) if h.ndim == 0 else h


def static_prefactor(eta0: float, eta1: float) -> float:
    """Key-rate prefactor for a known, time-independent mismatch."""
    if eta0 <= 0 or eta1 <= 0:
        raise ValueError("efficiencies must be positive")
    return min(eta0, eta1) / (eta0 + eta1)


def procrustean_success(eta0, eta1):
    """Per-bin filter success probability ``2 min / (eta0 + eta1)``.

    Bins where both efficiencies vanish give NaN for array input and raise
    for scalar input.
    """
    a = np.asarray(eta0, dtype=float)
    b = np.asarray(eta1, dtype=float)
    total = a + b
    if a.ndim == 0 and b.ndim == 0:
        if total <= 0:
            raise ValueError("no detections possible in this bin")
        return float(2.0 * min(a, b) / total)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, 2.0 * np.minimum(a, b) / total, np.nan)


def secret_key_rate(p_succ: float, e_phase: float, e_bit: float, f_ec: float = 1.10) -> float:
    """Asymptotic secret bits per detected single photon, clamped at zero."""
    value = p_succ * (1.0 - binary_entropy(e_phase)) - f_ec * binary_entropy(e_bit)
    return max(0.0, float(value))


def analytic_phase_bound(p_succ: float, e_phase_obs: float) -> float:
    """Filtered phase error assuming every observed error survives filtering."""
    if p_succ <= 0:
        return 0.5
    return min(0.5, e_phase_obs / p_succ)


@dataclass(frozen=True)
class KeyRateInputs:
    e_bit_obs: float = 0.03
    e_phase_obs: float = 0.03
    f_ec: float = 1.10

    def __post_init__(self):
        for name in ("e_bit_obs", "e_phase_obs"):
            if not 0.0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")
        if self.f_ec < 1.0:
            raise ValueError("f_ec must be at least 1")

    @property
    def error_cap(self) -> float:
        return min(self.e_bit_obs, self.e_phase_obs)


@dataclass(frozen=True)
class Bounds:
    p_succ: float
    e_phase: float
    method: str
    iterations: int


def optimize_bounds(success, error, inputs: KeyRateInputs) -> Bounds:
    """Worst-case filter success and filtered phase error over Eve's strategies.

    Args:
        success: per-bin filter success probability on the feasible bins.
        error: per-bin error rate added by shifting into that bin.
        inputs: observed error rates.

    Raises:
        InfeasibleBounds: no distribution over the bins meets the error cap.
    """
    p = np.asarray(success, dtype=float)
    e = np.asarray(error, dtype=float)
    if p.ndim != 1 or p.shape != e.shape or p.size == 0:
        raise ValueError("success and error must be equal-length non-empty vectors")
    if np.any(~np.isfinite(p)) or np.any((p < 0) | (p > 1)):
        raise ValueError("success probabilities must lie in [0, 1]")
    cap = inputs.error_cap
    if e.min() > cap + 1e-12:
        raise InfeasibleBounds(f"smallest per-bin error {e.min():.4g} exceeds observed {cap:.4g}")
    n = p.size

    lo = linprog(
        p,
        A_ub=e[None, :],
        b_ub=[cap],
        A_eq=np.ones((1, n)),
        b_eq=[1.0],
        bounds=(0, None),
        method="highs-ds",
    )
    if lo.status != 0:
        raise InfeasibleBounds(f"success LP failed: {lo.message}")
    p_min = float(np.clip(lo.fun, 0.0, 1.0))

    # Charnes-Cooper: y = q * tau, tau = 1 / sum(q * p); variables [y, tau]
    if p_min <= 0:
        e_max = 0.5
        iterations = lo.nit
    else:
        c = np.concatenate([e * (1.0 - p), [-inputs.e_phase_obs]])
        A_eq = np.vstack([np.concatenate([p, [0.0]]), np.concatenate([np.ones(n), [-1.0]])])
        A_ub = np.concatenate([e, [-cap]])[None, :]
        hi = linprog(
            c,
            A_ub=A_ub,
            b_ub=[0.0],
            A_eq=A_eq,
            b_eq=[1.0, 0.0],
            bounds=(0, None),
            method="highs-ds",
        )
        if hi.status != 0:
            raise InfeasibleBounds(f"phase-error LP failed: {hi.message}")
        e_max = float(min(0.5, max(0.0, -hi.fun)))
        iterations = lo.nit + hi.nit
    return Bounds(p_min, e_max, "highs-ds", int(iterations))


@dataclass(frozen=True)
class KeyRateReport:
    mode: str
    dt_ps: float
    p_succ: float
    e_phase: float
    e_bit: float
    rate: float
    feasible_bins: int
    solver: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def shift_grid(pair: DetectorPair) -> np.ndarray:
    """One period of grid-aligned shifts centred on zero."""
    n = pair.n_bins
    return (np.arange(n) - n // 2) * pair.dt_ps


def bin_model(pair: DetectorPair, receiver: ReceiverConfig, qber_cap: float = QBER_ABORT_THRESHOLD):
    """Per-shift filter success and added error on the non-aborting bins.

    Returns ``(shifts, success, error)`` restricted to shifts whose predicted
    QBER is at most ``qber_cap`` and where at least one detector can click.
    """
    shifts = shift_grid(pair)
    q = predicted_qber(pair, receiver, shifts)
    baseline = float(predicted_qber(pair, receiver, [0.0])[0])
    logical = logical_curves(pair, receiver.mode)
    t = receiver.arrival(pair) + shifts
    success = procrustean_success(logical.apd0.at(t), logical.apd1.at(t))
    keep = (q <= qber_cap) & np.isfinite(success)
    error = np.maximum(0.0, q - baseline)
    return shifts[keep], success[keep], error[keep]


def key_rate_report(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    inputs: KeyRateInputs = KeyRateInputs(),
    *,
    refine_phase: bool = False,
    qber_cap: float = QBER_ABORT_THRESHOLD,
) -> KeyRateReport:
    """Full pipeline at the pair's own time resolution."""
    shifts, success, error = bin_model(pair, receiver, qber_cap)
    if shifts.size == 0:
        raise InfeasibleBounds("no shift keeps the QBER below the abort threshold")
    bounds = optimize_bounds(success, error, inputs)
    if refine_phase:
        e_phase = bounds.e_phase
    else:
        e_phase = analytic_phase_bound(bounds.p_succ, inputs.e_phase_obs)
    rate = secret_key_rate(bounds.p_succ, e_phase, inputs.e_bit_obs, inputs.f_ec)
    return KeyRateReport(
        mode=receiver.mode.value,
        dt_ps=pair.dt_ps,
        p_succ=bounds.p_succ,
        e_phase=e_phase,
        e_bit=inputs.e_bit_obs,
        rate=rate,
        feasible_bins=int(shifts.size),
        solver={"method": bounds.method, "iterations": bounds.iterations},
    )


def resolution_comparison(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    dt_fine: float,
    dt_coarse: float,
    inputs: KeyRateInputs = KeyRateInputs(),
    **kwargs,
) -> tuple[KeyRateReport, KeyRateReport]:
    """Reports at a fine and a decimated coarse resolution."""
    fine = resample_pair(pair, dt_fine)
    coarse = resample_pair(fine, dt_coarse)
    return (
        key_rate_report(fine, receiver, inputs, **kwargs),
        key_rate_report(coarse, receiver, inputs, **kwargs),
    )


# -- rate versus channel loss -------------------------------------------------


def observed_error(loss_db, detector_efficiency: float, dark_prob: float, e_optical: float):
    """Error rate of detected events once dark counts compete with signal."""
    p_sig = 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0) * detector_efficiency
    total = p_sig + dark_prob
    with np.errstate(invalid="ignore", divide="ignore"):
        e = np.where(total > 0, (e_optical * p_sig + 0.5 * dark_prob) / total, 0.5)
    return p_sig, e


def rate_vs_loss(
    inputs: KeyRateInputs,
    loss_grid_db,
    detector_efficiency: float = 0.2,
    dark_prob: float = 2e-5,
    e_optical: float = 0.03,
    *,
    p_succ: float = 1.0,
    e_phase: float | None = None,
) -> np.ndarray:
    """Secret bits per sent single photon along a loss grid.

    ``p_succ``/``e_phase`` are the bounds obtained at the observed error rates
    in ``inputs``; the phase error is scaled with the loss-dependent error in
    the same proportion.  ``dark_prob`` is the total over both detectors.
    """
    if e_phase is None:
        e_phase = inputs.e_phase_obs
    p_sig, e = observed_error(loss_grid_db, detector_efficiency, dark_prob, e_optical)
    scale = e_phase / inputs.e_phase_obs if inputs.e_phase_obs > 0 else 1.0
    rates = []
    for detected, err in zip(p_sig + dark_prob, np.atleast_1d(e)):
        eph = min(0.5, err * scale)
        rates.append(detected * secret_key_rate(p_succ, eph, float(err), inputs.f_ec))
    return np.array(rates)


REFERENCE_BOUNDS = {
    # published (p_succ, e_phase, R) from measured curves at dt = 49.5 ps and 4.5 ps,
    # with e_bit = e_phase_obs = 0.03 and f_ec = 1.10
    49.5: {Mode.TWO_STATE: (0.609, 0.0475, 0.227), Mode.FOUR_STATE: (0.981, 0.0302, 0.575)},
    4.5: {Mode.TWO_STATE: (0.608, 0.0470, 0.228), Mode.FOUR_STATE: (0.979, 0.0303, 0.574)},
}
IDEAL_RATE = 0.592


def loss_sweep(
    loss_grid_db,
    per_mode: dict,
    inputs: KeyRateInputs = KeyRateInputs(),
    detector_efficiency: float = 0.2,
    dark_prob: float = 2e-5,
    e_optical: float = 0.03,
) -> dict[str, np.ndarray]:
    """Ideal, two-state and four-state rate curves.

    ``per_mode`` maps each mode to its ``(p_succ, e_phase)`` bounds.
    """
    out = {"loss_db": np.asarray(loss_grid_db, dtype=float)}
    out["rate_ideal"] = rate_vs_loss(inputs, loss_grid_db, detector_efficiency, dark_prob, e_optical)
    for mode in (Mode.TWO_STATE, Mode.FOUR_STATE):
        p, eph = per_mode[mode]
        key = "rate_" + mode.value.replace("-", "_")
        out[key] = rate_vs_loss(
            inputs, loss_grid_db, detector_efficiency, dark_prob, e_optical, p_succ=p, e_phase=eph
        )
    return out
