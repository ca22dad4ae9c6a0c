"""Time-dependent gated detector efficiency curves.

A curve holds one efficiency value per time bin across a single clock period
and is treated as periodic.  Pairs of curves describe Bob's two physical
detectors; under four-state demodulation they are replaced by the logical
pair seen after the flip bit is undone.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_GRID_TOL = 1e-9
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class CurveError(ValueError):
    """Raised for invalid curve construction, resampling or ingestion."""


class Mode(str, enum.Enum):
    """Bob's demodulation mode."""

    TWO_STATE = "two-state"
    FOUR_STATE = "four-state"


def _as_bins(value_ps: float, dt_ps: float, what: str) -> int:
    ratio = value_ps / dt_ps
    k = round(ratio)
    if abs(ratio - k) > _GRID_TOL * max(1.0, abs(ratio)):
        raise CurveError(f"{what}={value_ps!r} ps is not a multiple of dt={dt_ps!r} ps")
    return int(k)


@dataclass(frozen=True, eq=False)
class GateEfficiencyCurve:
    """Per-bin detection efficiency over one clock period.

    ``samples[k]`` is the efficiency for a photon arriving at ``k * dt_ps``.
    """

    samples: np.ndarray
    dt_ps: float
    period_ps: float = 1000.0
    dark_prob: float = 0.0

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float).ravel()
        if arr.size == 0:
            raise CurveError("curve needs at least one sample")
        if self.dt_ps <= 0:
            raise CurveError("dt_ps must be positive")
        n = _as_bins(self.period_ps, self.dt_ps, "period_ps")
        if n != arr.size:
            raise CurveError(
                f"{arr.size} samples x dt={self.dt_ps} ps does not cover period {self.period_ps} ps"
            )
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise CurveError("efficiency samples must lie in [0, 1]")
        if not 0.0 <= self.dark_prob < 1.0:
            raise CurveError("dark_prob must lie in [0, 1)")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "dt_ps", float(self.dt_ps))
        object.__setattr__(self, "period_ps", float(self.period_ps))
        object.__setattr__(self, "dark_prob", float(self.dark_prob))

    @property
    def n_bins(self) -> int:
        return self.samples.size

    @property
    def times_ps(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.dt_ps

    def bin_of(self, t_ps: float) -> int:
        """Grid index of an aligned time, wrapped into one period."""
        return _as_bins(t_ps, self.dt_ps, "time") % self.n_bins

    def at(self, t_ps) -> np.ndarray | float:
        """Efficiency at grid-aligned time(s), periodic."""
        t = np.asarray(t_ps, dtype=float)
        k = np.rint(t / self.dt_ps)
        if np.any(np.abs(t / self.dt_ps - k) > _GRID_TOL * np.maximum(1.0, np.abs(k))):
            raise CurveError("times must be multiples of dt")
        out = self.samples[k.astype(int) % self.n_bins]
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, GateEfficiencyCurve):
            return NotImplemented
        return (
            self.dt_ps == other.dt_ps
            and self.period_ps == other.period_ps
            and self.dark_prob == other.dark_prob
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None


@dataclass(frozen=True)
class DetectorPair:
    apd0: GateEfficiencyCurve
    apd1: GateEfficiencyCurve

    def __post_init__(self):
        if self.apd0.dt_ps != self.apd1.dt_ps or self.apd0.period_ps != self.apd1.period_ps:
            raise CurveError("detector curves must share dt_ps and period_ps")

    @property
    def dt_ps(self) -> float:
        return self.apd0.dt_ps

    @property
    def period_ps(self) -> float:
        return self.apd0.period_ps

    @property
    def n_bins(self) -> int:
        return self.apd0.n_bins

    @property
    def darks(self) -> tuple[float, float]:
        return self.apd0.dark_prob, self.apd1.dark_prob

    def scaled(self, factor: float) -> DetectorPair:
        """Both efficiency curves multiplied by a common factor (darks kept)."""
        return DetectorPair(
            _replace_samples(self.apd0, self.apd0.samples * factor),
            _replace_samples(self.apd1, self.apd1.samples * factor),
        )


def _replace_samples(curve: GateEfficiencyCurve, samples) -> GateEfficiencyCurve:
    return GateEfficiencyCurve(samples, curve.dt_ps, curve.period_ps, curve.dark_prob)


def make_gate_curve(
    shape: str,
    center_ps: float,
    fwhm_ps: float,
    peak: float,
    dt_ps: float,
    period_ps: float = 1000.0,
    dark_prob: float = 0.0,
) -> GateEfficiencyCurve:
    """Synthetic single-gate efficiency curve.

    The profile is centred on the bin that contains ``center_ps`` so the
    maximum equals ``peak`` exactly and the curve is symmetric about that bin
    (modulo the period).

    Args:
        shape: ``"gaussian"`` or ``"raised-cosine"``.  The raised cosine has
            compact support of ``2 * fwhm_ps`` and is zero outside it.
        center_ps: gate centre within the period.
        fwhm_ps: full width at half maximum.
        peak: maximum efficiency.
        dt_ps: bin width; ``period_ps / dt_ps`` must be an integer.
        period_ps: clock period.
        dark_prob: dark-count probability per gate.
    """
    if fwhm_ps <= 0:
        raise CurveError("fwhm_ps must be positive")
    if not 0.0 <= peak <= 1.0:
        raise CurveError("peak must lie in [0, 1]")
    if dt_ps <= 0:
        raise CurveError("dt_ps must be positive")
    n = _as_bins(period_ps, dt_ps, "period_ps")
    if n < 1:
        raise CurveError("period must hold at least one bin")
    k_center = int(math.floor(center_ps / dt_ps + _GRID_TOL)) % n
    offset = (np.arange(n) - k_center) % n
    offset = np.minimum(offset, n - offset)
    dist = offset * dt_ps
    if shape == "gaussian":
        sigma = fwhm_ps * FWHM_TO_SIGMA
        profile = np.exp(-0.5 * (dist / sigma) ** 2)
    elif shape == "raised-cosine":
        profile = np.where(dist <= fwhm_ps, 0.5 * (1.0 + np.cos(np.pi * dist / fwhm_ps)), 0.0)
    else:
        raise CurveError(f"unknown gate shape {shape!r}")
    return GateEfficiencyCurve(peak * profile, dt_ps, period_ps, dark_prob)


def shift_curve(curve: GateEfficiencyCurve, delta_ps: float) -> GateEfficiencyCurve:
    """Delay the curve by ``delta_ps``: result(t) == curve(t - delta_ps)."""
    k = _as_bins(delta_ps, curve.dt_ps, "shift")
    return _replace_samples(curve, np.roll(curve.samples, k))


def shift_pair(pair: DetectorPair, delta_ps: float) -> DetectorPair:
    return DetectorPair(shift_curve(pair.apd0, delta_ps), shift_curve(pair.apd1, delta_ps))


def logical_curves(pair: DetectorPair, mode: Mode | str) -> DetectorPair:
    """Efficiency curves of the logical detectors.

    With four-state demodulation each logical outcome is produced by either
    physical detector with probability 1/2, so both logical curves are the
    bin-wise mean of the physical ones.
    """
    mode = Mode(mode)
    if mode is Mode.TWO_STATE:
        return pair
    mean = 0.5 * (pair.apd0.samples + pair.apd1.samples)
    dark = 0.5 * (pair.apd0.dark_prob + pair.apd1.dark_prob)
    curve = GateEfficiencyCurve(mean, pair.dt_ps, pair.period_ps, dark)
    return DetectorPair(curve, curve)


def resample(curve: GateEfficiencyCurve, dt_new_ps: float) -> GateEfficiencyCurve:
    """Change the bin width, keeping the period.

    A coarser integer-multiple grid decimates (bins 0, k, 2k, ...).  A finer
    grid that divides the old one interpolates linearly on the periodic
    extension.
    """
    if dt_new_ps <= 0:
        raise CurveError("dt_new_ps must be positive")
    ratio = dt_new_ps / curve.dt_ps
    if abs(ratio - 1.0) <= _GRID_TOL:
        return curve
    if ratio > 1.0:
        k = round(ratio)
        if abs(ratio - k) > _GRID_TOL * ratio or curve.n_bins % k:
            raise CurveError(f"cannot decimate {curve.n_bins} bins of {curve.dt_ps} ps to {dt_new_ps} ps")
        return GateEfficiencyCurve(curve.samples[::k], dt_new_ps, curve.period_ps, curve.dark_prob)
    m = round(1.0 / ratio)
    if abs(1.0 / ratio - m) > _GRID_TOL / ratio:
        raise CurveError(f"{dt_new_ps} ps does not divide {curve.dt_ps} ps")
    t_new = np.arange(curve.n_bins * m) * dt_new_ps
    values = np.interp(t_new, curve.times_ps, curve.samples, period=curve.period_ps)
    return GateEfficiencyCurve(values, dt_new_ps, curve.period_ps, curve.dark_prob)


def resample_pair(pair: DetectorPair, dt_new_ps: float) -> DetectorPair:
    return DetectorPair(resample(pair.apd0, dt_new_ps), resample(pair.apd1, dt_new_ps))


def severe_mismatch_pair(
    dt_ps: float = 4.5,
    period_ps: float = 990.0,
    *,
    arrival_ps: float | None = None,
    shape: str = "raised-cosine",
    peaks: tuple[float, float] = (0.20, 0.12),
    offset_ps: float = 40.0,
    fwhm_ps: tuple[float, float] = (360.0, 420.0),
    dark_prob: float = 1e-5,
) -> DetectorPair:
    """Deliberately mismatched detector pair.

    APD 0 is gated early and APD 1 late by ``offset_ps / 2`` around the
    nominal arrival time; APD 1 also has the lower peak efficiency and a
    wider gate.  With compact gates both detectors are dark half a period
    away from the arrival time.
    """
    if arrival_ps is None:
        arrival_ps = period_ps / 2
    half = offset_ps / 2
    return DetectorPair(
        make_gate_curve(shape, arrival_ps - half, fwhm_ps[0], peaks[0], dt_ps, period_ps, dark_prob),
        make_gate_curve(shape, arrival_ps + half, fwhm_ps[1], peaks[1], dt_ps, period_ps, dark_prob),
    )


def matched_pair(
    dt_ps: float = 4.5,
    period_ps: float = 990.0,
    *,
    peak: float = 0.2,
    fwhm_ps: float = 250.0,
    shape: str = "gaussian",
    dark_prob: float = 1e-5,
) -> DetectorPair:
    curve = make_gate_curve(shape, period_ps / 2, fwhm_ps, peak, dt_ps, period_ps, dark_prob)
    return DetectorPair(curve, curve)


# -- CSV ingestion ---------------------------------------------------------

CSV_HEADER = ("time_ps", "eta0", "eta1")


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_curves_csv(pair: DetectorPair, path) -> None:
    """Write ``time_ps,eta0,eta1`` rows plus a JSON sidecar with period and darks."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for t, a, b in zip(pair.apd0.times_ps, pair.apd0.samples, pair.apd1.samples):
            writer.writerow([repr(float(t)), repr(float(a)), repr(float(b))])
    meta = {
        "period_ps": pair.period_ps,
        "dt_ps": pair.dt_ps,
        "dark_prob": [pair.apd0.dark_prob, pair.apd1.dark_prob],
    }
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_curves_csv(
    path,
    *,
    period_ps: float | None = None,
    dark_prob: float | tuple[float, float] | None = None,
) -> DetectorPair:
    """Read a detector pair from CSV.

    Period and dark counts come from the keyword arguments when given, else
    from the JSON sidecar next to the file, else period = rows x dt and zero
    darks.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"curve file not found: {path}")
    meta = {}
    if _sidecar(path).exists():
        meta = json.loads(_sidecar(path).read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise CurveError(f"{path}: expected header {','.join(CSV_HEADER)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise CurveError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise CurveError(f"{path}:{lineno}: {exc}") from None
    if len(data) < 2:
        raise CurveError(f"{path}: need at least two rows")
    arr = np.array(data)
    t = arr[:, 0]
    steps = np.diff(t)
    dt = float(meta.get("dt_ps", steps[0]))
    if t[0] != 0.0 or dt <= 0 or np.any(np.abs(steps - dt) > 1e-6 * dt):
        raise CurveError(f"{path}: time column must start at 0 and be uniformly spaced")
    eta = arr[:, 1:]
    if eta.min() < 0.0 or eta.max() > 1.0:
        raise CurveError(f"{path}: efficiency values must lie in [0, 1]")
    if period_ps is None:
        period_ps = float(meta.get("period_ps", len(t) * dt))
    if dark_prob is None:
        dark_prob = meta.get("dark_prob", (0.0, 0.0))
    if np.ndim(dark_prob) == 0:
        dark_prob = (dark_prob, dark_prob)
    return DetectorPair(
        GateEfficiencyCurve(eta[:, 0], dt, period_ps, dark_prob[0]),
        GateEfficiencyCurve(eta[:, 1], dt, period_ps, dark_prob[1]),
    )
