"""Time-shift attack harness: characterisation sweeps and shift-pair search."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channel import EveStrategy
from .detector import DetectorPair, GateEfficiencyCurve
from .keyrate import shift_grid
from .leakage import logical_outcomes
from .protocol import ReceiverConfig, expected_rates, outcome_table, run_session
from .stats import QBER_ABORT_THRESHOLD, CountsSummary, contrast

SWEEP_HEADER = ("shift_ps", "c0", "c1", "sifted", "errors", "qber", "bias")
P1_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for one sweep point; independent of scheduling order."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _sweep_point(args):
    pair, receiver, shift, n, seed, index = args
    summary, _ = run_session(pair, receiver, EveStrategy.fixed(shift), n, point_rng(seed, index))
    return summary


def sweep_characterization(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    shifts_ps,
    n_pulses_per_point: int,
    seed: int,
    *,
    workers: int = 1,
) -> list[tuple[float, CountsSummary]]:
    """One fixed-shift session per shift, seeded by ``(seed, point index)``."""
    jobs = [(pair, receiver, float(s), n_pulses_per_point, seed, i) for i, s in enumerate(shifts_ps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(_sweep_point, jobs))
    else:
        summaries = [_sweep_point(j) for j in jobs]
    return [(job[2], s) for job, s in zip(jobs, summaries)]


def sweep_shifts(dt_ps: float, span_ps: float = 1000.0) -> np.ndarray:
    """Symmetric shift grid ``k * dt`` covering ``span_ps`` plus the endpoint."""
    half = int(np.floor(0.5 * span_ps / dt_ps + 1e-9))
    return np.arange(-half, half + 1) * dt_ps


def write_sweep_csv(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for shift, s in rows:
            q = s.errors / s.sifted if s.sifted else float("nan")
            b = contrast(s.c0, s.c1) if s.sifted else float("nan")
            w.writerow([repr(float(shift)), s.c0, s.c1, s.sifted, s.errors, repr(q), repr(b)])


def read_sweep_csv(path, n_pulses: int = 0) -> list[tuple[float, CountsSummary]]:
    """Parse a sweep CSV; ``n_pulses`` defaults to the sifted count when unknown."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != SWEEP_HEADER:
            raise ValueError(f"{path}: unexpected sweep header")
        rows = []
        for rec in reader:
            c0, c1, sifted, errors = (int(x) for x in rec[1:5])
            rows.append((float(rec[0]), CountsSummary(c0, c1, sifted, errors, max(n_pulses, sifted))))
    return rows


def curves_from_sweep(rows, pair: DetectorPair, receiver: ReceiverConfig) -> DetectorPair:
    """Relative logical-detector efficiencies estimated from sweep counts.

    Each sweep shift maps to the curve bin it probes; bins never probed keep
    zero efficiency.  Both curves share one normalisation so their ratio is
    preserved.
    """
    n = pair.n_bins
    c = np.zeros((2, n))
    pulses = np.zeros(n)
    for shift, s in rows:
        k = pair.apd0.bin_of(receiver.arrival(pair) + shift)
        c[0, k] += s.c0
        c[1, k] += s.c1
        pulses[k] += s.n_pulses
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(pulses > 0, c / np.maximum(pulses, 1), 0.0)
    top = rate.max()
    if top > 0:
        rate = rate / top
    return DetectorPair(
        GateEfficiencyCurve(rate[0], pair.dt_ps, pair.period_ps, pair.apd0.dark_prob),
        GateEfficiencyCurve(rate[1], pair.dt_ps, pair.period_ps, pair.apd1.dark_prob),
    )


@dataclass(frozen=True)
class AttackResult:
    t1_ps: float
    t2_ps: float
    p1: float
    eve_info_bits: float
    qber: float
    feasible: bool = True

    def strategy(self) -> EveStrategy:
        if not self.feasible:
            return EveStrategy.none()
        return EveStrategy.two_point(self.t1_ps, self.t2_ps, self.p1)

    def to_dict(self) -> dict:
        return asdict(self)


def _cmi_batch(joint: np.ndarray) -> np.ndarray:
    """Vectorised I(L; S | B) over a leading batch axis of ``joint[k, s, b, l]``."""
    total = joint.sum(axis=(1, 2, 3), keepdims=True)
    p = joint / total
    p_sb = p.sum(axis=3, keepdims=True)
    p_bl = p.sum(axis=1, keepdims=True)
    p_b = p.sum(axis=(1, 3), keepdims=True)
    num = p * p_b
    den = p_sb * p_bl
    with np.errstate(invalid="ignore", divide="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, num / den, 1.0)), 0.0)
    return np.maximum(0.0, terms.sum(axis=(1, 2, 3)))


def optimize_shift_pair(
    pair: DetectorPair,
    receiver: ReceiverConfig,
    qber_cap: float = QBER_ABORT_THRESHOLD,
    grid=None,
    p1_grid=P1_GRID,
) -> AttackResult:
    """Exhaustive search for the two-point shift strategy leaking the most.

    Every pair ``t1 < t2`` on ``grid`` is combined with each ``p1`` in
    ``p1_grid`` and with the ``p1`` that equalises the sifted rates of the two
    shifts.  Candidates whose predicted average QBER exceeds ``qber_cap`` are
    dropped.  Ties resolve to the smallest ``(t1, t2, p1)``.
    """
    if not 0.0 < qber_cap < 0.5:
        raise ValueError("qber_cap must lie in (0, 0.5)")
    grid = np.sort(np.asarray(shift_grid(pair) if grid is None else grid, dtype=float))
    info_table = logical_outcomes(pair, receiver, grid)
    rates = expected_rates(outcome_table(pair, receiver, grid))
    sifted, errors = rates["sifted"], rates["errors"]
    logical_sifted = info_table.sum(axis=(1, 2))

    i, j = np.triu_indices(grid.size, k=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        equal = logical_sifted[j] / (logical_sifted[i] + logical_sifted[j])
    p1 = np.column_stack([np.broadcast_to(p1_grid, (i.size, len(p1_grid))), equal])
    p1 = np.where(np.isfinite(p1), p1, 0.5)

    best = None
    for col in range(p1.shape[1]):
        w = p1[:, col]
        s_avg = w * sifted[i] + (1 - w) * sifted[j]
        with np.errstate(invalid="ignore", divide="ignore"):
            q_avg = (w * errors[i] + (1 - w) * errors[j]) / s_avg
        ok = (s_avg > 0) & (q_avg <= qber_cap) & (w > 0) & (w < 1)
        if not ok.any():
            continue
        joint = np.stack([w[ok, None, None] * info_table[i[ok]], (1 - w[ok, None, None]) * info_table[j[ok]]], axis=1)
        info = _cmi_batch(joint)
        cand = np.column_stack([info, grid[i[ok]], grid[j[ok]], w[ok], q_avg[ok]])
        best = cand if best is None else np.vstack([best, cand])
    if best is None:
        return AttackResult(0.0, 0.0, 1.0, 0.0, float("nan"), feasible=False)
    top = best[:, 0].max()
    tied = best[best[:, 0] >= top - 1e-12]
    order = np.lexsort((tied[:, 3], tied[:, 2], tied[:, 1]))
    info, t1, t2, w, q = tied[order[0]]
    return AttackResult(float(t1), float(t2), float(w), float(info), float(q))
