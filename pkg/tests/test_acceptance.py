"""Acceptance gate: one test per headline criterion, each printing a verdict line."""

import math

import numpy as np
import pytest

from qkd_mismatch.attack import optimize_shift_pair, sweep_characterization, sweep_shifts
from qkd_mismatch.channel import EveStrategy
from qkd_mismatch.detector import DetectorPair, GateEfficiencyCurve, Mode, logical_curves
from qkd_mismatch.keyrate import (
    IDEAL_RATE,
    REFERENCE_BOUNDS,
    InfeasibleBounds,
    KeyRateInputs,
    analytic_phase_bound,
    loss_sweep,
    optimize_bounds,
    resolution_comparison,
    secret_key_rate,
)
from qkd_mismatch.leakage import eve_information
from qkd_mismatch.oracles import vertex_bounds
from qkd_mismatch.protocol import ReceiverConfig, expected_rates, outcome_table, predicted_bias, predicted_qber
from qkd_mismatch.stats import QBER_ABORT_THRESHOLD, CountsSummary

SEED = 20240601


@pytest.fixture
def verdict(capsys):
    def report(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return report


def test_key_rate_regression(verdict):
    worst = 0.0
    lines = []
    for dt, modes in REFERENCE_BOUNDS.items():
        for mode, (p, eph, r) in modes.items():
            got = secret_key_rate(p, eph, 0.03, 1.10)
            worst = max(worst, abs(got - r))
            lines.append(f"{mode.value}@{dt}ps {got:.4f} vs {r}")
    ideal = secret_key_rate(1.0, 0.03, 0.03, 1.10)
    worst_ideal = abs(ideal - IDEAL_RATE)
    ok = worst <= 1e-3 and worst_ideal <= 1e-3
    verdict(
        "key-rate regression",
        ok,
        f"{'; '.join(lines)}; ideal {ideal:.4f}; max dev {max(worst, worst_ideal):.2e} (tol 1e-3)",
    )


def _random_pair(rng):
    n = int(rng.integers(4, 25))
    dt = 10.0
    a = rng.uniform(0, 1, n) * rng.uniform(0.05, 1)
    b = rng.uniform(0, 1, n) * rng.uniform(0.05, 1)
    d = rng.uniform(0, 1e-3, 2)
    return DetectorPair(GateEfficiencyCurve(a, dt, n * dt, d[0]), GateEfficiencyCurve(b, dt, n * dt, d[1]))


def test_countermeasure_symmetrisation(verdict, severe, two_state):
    rng = np.random.default_rng(SEED)
    four = ReceiverConfig(mode="four-state", visibility=0.94)
    identical, max_info = 0, 0.0
    for _ in range(100):
        pair = _random_pair(rng)
        logical = logical_curves(pair, Mode.FOUR_STATE)
        identical += np.array_equal(logical.apd0.samples, logical.apd1.samples)
        grid = np.arange(pair.n_bins) * pair.dt_ps
        best = optimize_shift_pair(pair, four, qber_cap=0.49, grid=grid)
        max_info = max(max_info, best.eve_info_bits)
        for _ in range(5):
            t1, t2 = rng.choice(grid, 2, replace=False)
            max_info = max(max_info, eve_information(pair, four, EveStrategy.two_point(t1, t2, rng.uniform())))
    attack = optimize_shift_pair(severe, two_state, QBER_ABORT_THRESHOLD)
    ok = identical == 100 and max_info == 0.0 and attack.eve_info_bits > 0.1 and attack.qber <= 0.11
    verdict(
        "countermeasure symmetrisation",
        ok,
        f"{identical}/100 pairs with identical logical curves, max four-state info {max_info}; "
        f"two-state optimum ({attack.t1_ps}, {attack.t2_ps}, p1={attack.p1}) leaks "
        f"{attack.eve_info_bits:.3f} bits at QBER {attack.qber:.4f}",
    )


def _z_scores(summary: CountsSummary, rates: dict, index: int):
    n = summary.n_pulses
    out = []
    for count, key in ((summary.errors, "errors"), (summary.sifted, "sifted")):
        p = rates[key][index]
        out.append((count - n * p) / math.sqrt(max(n * p * (1 - p), 1e-300)))
    # per-pulse +1 / -1 / 0 for logical detector 0 / 1 / no sifted click
    p0, p1 = rates["c0"][index], rates["c1"][index]
    mu = p0 - p1
    var = p0 + p1 - mu**2
    out.append(((summary.c0 - summary.c1) - n * mu) / math.sqrt(max(n * var, 1e-300)))
    return out


def test_monte_carlo_matches_enumeration(verdict, severe, two_state, four_state):
    n = 10**6
    shifts = sweep_shifts(severe.dt_ps, 1000.0)
    coarse_subset = np.isclose(np.mod(shifts, 49.5), 0.0) | np.isclose(np.mod(shifts, 49.5), 49.5)
    details = []
    ok = True
    window_bias = None
    for receiver in (two_state, four_state):
        rates = expected_rates(outcome_table(severe, receiver, shifts))
        rows = sweep_characterization(severe, receiver, shifts, n, SEED)
        z = np.array([_z_scores(s, rates, i) for i, (_, s) in enumerate(rows)])
        worst = float(np.abs(z).max())
        ok &= worst <= 4.0
        details.append(f"{receiver.mode.value} max |z| {worst:.2f} over {len(rows)} points")
        bias = np.array([(s.c0 - s.c1) / s.sifted if s.sifted else 0.0 for _, s in rows])
        if receiver.mode is Mode.FOUR_STATE:
            z0 = np.array([(s.c0 - s.c1) / math.sqrt(s.sifted) if s.sifted else 0.0 for _, s in rows])
            worst0 = float(np.abs(z0[coarse_subset]).max())
            beyond = int(np.sum(np.abs(z0) > 3))
            ok &= worst0 <= 3.0
            details.append(
                f"four-state bias max |z| vs 0 on the {int(coarse_subset.sum())}-point 49.5 ps subset {worst0:.2f} "
                f"({beyond}/{len(rows)} points of the full grid beyond 3 sigma)"
            )
        else:
            window = predicted_qber(severe, receiver, shifts) <= QBER_ABORT_THRESHOLD
            window_bias = float(np.abs(bias[window]).max())
            ok &= abs(window_bias - 0.30) <= 0.05
            details.append(f"two-state max |bias| in QBER window {window_bias:.3f}")
    verdict("Monte Carlo vs enumeration", ok, "; ".join(details))


def test_droop_calibration(verdict, severe, two_state, four_state):
    half = severe.period_ps / 2
    q_half = predicted_qber(severe, two_state, [-half, half])
    rows = sweep_characterization(severe, two_state, [half] * 100 + [-half] * 100, 2 * 10**6, SEED)
    pooled = CountsSummary.empty()
    for _, s in rows:
        pooled = pooled + s
    q_mc = pooled.errors / pooled.sifted
    windows = []
    contiguous = True
    grid = sweep_shifts(severe.dt_ps, severe.period_ps)
    for receiver in (two_state, four_state):
        inside = np.flatnonzero(predicted_qber(severe, receiver, grid) <= QBER_ABORT_THRESHOLD)
        contiguous &= bool(inside.size) and np.all(np.diff(inside) == 1) and 0.0 in grid[inside]
        windows.append(f"{receiver.mode.value} [{grid[inside[0]]}, {grid[inside[-1]]}] ps")
    ok = bool(np.all(np.abs(q_half - 0.5) <= 0.02)) and abs(q_mc - 0.5) <= 0.02 and contiguous
    verdict(
        "droop calibration",
        ok,
        f"QBER at +/-{half} ps: model {q_half[0]:.4f}/{q_half[1]:.4f}, Monte Carlo {q_mc:.4f} "
        f"from {pooled.sifted} sifted of {pooled.n_pulses:.1e} pulses; windows {', '.join(windows)} "
        f"contiguous={contiguous}",
    )


def test_optimizer_vs_oracle(verdict):
    rng = np.random.default_rng(SEED)
    solved, worst, chain = 0, 0.0, True
    while solved < 250:
        n = int(rng.integers(1, 9))
        p = rng.uniform(0.0, 1.0, n)
        e = rng.uniform(0.0, 0.1, n)
        e[rng.integers(n)] *= rng.uniform(0.0, 0.3)
        inputs = KeyRateInputs(rng.uniform(0.005, 0.08), rng.uniform(0.005, 0.08))
        try:
            lp = optimize_bounds(p, e, inputs)
        except InfeasibleBounds:
            continue
        solved += 1
        p_v, e_v = vertex_bounds(p, e, inputs)
        worst = max(worst, abs(lp.p_succ - p_v), abs(lp.e_phase - e_v))
        r_a = secret_key_rate(lp.p_succ, analytic_phase_bound(lp.p_succ, inputs.e_phase_obs), inputs.e_bit_obs)
        r_lp = secret_key_rate(lp.p_succ, lp.e_phase, inputs.e_bit_obs)
        r_id = secret_key_rate(1.0, inputs.e_phase_obs, inputs.e_bit_obs)
        chain &= r_a <= r_lp + 1e-12 and r_lp <= r_id + 1e-12
    ok = worst <= 1e-6 and chain
    verdict(
        "optimizer vs vertex oracle",
        ok,
        f"{solved} instances, max |LP - vertices| {worst:.1e} (tol 1e-6), analytic <= LP <= ideal on all: {chain}",
    )


def test_resolution_robustness(verdict, severe, two_state, four_state):
    lines, ok = [], True
    for receiver in (two_state, four_state):
        for refine in (False, True):
            fine, coarse = resolution_comparison(severe, receiver, 4.5, 49.5, refine_phase=refine)
            d = abs(fine.rate - coarse.rate)
            ok &= d <= 0.005
            lines.append(
                f"{receiver.mode.value}{' refined' if refine else ''} R {fine.rate:.4f}/{coarse.rate:.4f} (dR {d:.1e})"
            )
    verdict("resolution robustness", ok, "; ".join(lines))


def test_loss_sweep_ratios(verdict):
    grid = np.arange(0.0, 60.25, 0.25)
    lines, ok = [], True
    for dt in (49.5, 4.5):
        per_mode = {m: REFERENCE_BOUNDS[dt][m][:2] for m in Mode}
        c = loss_sweep(grid, per_mode)
        four = c["rate_four_state"][0] / c["rate_ideal"][0]
        two = c["rate_two_state"][0] / c["rate_ideal"][0]
        ok &= abs(four - 0.971) <= 0.005 and abs(two - 0.383) <= 0.005
        for key in ("rate_ideal", "rate_two_state", "rate_four_state"):
            r = c[key]
            positive = np.flatnonzero(r > 0)
            ok &= bool(np.all(np.diff(r) <= 0))
            ok &= positive.size > 0 and positive[-1] < r.size - 1 and np.all(r[positive[-1] + 1 :] == 0)
        cut = {k: grid[np.flatnonzero(c[k] > 0)[-1]] for k in ("rate_two_state", "rate_four_state")}
        lines.append(
            f"dt {dt}: four/ideal {four:.4f}, two/ideal {two:.4f}, last positive loss "
            f"{cut['rate_two_state']}/{cut['rate_four_state']} dB"
        )
    verdict("loss-sweep ratios", ok, "; ".join(lines))
