"""Brute-force reference implementations used to cross-check the fast paths."""

from __future__ import annotations

import itertools

import numpy as np

from .keyrate import InfeasibleBounds, KeyRateInputs


def strategy_vertices(error, cap: float):
    """Vertices of ``{q >= 0, sum(q) == 1, sum(q * e) <= cap}``.

    Single bins with ``e <= cap`` and, for every pair straddling the cap, the
    mixture that meets it with equality.  Yields ``(indices, weights)``.
    """
    e = np.asarray(error, dtype=float)
    for i in range(e.size):
        if e[i] <= cap:
            yield (i,), (1.0,)
    for i, j in itertools.combinations(range(e.size), 2):
        lo, hi = (i, j) if e[i] < e[j] else (j, i)
        if e[lo] < cap < e[hi]:
            w = (e[hi] - cap) / (e[hi] - e[lo])
            yield (lo, hi), (w, 1.0 - w)


def vertex_bounds(success, error, inputs: KeyRateInputs) -> tuple[float, float]:
    """``(min p_succ, max e_phase)`` by evaluating both objectives on every vertex.

    Both objectives are linear or linear-fractional with a positive
    denominator, so their optima sit on a vertex of the feasible polytope.
    """
    p = np.asarray(success, dtype=float)
    e = np.asarray(error, dtype=float)
    cap = inputs.error_cap
    p_min, e_max = np.inf, -np.inf
    for idx, w in strategy_vertices(e, cap):
        idx = list(idx)
        w = np.asarray(w)
        ps = float(w @ p[idx])
        p_min = min(p_min, ps)
        if ps > 0:
            eph = (inputs.e_phase_obs - float(w @ (e[idx] * (1.0 - p[idx])))) / ps
        else:
            eph = 0.5
        e_max = max(e_max, eph)
    if not np.isfinite(p_min):
        raise InfeasibleBounds("no vertex meets the error cap")
    return p_min, float(min(0.5, max(0.0, e_max)))


def click_enumeration(phi_a, phi_b_eff, visibility, eta0, eta1, dark0=0.0, dark1=0.0):
    """(det0 only, det1 only, both, none) by listing every elementary event.

    A single photon goes to one output port, is detected or lost, and each
    detector independently fires a dark count.
    """
    r0 = 0.5 * (1.0 + visibility * np.cos(phi_a + phi_b_eff))
    out = {(0, 0): 0.0, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 0.0}
    for port, p_port in ((0, r0), (1, 1.0 - r0)):
        eta = (eta0, eta1)[port]
        for detected, p_det in ((True, eta), (False, 1.0 - eta)):
            for d0, p_d0 in ((1, dark0), (0, 1.0 - dark0)):
                for d1, p_d1 in ((1, dark1), (0, 1.0 - dark1)):
                    a = d0 | (detected and port == 0)
                    b = d1 | (detected and port == 1)
                    out[(int(a), int(b))] += p_port * p_det * p_d0 * p_d1
    return out[(1, 0)], out[(0, 1)], out[(1, 1)], out[(0, 0)]


def independent_click_enumeration(phi_a, phi_b_eff, visibility, eta0, eta1, dark0=0.0, dark1=0.0):
    """Same outcome table with the two detectors as independent trials."""
    r0 = 0.5 * (1.0 + visibility * np.cos(phi_a + phi_b_eff))
    q = (1 - (1 - r0 * eta0) * (1 - dark0), 1 - (1 - (1 - r0) * eta1) * (1 - dark1))
    out = {}
    for a, b in itertools.product((0, 1), repeat=2):
        out[(a, b)] = (q[0] if a else 1 - q[0]) * (q[1] if b else 1 - q[1])
    return out[(1, 0)], out[(0, 1)], out[(1, 1)], out[(0, 0)]


def _lp_check(rng: np.random.Generator, instances: int, max_bins: int) -> dict:
    from .keyrate import analytic_phase_bound, optimize_bounds, secret_key_rate

    worst, chain_ok, solved = 0.0, True, 0
    while solved < instances:
        n = int(rng.integers(1, max_bins + 1))
        p = rng.uniform(0.05, 1.0, n)
        e = rng.uniform(0.0, 0.08, n)
        e[rng.integers(n)] *= rng.uniform(0.0, 0.3)
        inputs = KeyRateInputs(rng.uniform(0.01, 0.06), rng.uniform(0.01, 0.06))
        try:
            lp = optimize_bounds(p, e, inputs)
        except InfeasibleBounds:
            continue
        solved += 1
        p_v, e_v = vertex_bounds(p, e, inputs)
        worst = max(worst, abs(lp.p_succ - p_v), abs(lp.e_phase - e_v))
        f = lambda pp, ee: secret_key_rate(pp, ee, inputs.e_bit_obs, inputs.f_ec)  # noqa: E731
        r_analytic = f(lp.p_succ, analytic_phase_bound(lp.p_succ, inputs.e_phase_obs))
        r_lp = f(lp.p_succ, lp.e_phase)
        r_ideal = f(1.0, inputs.e_phase_obs)
        chain_ok &= r_analytic <= r_lp + 1e-12 and r_lp <= r_ideal + 1e-12
    return {"instances": solved, "max_abs_diff": worst, "chain_holds": bool(chain_ok), "passed": worst <= 1e-6 and chain_ok}


def _click_check(rng: np.random.Generator, trials: int = 1000) -> dict:
    from .protocol import click_probabilities

    worst = 0.0
    for _ in range(trials):
        args = (rng.uniform(0, 2 * np.pi), rng.uniform(0, 2 * np.pi), *rng.uniform(0, 1, 3), *rng.uniform(0, 0.1, 2))
        for independent, ref in ((False, click_enumeration), (True, independent_click_enumeration)):
            got = click_probabilities(*args, independent=independent)
            worst = max(worst, float(np.max(np.abs(np.subtract(got, ref(*args))))))
    return {"trials": trials, "max_abs_diff": worst, "passed": worst <= 1e-12}


def monte_carlo_information(pair, receiver, strategy, n_pulses: int, rng: np.random.Generator) -> float:
    """Plug-in estimate of Eve's information from simulated sifted pulses."""
    from .leakage import plugin_information
    from .protocol import run_session

    _, rec = run_session(pair, receiver, strategy, n_pulses, rng, trace=True)
    return plugin_information(rec["label"], rec["basis"], rec["logical_bit"])


def _information_check(pair, receiver, n_pulses: int, rng: np.random.Generator) -> dict:
    from .attack import optimize_shift_pair
    from .leakage import eve_information

    res = optimize_shift_pair(pair, receiver)
    if not res.feasible:
        return {"passed": True, "note": "no feasible attack"}
    exact = eve_information(pair, receiver, res.strategy())
    estimate = monte_carlo_information(pair, receiver, res.strategy(), n_pulses, rng)
    return {"exact": exact, "monte_carlo": estimate, "passed": abs(exact - estimate) <= 0.01}


def run_oracles(seed: int, *, lp_instances=200, max_bins=8, mc_pulses=10**6, pair=None, receiver=None) -> dict:
    """Cross-check the fast solvers against their brute-force counterparts."""
    rng = np.random.default_rng(seed)
    checks = {"lp_vs_vertices": _lp_check(rng, lp_instances, max_bins), "click_enumeration": _click_check(rng)}
    if pair is not None and receiver is not None:
        checks["eve_information"] = _information_check(pair, receiver, mc_pulses, rng)
    return {"seed": seed, "checks": checks}
