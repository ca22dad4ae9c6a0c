"""Command-line entry point.

Every run is described by one JSON config; command-line flags only override
keys of that config.  Outputs are written to ``output.dir`` and depend only on
the config (including the mandatory seed).

Exit codes: 0 success, 1 oracle check failed, 2 config error, 3 infeasible
optimisation, 4 protocol aborted (QBER above threshold).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attack import optimize_shift_pair, sweep_characterization, sweep_shifts, write_sweep_csv
from .detector import (
    CurveError,
    DetectorPair,
    Mode,
    load_curves_csv,
    matched_pair,
    save_curves_csv,
    severe_mismatch_pair,
)
from .keyrate import (
    REFERENCE_BOUNDS,
    InfeasibleBounds,
    KeyRateInputs,
    key_rate_report,
    loss_sweep,
    resolution_comparison,
    secret_key_rate,
)
from .leakage import eve_information
from .protocol import DEFAULT_DROOP, DriveWaveform, ReceiverConfig, predicted_bias, predicted_qber
from .stats import QBER_ABORT_THRESHOLD, abort_check

log = logging.getLogger("qkd_mismatch")

EXIT_OK, EXIT_ORACLE, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ABORT = 0, 1, 2, 3, 4

DEFAULT_CONFIG = {
    "seed": None,
    "curves": {"fixture": "severe", "dt_ps": 4.5, "period_ps": 990.0},
    "receiver": {
        "mode": "two-state",
        "visibility": 0.94,
        "deadtime_cycles": 0,
        "arrival_ps": None,
        "waveform": {
            "shape": DEFAULT_DROOP.shape,
            "rise_fall_ps": DEFAULT_DROOP.rise_fall_ps,
            "plateau_ps": DEFAULT_DROOP.plateau_ps,
        },
    },
    "sweep": {"dt_ps": 4.5, "span_ps": 1000.0, "n_pulses": 100000, "workers": 1},
    "attack": {"qber_cap": QBER_ABORT_THRESHOLD},
    "keyrate": {
        "e_bit_obs": 0.03,
        "e_phase_obs": 0.03,
        "f_ec": 1.10,
        "dt_fine": 4.5,
        "dt_coarse": 49.5,
        "refine_phase": False,
    },
    "loss": {
        "grid_db": {"start": 0.0, "stop": 60.0, "step": 0.5},
        "source": "table",
        "table_dt_ps": 49.5,
        "detector_efficiency": 0.2,
        "dark_prob": 2e-5,
        "e_optical": 0.03,
    },
    "oracle": {"lp_instances": 200, "max_bins": 8, "mc_pulses": 1000000},
    "output": {"dir": "out"},
}


class ConfigError(ValueError):
    pass


# -- config handling ------------------------------------------------------------


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _set_path(config: dict, dotted: str, value) -> None:
    node = config
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {key} is not a section")
    node[leaf] = value


def _parse_override(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} must look like key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_config(args: argparse.Namespace) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            with open(args.config) as fh:
                config = _merge(config, json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from None
    shortcuts = {
        "seed": "seed",
        "mode": "receiver.mode",
        "out": "output.dir",
        "curves_csv": "curves.csv",
        "n_pulses": "sweep.n_pulses",
        "workers": "sweep.workers",
    }
    for attr, key in shortcuts.items():
        value = getattr(args, attr, None)
        if value is not None:
            _set_path(config, key, value)
    for item in args.set or []:
        _set_path(config, *_parse_override(item))
    if config.get("seed") is None:
        raise ConfigError("a seed is required (config key 'seed' or --seed)")
    if not isinstance(config["seed"], int) or config["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    return config


def load_pair(section: dict) -> DetectorPair:
    if section.get("csv"):
        return load_curves_csv(section["csv"], period_ps=section.get("period_ps"), dark_prob=section.get("dark_prob"))
    kind = section.get("fixture", "severe")
    kwargs = {k: v for k, v in section.items() if k not in ("fixture", "csv")}
    for key in ("peaks", "fwhm_ps"):
        if key in kwargs and isinstance(kwargs[key], list):
            kwargs[key] = tuple(kwargs[key])
    if kind == "severe":
        return severe_mismatch_pair(**kwargs)
    if kind == "matched":
        return matched_pair(**kwargs)
    raise ConfigError(f"unknown curve fixture {kind!r}")


def load_receiver(section: dict) -> ReceiverConfig:
    wf = DriveWaveform(**section.get("waveform", {}))
    return ReceiverConfig(
        mode=Mode(section["mode"]),
        waveform=wf,
        visibility=section["visibility"],
        deadtime_cycles=section["deadtime_cycles"],
        arrival_ps=section.get("arrival_ps"),
    )


def keyrate_inputs(section: dict) -> KeyRateInputs:
    return KeyRateInputs(section["e_bit_obs"], section["e_phase_obs"], section["f_ec"])


def loss_grid(grid) -> np.ndarray:
    if isinstance(grid, dict):
        n = int(round((grid["stop"] - grid["start"]) / grid["step"])) + 1
        return grid["start"] + grid["step"] * np.arange(n)
    return np.asarray(grid, dtype=float)


# -- output helpers ---------------------------------------------------------------


def _out_dir(config: dict) -> Path:
    path = Path(config["output"]["dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- subcommands --------------------------------------------------------------------


def cmd_characterize(config: dict) -> int:
    pair = load_pair(config["curves"])
    receiver = load_receiver(config["receiver"])
    sweep = config["sweep"]
    shifts = sweep_shifts(sweep["dt_ps"], sweep["span_ps"])
    rows = sweep_characterization(
        pair, receiver, shifts, int(sweep["n_pulses"]), config["seed"], workers=int(sweep["workers"])
    )
    out = _out_dir(config)
    write_sweep_csv(rows, out / "sweep.csv")
    save_curves_csv(pair, out / "curves.csv")
    q = predicted_qber(pair, receiver, shifts)
    b = predicted_bias(pair, receiver, shifts)
    window = shifts[q <= QBER_ABORT_THRESHOLD]
    summary = {
        "mode": receiver.mode.value,
        "seed": config["seed"],
        "points": len(rows),
        "n_pulses_per_point": int(sweep["n_pulses"]),
        "window_ps": [float(window.min()), float(window.max())] if window.size else None,
        "max_abs_bias_in_window": float(np.abs(b[q <= QBER_ABORT_THRESHOLD]).max()) if window.size else None,
        "measured_qber": [s.errors / s.sifted if s.sifted else None for _, s in rows],
    }
    write_json(summary, out / "sweep_summary.json")
    log.info("wrote %d sweep points to %s", len(rows), out / "sweep.csv")
    return EXIT_OK


def cmd_attack(config: dict) -> int:
    pair = load_pair(config["curves"])
    receiver = load_receiver(config["receiver"])
    result = optimize_shift_pair(pair, receiver, config["attack"]["qber_cap"])
    report = {"mode": receiver.mode.value, **result.to_dict()}
    if result.feasible:
        strategy = result.strategy()
        shifts = [result.t1_ps, result.t2_ps]
        bias = predicted_bias(pair, receiver, shifts)
        report["bias"] = [float(x) for x in bias]
        report["eve_info_check"] = eve_information(pair, receiver, strategy)
    else:
        report["qber"] = None
        report["bias"] = None
    write_json(report, _out_dir(config) / "attack.json")
    log.info("eve information %.4f bits", result.eve_info_bits)
    return EXIT_OK


def cmd_keyrate(config: dict) -> int:
    pair = load_pair(config["curves"])
    receiver = load_receiver(config["receiver"])
    kr = config["keyrate"]
    inputs = keyrate_inputs(kr)
    cap = config["attack"]["qber_cap"]
    if abort_check(inputs.e_bit_obs, cap):
        log.error("observed QBER %.4f exceeds the abort threshold", inputs.e_bit_obs)
        return EXIT_ABORT
    reports = []
    for mode in (Mode.TWO_STATE, Mode.FOUR_STATE):
        rec = receiver.with_mode(mode)
        if abort_check(float(predicted_qber(pair, rec, [0.0])[0]), cap):
            log.error("%s receiver aborts at zero shift", mode.value)
            return EXIT_ABORT
        fine, coarse = resolution_comparison(
            pair, rec, kr["dt_fine"], kr["dt_coarse"], inputs, refine_phase=kr["refine_phase"], qber_cap=cap
        )
        reports += [fine.to_dict(), coarse.to_dict()]
    ideal = secret_key_rate(1.0, inputs.e_phase_obs, inputs.e_bit_obs, inputs.f_ec)
    write_json({"reports": reports, "ideal_rate": ideal}, _out_dir(config) / "keyrate.json")
    return EXIT_OK


def cmd_sweep_loss(config: dict) -> int:
    section = config["loss"]
    inputs = keyrate_inputs(config["keyrate"])
    if section["source"] == "table":
        dt = float(section["table_dt_ps"])
        if dt not in REFERENCE_BOUNDS:
            raise ConfigError(f"no tabulated bounds for dt {dt} ps")
        per_mode = {m: REFERENCE_BOUNDS[dt][m][:2] for m in (Mode.TWO_STATE, Mode.FOUR_STATE)}
    elif section["source"] == "pipeline":
        pair = load_pair(config["curves"])
        receiver = load_receiver(config["receiver"])
        per_mode = {}
        for mode in (Mode.TWO_STATE, Mode.FOUR_STATE):
            rep = key_rate_report(pair, receiver.with_mode(mode), inputs, refine_phase=config["keyrate"]["refine_phase"])
            per_mode[mode] = (rep.p_succ, rep.e_phase)
    else:
        raise ConfigError(f"unknown loss source {section['source']!r}")
    curves = loss_sweep(
        loss_grid(section["grid_db"]),
        per_mode,
        inputs,
        section["detector_efficiency"],
        section["dark_prob"],
        section["e_optical"],
    )
    cols = ("loss_db", "rate_ideal", "rate_two_state", "rate_four_state")
    lines = [",".join(cols)]
    for row in zip(*(curves[c] for c in cols)):
        lines.append(",".join(repr(float(v)) for v in row))
    (_out_dir(config) / "loss.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_oracle(config: dict) -> int:
    from .oracles import run_oracles

    section = config["oracle"]
    result = run_oracles(
        config["seed"],
        lp_instances=int(section["lp_instances"]),
        max_bins=int(section["max_bins"]),
        mc_pulses=int(section["mc_pulses"]),
        pair=load_pair(config["curves"]),
        receiver=load_receiver(config["receiver"]),
    )
    write_json(result, _out_dir(config) / "oracle.json")
    for name, check in result["checks"].items():
        log.info("%s: %s", name, "pass" if check["passed"] else "FAIL")
    return EXIT_OK if all(c["passed"] for c in result["checks"].values()) else EXIT_ORACLE


COMMANDS = {
    "characterize": cmd_characterize,
    "attack": cmd_attack,
    "keyrate": cmd_keyrate,
    "sweep-loss": cmd_sweep_loss,
    "oracle": cmd_oracle,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkd-mismatch", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("-c", "--config", help="JSON config file")
        p.add_argument("-v", "--verbose", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--mode", choices=[m.value for m in Mode])
        p.add_argument("--out", help="output directory")
        p.add_argument("--curves-csv", help="measured curves instead of a fixture")
        p.add_argument("--n-pulses", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (JSON value)")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = build_config(args)
        return COMMANDS[args.command](config)
    except (ConfigError, CurveError, FileNotFoundError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InfeasibleBounds):
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
