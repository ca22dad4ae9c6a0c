"""Phase-encoding BB84 with time-dependent detector efficiency mismatch.

Simulates a two-detector receiver under a time-shift attack, in standard
two-state demodulation and with the four-state countermeasure, and bounds
the secret key rate from the characterised efficiency curves.
"""

from .attack import AttackResult, optimize_shift_pair, sweep_characterization
from .channel import EveStrategy, apply_channel
from .detector import (
    DetectorPair,
    GateEfficiencyCurve,
    Mode,
    load_curves_csv,
    logical_curves,
    make_gate_curve,
    resample,
    save_curves_csv,
    severe_mismatch_pair,
    shift_curve,
)
from .keyrate import (
    KeyRateInputs,
    KeyRateReport,
    analytic_phase_bound,
    binary_entropy,
    optimize_bounds,
    procrustean_success,
    rate_vs_loss,
    resolution_comparison,
    secret_key_rate,
    static_prefactor,
)
from .leakage import eve_information
from .protocol import (
    DEFAULT_DROOP,
    AliceChoice,
    BobChoice,
    DriveWaveform,
    ReceiverConfig,
    click_probabilities,
    run_session,
    sift,
)
from .stats import CountsSummary, abort_check, bias_contrast, binomial_sigma, qber

__all__ = [name for name in dir() if not name.startswith("_")]
