"""Beacon propagation along a two-lane highway with virtual-MIMO combining.

The package pairs a closed-form renewal model of the information
propagation speed (IPS) with a seeded slot-level simulator.
"""

__version__ = "0.1.0"

from .core import (DegenerateModelError, InvalidParameterError, ScenarioParams,
                   combined_snr_statistic, decode_test, detect_test, ranges_from_thresholds)
from .analytic import (analytic_report, asymptotics_report, blocking_probability,
                       expected_max_hop, ips_conventional, ips_vmimo,
                       mc_blocking_probability, mc_expected_max_hop, transition_probabilities)
from .engine import (FLOODING, REVERSE_AIDED, VMIMO, Budget, IpsEstimate, SchemeKind,
                     coupled_dominance_run, estimate_ips, run_scenario, simulate)
from .experiments import SweepSpec, compare_schemes, emit_csv, run_sweep

__all__ = [
    "DegenerateModelError", "InvalidParameterError", "ScenarioParams",
    "combined_snr_statistic", "decode_test", "detect_test", "ranges_from_thresholds",
    "analytic_report", "asymptotics_report", "blocking_probability", "expected_max_hop",
    "ips_conventional", "ips_vmimo", "mc_blocking_probability", "mc_expected_max_hop",
    "transition_probabilities",
    "FLOODING", "REVERSE_AIDED", "VMIMO", "Budget", "IpsEstimate", "SchemeKind",
    "coupled_dominance_run", "estimate_ips", "run_scenario", "simulate",
    "SweepSpec", "compare_schemes", "emit_csv", "run_sweep",
]
