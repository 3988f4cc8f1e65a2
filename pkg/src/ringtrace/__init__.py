"""Traceability analysis for ring-signature blockchains.

Deduction attacks, mixin-selection policies, temporal metrics and a Monte Carlo
harness, all operating on a small in-memory chain model.
"""

__version__ = "0.1.0"

from .chain import Block, Chain, GroundTruth, OutRef, Output, RingInput, Transaction  # noqa: E402
from .chaingen import GenConfig, SpendTimeModel, generate_chain, read_chain, read_ground_truth, write_chain  # noqa: E402
from .deduction import DeductionResult, closure_deduce, fixpoint_deduce, score_against_truth  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .errors import __all__ as _error_names  # noqa: E402
from .montecarlo import (SimConfig, SimReport, estimate_mixin_age_density, fit_gamma_log_spendtime,  # noqa: E402
                         ks_distance, simulate_policy)
from .sampling import Policy, assign_bins, parse_policy  # noqa: E402
from .temporal import (bge_min, effective_untraceability, ge_min, guess_newest, guessing_entropy,  # noqa: E402
                       min_untraceability_table, posterior_real_spend)

__all__ = [
    "Block", "Chain", "GroundTruth", "OutRef", "Output", "RingInput", "Transaction",
    "GenConfig", "SpendTimeModel", "generate_chain", "read_chain", "read_ground_truth", "write_chain",
    "DeductionResult", "closure_deduce", "fixpoint_deduce", "score_against_truth",
    "SimConfig", "SimReport", "estimate_mixin_age_density", "fit_gamma_log_spendtime", "ks_distance",
    "simulate_policy", "Policy", "assign_bins", "parse_policy",
    "bge_min", "effective_untraceability", "ge_min", "guess_newest", "guessing_entropy",
    "min_untraceability_table", "posterior_real_spend", "__version__",
] + list(_error_names)
