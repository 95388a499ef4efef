"""Block coordinate gradient coding under partial stragglers.

Optimizes how many model coordinates get each redundancy level so that a
master recovers the full gradient quickly (expected runtime) or reliably
(completion probability), and simulates the resulting coded scheme.
"""

from .ballot import count as ballot_count
from .codec import CodeBlock, DecodingError, allocate, build_code, decode, run_coded_gd
from .opt_cdf import (
    CompletionProbabilityOptimizer,
    SscaSolverOptions,
    closed_form_large_t,
    solve_completion_probability,
)
from .opt_runtime import (
    ExpectedRuntimeOptimizer,
    SubgradientSolverOptions,
    closed_form_deterministic_frequencies,
    closed_form_deterministic_times,
    solve_expected_runtime,
)
from .projection import project_to_simplex_scaled
from .runtime import (
    SchemeEvaluation,
    SystemConfig,
    completion_prob_exact,
    completion_prob_mc,
    expected_runtime_mc,
    runtime_of_s,
    runtime_of_x,
    s_to_x,
    x_to_s,
)
from .schemes import SchemeSpec, compare_schemes, round_allocation, single_bcgc
from .straggler import Bernoulli, Empirical, ShiftedExponential
from .validation import InfeasibleAllocationError

__version__ = "0.1.0"

__all__ = [
    "Bernoulli",
    "CodeBlock",
    "CompletionProbabilityOptimizer",
    "DecodingError",
    "Empirical",
    "ExpectedRuntimeOptimizer",
    "InfeasibleAllocationError",
    "SchemeEvaluation",
    "SchemeSpec",
    "ShiftedExponential",
    "SscaSolverOptions",
    "SubgradientSolverOptions",
    "SystemConfig",
    "allocate",
    "ballot_count",
    "build_code",
    "closed_form_deterministic_frequencies",
    "closed_form_deterministic_times",
    "closed_form_large_t",
    "compare_schemes",
    "completion_prob_exact",
    "completion_prob_mc",
    "decode",
    "expected_runtime_mc",
    "project_to_simplex_scaled",
    "round_allocation",
    "run_coded_gd",
    "runtime_of_s",
    "runtime_of_x",
    "s_to_x",
    "single_bcgc",
    "solve_completion_probability",
    "solve_expected_runtime",
    "x_to_s",
]
