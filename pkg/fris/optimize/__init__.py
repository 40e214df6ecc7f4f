"""Optimizers for traditional, position-reconfigurable and pattern-reconfigurable surfaces."""
from fris.optimize.alignment import align_phases_closed_form, aligned_phases
from fris.optimize.diagnostics import (
    TRACE_FIELDS,
    TraceRow,
    max_phase_deviation,
    phase_spread,
    write_trace_csv,
)
from fris.optimize.discrete import (
    BRUTE_FORCE_LIMIT,
    CeoParams,
    DiscreteProblem,
    SearchResult,
    brute_force_discrete,
    cross_entropy_search,
)
from fris.optimize.patterns import (
    GradientMethod,
    PatternOptParams,
    PatternResult,
    ReflectionResult,
    finite_difference_gradient,
    optimize_patterns,
    optimize_reflections,
    pattern_gradient,
    reflection_gradient,
    synthesize_aligned_patterns,
)
from fris.optimize.positions import PositionResult, refine_positions_continuous
from fris.optimize.wmmse import WmmseResult, matched_filter, run_wmmse, wmmse_precoders

__all__ = [
    "BRUTE_FORCE_LIMIT",
    "TRACE_FIELDS",
    "CeoParams",
    "DiscreteProblem",
    "GradientMethod",
    "PatternOptParams",
    "PatternResult",
    "PositionResult",
    "ReflectionResult",
    "SearchResult",
    "TraceRow",
    "WmmseResult",
    "align_phases_closed_form",
    "aligned_phases",
    "brute_force_discrete",
    "cross_entropy_search",
    "finite_difference_gradient",
    "matched_filter",
    "max_phase_deviation",
    "optimize_patterns",
    "optimize_reflections",
    "pattern_gradient",
    "phase_spread",
    "reflection_gradient",
    "refine_positions_continuous",
    "run_wmmse",
    "synthesize_aligned_patterns",
    "wmmse_precoders",
    "write_trace_csv",
]
