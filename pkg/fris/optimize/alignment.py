"""Closed-form phase alignment for a traditional surface."""
from typing import Optional

import numpy as np

from fris.channel import wrap_phase
from fris.metrics import Scenario, SurfaceState, element_aggregates
from fris.surface import ReflectionConfig, quantize_phase


def aligned_phases(aggregates: np.ndarray, bits: Optional[int] = None) -> np.ndarray:
    """−∠c_m, quantized per element when bits is given"""
    phases = wrap_phase(-np.angle(np.asarray(aggregates, dtype=complex)))
    phases = np.atleast_1d(phases)
    return phases if bits is None else np.atleast_1d(quantize_phase(phases, bits))


def align_phases_closed_form(scenario: Scenario, state: SurfaceState,
                             bits: Optional[int] = None) -> ReflectionConfig:
    """Co-phase every element aggregate; reaches the coherent-combining bound"""
    phases = aligned_phases(element_aggregates(scenario, state), bits)
    return ReflectionConfig(phases, bits)
