"""Continuous (motor-driven) element positioning."""
import logging
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from fris.metrics import Scenario, SurfaceState, achievable_rate, path_terms, received_power
from fris.optimize.alignment import align_phases_closed_form, aligned_phases
from fris.surface import PatternCoeffs, SurfaceGeometry

logger = logging.getLogger(__name__)

CELL_FRACTION = 0.49


class PositionResult(NamedTuple):
    geometry: SurfaceGeometry
    state: SurfaceState
    objective: float


def _objective(scenario: Scenario, power: float) -> float:
    noise = scenario.noise_power
    return achievable_rate(power, noise) if noise > 0 else power


def refine_positions_continuous(scenario: Scenario, state: SurfaceState, bits: Optional[int] = None,
                                sweeps: int = 2) -> PositionResult:
    """Move each active element inside its lattice cell, one coordinate at a time.

    Every trial position re-aligns phases in closed form; a move is kept only
    when it improves the objective, so the result never falls below the start.
    """
    pair = scenario.single_user_channel()
    geometry = scenario.geometry
    active = state.mask.indices
    patterns = state.patterns
    positions = np.array(geometry.positions)
    half_width = CELL_FRACTION * geometry.spacing
    scale = 1.0 / (pair.L * pair.Z)

    def element_pattern(m):
        if isinstance(patterns, PatternCoeffs):
            return patterns.with_coefficients(patterns.coefficients[m:m + 1])
        return patterns

    def aggregate(m, position):
        return path_terms(pair, position[None, :], element_pattern(m)).sum()

    def objective(c):
        phasors = np.exp(1j * aligned_phases(c, bits))
        power = abs(np.sum(phasors * c)) ** 2 * scale + scenario.noise_power
        return _objective(scenario, power)

    c = np.array([aggregate(m, positions[m]) for m in active])
    current = objective(c)
    for sweep in range(sweeps):
        for i, m in enumerate(active):
            for axis in (0, 1):
                centre = geometry.lattice_point(m)[axis]

                def negative(x, i=i, m=m, axis=axis):
                    trial = positions[m].copy()
                    trial[axis] = x
                    moved = c.copy()
                    moved[i] = aggregate(m, trial)
                    return -objective(moved)

                outcome = minimize_scalar(negative, bounds=(centre - half_width, centre + half_width),
                                          method="bounded", options={"xatol": 1e-6 * geometry.spacing})
                if -outcome.fun > current:
                    positions[m, axis] = outcome.x
                    c[i] = aggregate(m, positions[m])
                    current = objective(c)
        logger.debug("Position sweep %d: objective %.6g", sweep, current)

    moved_geometry = geometry.with_positions(positions)
    moved_scenario = scenario.with_geometry(moved_geometry)
    refined = state.with_reflection(align_phases_closed_form(moved_scenario, state, bits))
    return PositionResult(moved_geometry, refined, _objective(moved_scenario, received_power(moved_scenario, refined)))
