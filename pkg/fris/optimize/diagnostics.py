"""Alignment diagnostics and optimizer trace persistence."""
import csv
import math
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from fris.channel import wrap_phase
from fris.errors import UndefinedSpreadError

TRACE_FIELDS = ("iteration", "best_objective", "mean_objective", "entropy")

# Phasors below this fraction of the largest carry no usable phase
NEGLIGIBLE_FRACTION = 1e-9


class TraceRow(NamedTuple):
    iteration: int
    best_objective: float
    mean_objective: float
    entropy: float = math.nan


def _nonzero(phasors) -> np.ndarray:
    values = np.asarray(phasors, dtype=complex).ravel()
    magnitudes = np.abs(values)
    values = values[magnitudes > NEGLIGIBLE_FRACTION * magnitudes.max(initial=0.0)]
    if values.size == 0:
        raise UndefinedSpreadError("phase spread needs at least one nonzero phasor")
    return values


def phase_spread(phasors) -> float:
    """Circular spread 1 − |Σ e^{j∠x}|/n; 0 means perfectly aligned"""
    values = _nonzero(phasors)
    resultant = abs(np.sum(np.exp(1j * np.angle(values)))) / values.size
    return float(min(1.0, max(0.0, 1.0 - resultant)))


def max_phase_deviation(phasors) -> float:
    """Largest pairwise circular phase difference, in degrees"""
    angles = np.angle(_nonzero(phasors))
    differences = np.abs(wrap_phase(angles[:, None] - angles[None, :]))
    return float(np.degrees(np.max(differences)))


def _format(value: float) -> str:
    return "" if isinstance(value, float) and math.isnan(value) else repr(value)


def write_trace_csv(rows: Iterable[TraceRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for row in rows:
            writer.writerow([row.iteration, _format(float(row.best_objective)),
                             _format(float(row.mean_objective)), _format(float(row.entropy))])
    return path
