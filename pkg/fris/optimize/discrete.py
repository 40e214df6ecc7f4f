"""
Discrete position/phase search
==============================
Activation-mask plus b-bit phase selection for position-reconfigurable
surfaces: exhaustive oracle and cross-entropy search.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import entr

from fris.channel import wrap_phase
from fris.errors import InvalidProblemError, SearchSpaceTooLargeError
from fris.metrics import Scenario, SurfaceState, element_aggregates
from fris.optimize.alignment import aligned_phases
from fris.optimize.diagnostics import TraceRow
from fris.streams import Stream, substream
from fris.surface import (
    ActivationMask,
    PatternKind,
    Patterns,
    ReflectionConfig,
    baseline_pattern,
    codebook,
    quantize_index,
    uniform_mask,
)

logger = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 10 ** 7
_CHUNK = 1 << 16


class SearchResult(NamedTuple):
    state: SurfaceState
    objective: float
    trace: tuple[TraceRow, ...] = ()


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """Choose M̂ of M positions and one of 2^b codewords per active element.

    With ``bits=None`` the phases are continuous and set in closed form, so
    only the mask is searched. The objective is the achievable rate when the
    scenario has noise, the received power otherwise.
    """
    scenario: Scenario
    active_count: int
    bits: Optional[int] = 1
    patterns: Patterns = field(default_factory=lambda: baseline_pattern(PatternKind.ISOTROPIC))

    def __post_init__(self):
        M = self.scenario.geometry.element_count
        if not 1 <= self.active_count <= M:
            raise InvalidProblemError(f"cannot activate {self.active_count} of {M} elements")
        if self.bits is not None and self.bits < 1:
            raise InvalidProblemError(f"phase resolution must be at least 1 bit, got {self.bits}")
        if self.scenario.is_multiuser:
            raise InvalidProblemError("discrete search needs a single-user scenario")

    @property
    def element_count(self) -> int:
        return self.scenario.geometry.element_count

    @property
    def codeword_count(self) -> int:
        return 1 if self.bits is None else 2 ** self.bits

    @property
    def search_space_size(self) -> int:
        return math.comb(self.element_count, self.active_count) * self.codeword_count ** self.active_count

    @cached_property
    def aggregates(self) -> np.ndarray:
        state = SurfaceState.initial(self.element_count, patterns=self.patterns)
        return element_aggregates(self.scenario, state)

    @cached_property
    def _normalization(self) -> float:
        pair = self.scenario.single_user_channel()
        return 1.0 / (pair.L * pair.Z)

    def evaluate(self, indices: np.ndarray, codes: Optional[np.ndarray] = None) -> np.ndarray:
        """Objective of each row of (N, M̂) indices and codes"""
        c = self.aggregates[np.asarray(indices, dtype=int)]
        if self.bits is None:
            amplitude = np.sum(np.abs(c), axis=-1)
        else:
            phasors = np.exp(1j * codebook(self.bits)[np.asarray(codes, dtype=int)])
            amplitude = np.abs(np.sum(phasors * c, axis=-1))
        signal = amplitude ** 2 * self._normalization
        noise = self.scenario.noise_power
        return np.log2(1.0 + signal / noise) if noise > 0 else signal + noise

    def state_for(self, indices, codes=None) -> SurfaceState:
        indices = np.asarray(indices, dtype=int)
        phases = np.zeros(self.element_count)
        if self.bits is None:
            phases[indices] = aligned_phases(self.aggregates[indices])
        else:
            phases[indices] = codebook(self.bits)[np.asarray(codes, dtype=int)]
        return SurfaceState(
            ActivationMask.from_indices(self.element_count, indices),
            ReflectionConfig(phases, self.bits),
            self.patterns,
        )

    def traditional_candidate(self) -> tuple[np.ndarray, Optional[np.ndarray]]:
        """Uniform layout with closed-form (quantized) phases"""
        indices = uniform_mask(self.scenario.geometry, self.active_count).indices
        if self.bits is None:
            return indices, None
        return indices, quantize_index(wrap_phase(-np.angle(self.aggregates[indices])), self.bits)

    def traditional_objective(self) -> float:
        indices, codes = self.traditional_candidate()
        return float(self.evaluate(indices[None, :], None if codes is None else codes[None, :])[0])


# ============================================================
# Exhaustive oracle
# ============================================================

def _code_digits(start: int, stop: int, base: int, width: int) -> np.ndarray:
    numbers = np.arange(start, stop, dtype=np.int64)[:, None]
    powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
    return (numbers // powers) % base


def brute_force_discrete(problem: DiscreteProblem, limit: int = BRUTE_FORCE_LIMIT) -> SearchResult:
    """Global optimum by enumeration; ties resolved by lexicographic order"""
    size = problem.search_space_size
    if size > limit:
        raise SearchSpaceTooLargeError(size, limit)

    width = problem.active_count
    n_codes = problem.codeword_count ** width
    combos_per_chunk = max(1, _CHUNK // n_codes)
    code_chunk = min(n_codes, _CHUNK)
    combinations = itertools.combinations(range(problem.element_count), width)

    best_objective, best_indices, best_codes = -math.inf, None, None
    while True:
        combos = np.array(list(itertools.islice(combinations, combos_per_chunk)), dtype=int)
        if combos.size == 0:
            break
        if problem.bits is None:
            values = problem.evaluate(combos)
            i = int(np.argmax(values))
            if values[i] > best_objective:
                best_objective, best_indices = float(values[i]), combos[i]
            continue
        for start in range(0, n_codes, code_chunk):
            codes = _code_digits(start, min(start + code_chunk, n_codes), problem.codeword_count, width)
            indices = np.repeat(combos, len(codes), axis=0)
            tiled = np.tile(codes, (len(combos), 1))
            values = problem.evaluate(indices, tiled)
            i = int(np.argmax(values))
            if values[i] > best_objective:
                best_objective, best_indices, best_codes = float(values[i]), indices[i], tiled[i]

    logger.debug("Exhaustive search over %d configurations: best %.6g", size, best_objective)
    return SearchResult(problem.state_for(best_indices, best_codes), best_objective)


# ============================================================
# Cross-entropy search
# ============================================================

@dataclass(frozen=True)
class CeoParams:
    """Cross-entropy hyperparameters"""
    population: int = 200
    elite_fraction: float = 0.1
    smoothing: float = 0.7
    max_iterations: int = 100
    convergence: float = 0.99
    seed_traditional: bool = True

    def __post_init__(self):
        if self.population < 10:
            raise InvalidProblemError(f"population must be at least 10, got {self.population}")
        if not 0 < self.elite_fraction < 1:
            raise InvalidProblemError(f"elite fraction must lie in (0, 1), got {self.elite_fraction}")
        if not 0 < self.smoothing <= 1:
            raise InvalidProblemError(f"smoothing must lie in (0, 1], got {self.smoothing}")
        if self.max_iterations < 1:
            raise InvalidProblemError(f"need at least one iteration, got {self.max_iterations}")
        if not 0.5 < self.convergence <= 1:
            raise InvalidProblemError(f"convergence threshold must lie in (0.5, 1], got {self.convergence}")

    @property
    def elite_count(self) -> int:
        return max(1, math.ceil(round(self.elite_fraction * self.population, 9)))


class _Candidate(NamedTuple):
    indices: np.ndarray
    codes: Optional[np.ndarray]


def _sample_candidate(seed: int, iteration: int, index: int, log_p: np.ndarray,
                      cdf: Optional[np.ndarray], active_count: int) -> _Candidate:
    rng = substream(seed, Stream.CEO, iteration, index)
    # Gumbel-top-k draws M̂ positions without replacement, weights p
    keys = log_p + rng.gumbel(size=log_p.size)
    indices = np.sort(np.argsort(-keys, kind="stable")[:active_count])
    if cdf is None:
        return _Candidate(indices, None)
    u = rng.random(active_count)
    codes = np.sum(cdf[indices] <= u[:, None], axis=1)
    return _Candidate(indices, np.minimum(codes, cdf.shape[1] - 1))


def _entropy(p: np.ndarray, q: Optional[np.ndarray]) -> float:
    total = float(np.sum(entr(p) + entr(1.0 - p)))
    if q is not None:
        total += float(np.sum(entr(q)))
    return total


def _converged(p: np.ndarray, q: Optional[np.ndarray], threshold: float) -> bool:
    if np.any(np.maximum(p, 1.0 - p) < threshold):
        return False
    if q is None:
        return True
    selected = p >= 0.5
    return bool(np.all(q[selected].max(axis=1) >= threshold))


def cross_entropy_search(problem: DiscreteProblem, params: CeoParams = CeoParams(), seed: int = 0,
                         workers: int = 1) -> SearchResult:
    """Cross-entropy search over masks and codewords.

    Keeps an inclusion-probability table over positions and a categorical
    table over codewords per position, tilts both toward the elite fraction
    of every sampled population and returns the best candidate ever seen.
    Candidate i of iteration t draws from its own substream, so the result
    does not depend on ``workers``.
    """
    M, M_hat = problem.element_count, problem.active_count
    n_words = problem.codeword_count
    alpha = params.smoothing
    p = np.full(M, M_hat / M)
    q = None if problem.bits is None else np.full((M, n_words), 1.0 / n_words)

    best_objective, best = -math.inf, None
    trace: list[TraceRow] = []
    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for t in range(params.max_iterations):
            log_p = np.log(np.maximum(p, 1e-300))
            cdf = None if q is None else np.cumsum(q, axis=1)

            def draw(i: int) -> _Candidate:
                return _sample_candidate(seed, t, i, log_p, cdf, M_hat)

            candidates = list(executor.map(draw, range(params.population)) if executor
                              else map(draw, range(params.population)))
            if t == 0 and params.seed_traditional:
                candidates[0] = _Candidate(*problem.traditional_candidate())

            indices = np.stack([c.indices for c in candidates])
            codes = None if q is None else np.stack([c.codes for c in candidates])
            objectives = problem.evaluate(indices, codes)

            i = int(np.argmax(objectives))
            if objectives[i] > best_objective:
                best_objective, best = float(objectives[i]), candidates[i]

            elites = np.argsort(-objectives, kind="stable")[:params.elite_count]
            membership = np.zeros((len(elites), M))
            np.put_along_axis(membership, indices[elites], 1.0, axis=1)
            p = (1 - alpha) * p + alpha * membership.mean(axis=0)

            if q is not None:
                counts = np.zeros((M, n_words))
                np.add.at(counts, (indices[elites].ravel(), codes[elites].ravel()), 1.0)
                totals = counts.sum(axis=1, keepdims=True)
                empirical = np.where(totals > 0, counts / np.maximum(totals, 1.0), q)
                q = (1 - alpha) * q + alpha * empirical

            trace.append(TraceRow(t, best_objective, float(np.mean(objectives)), _entropy(p, q)))
            logger.debug("CEO iteration %d: best %.6g mean %.6g", t, best_objective, trace[-1].mean_objective)
            if _converged(p, q, params.convergence):
                break
    finally:
        if executor is not None:
            executor.shutdown()

    logger.info("CEO finished after %d iterations, best objective %.6g", len(trace), best_objective)
    return SearchResult(problem.state_for(best.indices, best.codes), best_objective, tuple(trace))
