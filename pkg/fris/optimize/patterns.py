"""
Pattern and reflection optimization
===================================
Weighted-sum-rate maximization for the multi-user downlink:

* pattern-reconfigurable surfaces: projected-gradient ascent on the spherical
  coefficients of every active element, alternating with WMMSE precoding;
* traditional surfaces (fixed element pattern): projected-gradient ascent on
  unit-modulus reflection coefficients, alternating with WMMSE;
* single-user surfaces with one path on a hop: exact path-aligned synthesis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
from scipy.linalg import eigh, solve
from scipy.optimize import minimize

from fris.channel import MultiUserChannel, as_multiuser, cascaded_phases
from fris.errors import InvalidProblemError
from fris.metrics import (
    Mode,
    PrecoderSet,
    Scenario,
    SurfaceState,
    received_power,
    user_channel_terms,
    weighted_sum_rate,
)
from fris.optimize.alignment import align_phases_closed_form
from fris.optimize.diagnostics import TraceRow
from fris.optimize.wmmse import run_wmmse
from fris.streams import Stream, substream
from fris.surface import (
    DEFAULT_ENERGY_BUDGET,
    DEFAULT_SH_ORDER,
    ActivationMask,
    BaselinePattern,
    PatternCoeffs,
    PatternKind,
    Patterns,
    ReflectionConfig,
    baseline_pattern,
    project_pattern_energy,
    spherical_basis,
)

logger = logging.getLogger(__name__)

# Smallest path magnitude in aligned synthesis, relative to the budget-limited one
MAGNITUDE_FLOOR = 1e-3


class GradientMethod(str, Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


@dataclass(frozen=True)
class PatternOptParams:
    """Step control for the alternating pattern / reflection ascent"""
    step_size: float = 0.5
    max_iterations: int = 100
    backtrack_factor: float = 0.5
    max_backtracks: int = 20
    wmmse_iterations: int = 50
    tolerance: float = 1e-7
    gradient: GradientMethod = GradientMethod.ANALYTIC
    fd_step: float = 1e-6
    order: int = DEFAULT_SH_ORDER
    energy_budget: float = DEFAULT_ENERGY_BUDGET
    synthesis: bool = True

    def __post_init__(self):
        positive = {
            "step_size": self.step_size,
            "max_iterations": self.max_iterations,
            "max_backtracks": self.max_backtracks,
            "wmmse_iterations": self.wmmse_iterations,
            "tolerance": self.tolerance,
            "fd_step": self.fd_step,
            "energy_budget": self.energy_budget,
        }
        for name, value in positive.items():
            if not value > 0:
                raise InvalidProblemError(f"{name} must be positive, got {value}")
        if not 0 < self.backtrack_factor < 1:
            raise InvalidProblemError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        if self.order < 0:
            raise InvalidProblemError(f"basis order must be non-negative, got {self.order}")
        object.__setattr__(self, "gradient", GradientMethod(self.gradient))


class PatternResult(NamedTuple):
    state: SurfaceState
    precoders: PrecoderSet
    objective: float
    trace: tuple[TraceRow, ...]

    @property
    def patterns(self) -> PatternCoeffs:
        return self.state.patterns


class ReflectionResult(NamedTuple):
    state: SurfaceState
    precoders: PrecoderSet
    objective: float
    trace: tuple[TraceRow, ...]


# ============================================================
# Multi-user view of a scenario
# ============================================================

class _Downlink:
    """Static tensors of a scenario restricted to the active elements"""

    def __init__(self, scenario: Scenario, mask: ActivationMask):
        if scenario.is_multiuser:
            self.channel: MultiUserChannel = scenario.channel
            self.noise = scenario.noise_power
        else:
            self.channel = as_multiuser(scenario.channel)
            # Rate is monotone in power for any noise level
            self.noise = scenario.noise_power if scenario.noise_power > 0 else 1.0
        if not self.noise > 0:
            raise InvalidProblemError("multi-user optimization needs positive noise power")
        self.power_budget = scenario.power_budget
        self.weights = scenario.user_weights()
        self.active = mask.indices
        self.positions = scenario.geometry.positions[self.active]
        self.steering = self.channel.bs_steering()
        self.users = []
        for k in range(self.channel.K):
            pair = self.channel.user_pair(k)
            geometric = pair.cascaded_gains()[None] * np.exp(1j * cascaded_phases(pair, self.positions))
            self.users.append((geometric, pair.incidence_vectors(), pair.departure_vectors(),
                               1.0 / math.sqrt(pair.L * pair.Z)))

    @property
    def K(self) -> int:
        return self.channel.K

    @property
    def antennas(self) -> int:
        return self.channel.bs_antennas

    def fixed_terms(self, patterns: Patterns) -> list[np.ndarray]:
        """(M̂, L) per-user terms for a fixed pattern"""
        if isinstance(patterns, PatternCoeffs):
            patterns = patterns.with_coefficients(patterns.coefficients[self.active])
        return [user_channel_terms(self.channel, k, self.positions, patterns) for k in range(self.K)]

    def pattern_channels(self, C: np.ndarray, theta: np.ndarray, basis) -> np.ndarray:
        H = []
        for geometric, inc, dep, scale in self.users:
            f_inc = C @ basis.evaluate(inc).T
            f_dep = C @ basis.evaluate(dep).T
            terms = scale * np.einsum("mlz,ml,mz->ml", geometric, f_inc, f_dep)
            H.append((theta @ terms) @ self.steering)
        return np.array(H)

    def rate(self, H: np.ndarray, W: PrecoderSet) -> float:
        return weighted_sum_rate(H, W, self.weights, self.noise)

    def rate_gradients(self, H: np.ndarray, W: PrecoderSet) -> np.ndarray:
        """(K, N_t) Wirtinger derivatives ∂f/∂h_k*"""
        V = W.vectors
        R = V.T @ V.conj()
        G = np.zeros_like(H)
        for k in range(self.K):
            h = H[k]
            Rh = R @ h
            T = float(np.real(h.conj() @ Rh)) + self.noise
            own = V[k] * (V[k].conj() @ h)
            I = T - abs(V[k].conj() @ h) ** 2
            G[k] = self.weights[k] / math.log(2.0) * (Rh / T - (Rh - own) / I)
        return G

    def path_weights(self, H: np.ndarray, W: PrecoderSet) -> np.ndarray:
        """(K, L) γ_{k,l} = G_kᴴ a_l"""
        return self.rate_gradients(H, W).conj() @ self.steering.T


def _pattern_gradient(link: _Downlink, C: np.ndarray, theta: np.ndarray, W: PrecoderSet, basis) -> np.ndarray:
    """Ascent direction ∂f/∂Re C + j ∂f/∂Im C on the active rows"""
    H = link.pattern_channels(C, theta, basis)
    gamma = link.path_weights(H, W)
    X = np.zeros_like(C)
    for k, (geometric, inc, dep, scale) in enumerate(link.users):
        U = basis.evaluate(inc)
        V = basis.evaluate(dep)
        f_inc = C @ U.T
        f_dep = C @ V.T
        weighted = geometric * gamma[k][None, :, None]
        inbound = np.einsum("mlz,mz->ml", weighted, f_dep)
        outbound = np.einsum("mlz,ml->mz", weighted, f_inc)
        X += (scale * theta)[:, None] * (inbound @ U + outbound @ V)
    return 2.0 * X.conj()


def _reflection_gradient(link: _Downlink, terms: list[np.ndarray], theta: np.ndarray, W: PrecoderSet) -> np.ndarray:
    H = np.array([(theta @ b) @ link.steering for b in terms])
    gamma = link.path_weights(H, W)
    Y = sum(b @ gamma[k] for k, b in enumerate(terms))
    return 2.0 * Y.conj()


def _as_downlink_state(scenario: Scenario, state: SurfaceState) -> tuple[_Downlink, np.ndarray, np.ndarray]:
    if not isinstance(state.patterns, PatternCoeffs):
        raise InvalidProblemError("pattern gradient needs coefficient patterns")
    link = _Downlink(scenario, state.mask)
    return link, np.array(state.patterns.coefficients[link.active]), state.reflection.coefficients[link.active]


def pattern_gradient(scenario: Scenario, state: SurfaceState, precoders: PrecoderSet) -> np.ndarray:
    """Analytic (M, Q) weighted-sum-rate gradient at fixed precoders; inactive rows are zero"""
    link, C, theta = _as_downlink_state(scenario, state)
    gradient = np.zeros(state.patterns.coefficients.shape, dtype=complex)
    gradient[link.active] = _pattern_gradient(link, C, theta, precoders, state.patterns.basis)
    return gradient


def finite_difference_gradient(scenario: Scenario, state: SurfaceState, precoders: PrecoderSet,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference counterpart of pattern_gradient"""
    link, C, theta = _as_downlink_state(scenario, state)
    basis = state.patterns.basis
    local = _fd_gradient(link, C, theta, precoders, basis, step)
    gradient = np.zeros(state.patterns.coefficients.shape, dtype=complex)
    gradient[link.active] = local
    return gradient


def _fd_gradient(link: _Downlink, C: np.ndarray, theta: np.ndarray, W: PrecoderSet, basis, step: float) -> np.ndarray:
    def f(coefficients):
        return link.rate(link.pattern_channels(coefficients, theta, basis), W)

    gradient = np.zeros_like(C)
    for index in np.ndindex(C.shape):
        for unit in (1.0, 1j):
            plus, minus = C.copy(), C.copy()
            plus[index] += step * unit
            minus[index] -= step * unit
            gradient[index] += unit * (f(plus) - f(minus)) / (2 * step)
    return gradient


def reflection_gradient(scenario: Scenario, state: SurfaceState, precoders: PrecoderSet) -> np.ndarray:
    """(M,) gradient with respect to the complex reflection coefficients"""
    link = _Downlink(scenario, state.mask)
    gradient = np.zeros(state.element_count, dtype=complex)
    terms = link.fixed_terms(state.patterns)
    gradient[link.active] = _reflection_gradient(link, terms, state.reflection.coefficients[link.active], precoders)
    return gradient


# ============================================================
# Alternating ascent
# ============================================================

def _alternate(link: _Downlink, x0: np.ndarray, channels_of: Callable, direction_of: Callable,
               step_of: Callable, params: PatternOptParams, label: str,
               W0: Optional[PrecoderSet] = None):
    """WMMSE for fixed x, then one backtracked projected-gradient step on x"""
    x = x0
    result = run_wmmse(channels_of(x), link.weights, link.power_budget, link.noise, params.wmmse_iterations,
                       initial=W0)
    W, current = result.precoders, result.trace[-1]
    trace = [TraceRow(0, current, current)]
    eta = params.step_size

    for it in range(1, params.max_iterations + 1):
        direction = direction_of(x, W)
        if not np.any(direction):
            break
        for _ in range(params.max_backtracks + 1):
            candidate = step_of(x, direction, eta)
            if link.rate(channels_of(candidate), W) > current:
                break
            eta *= params.backtrack_factor
        else:
            logger.debug("%s ascent stalled at iteration %d", label, it)
            break
        x = candidate
        result = run_wmmse(channels_of(x), link.weights, link.power_budget, link.noise,
                           params.wmmse_iterations, initial=W)
        W, previous, current = result.precoders, current, result.trace[-1]
        trace.append(TraceRow(it, current, current))
        eta = min(eta / params.backtrack_factor, params.step_size)
        if current - previous <= params.tolerance * max(1.0, abs(previous)):
            break

    logger.debug("%s ascent: %d iterations, WSR %.6g", label, len(trace) - 1, current)
    return x, W, current, tuple(trace)


def _scaled(direction: np.ndarray) -> np.ndarray:
    """Largest row norm becomes 1"""
    return direction / np.max(np.linalg.norm(direction, axis=1))


def optimize_reflections(scenario: Scenario, params: PatternOptParams = PatternOptParams(), seed: int = 0,
                         pattern: Union[PatternKind, str, Patterns] = PatternKind.ISOTROPIC,
                         mask: Optional[ActivationMask] = None) -> ReflectionResult:
    """Traditional surface with a fixed element pattern: WMMSE + unit-modulus ascent.

    Starts from the better of all-zero phases and a seeded random draw.
    """
    M = scenario.geometry.element_count
    mask = mask if mask is not None else ActivationMask.all_active(M)
    patterns = pattern if isinstance(pattern, (PatternCoeffs, BaselinePattern)) else baseline_pattern(pattern)
    link = _Downlink(scenario, mask)
    terms = link.fixed_terms(patterns)

    def channels_of(theta):
        return np.array([(theta @ b) @ link.steering for b in terms])

    def direction_of(theta, W):
        return _reflection_gradient(link, terms, theta, W)

    def step_of(theta, direction, eta):
        return np.exp(1j * np.angle(theta + eta * direction / np.max(np.abs(direction))))

    n = len(link.active)
    starts = [np.ones(n, dtype=complex),
              np.exp(1j * substream(seed, Stream.REFLECTION).uniform(0, 2 * np.pi, n))]
    best = None
    for theta0 in starts:
        outcome = _alternate(link, theta0, channels_of, direction_of, step_of, params, "reflection")
        if best is None or outcome[2] > best[2]:
            best = outcome
    theta, W, objective, trace = best

    phases = np.zeros(M)
    phases[link.active] = np.angle(theta)
    state = SurfaceState(mask, ReflectionConfig(phases), patterns)
    return ReflectionResult(state, W, objective, trace)


def _absorbed_coefficients(state: SurfaceState, order: int, energy_budget: float) -> np.ndarray:
    """Fold reflection phases into the element coefficients (ϑ = 1 afterwards)"""
    M = state.element_count
    if isinstance(state.patterns, PatternCoeffs):
        C = np.array(state.patterns.coefficients)
    else:
        C = PatternCoeffs.isotropic(M, order, energy_budget).coefficients
    half = np.exp(0.5j * state.reflection.phases)
    return C * half[:, None]


def _single_user_start(scenario: Scenario, mask: ActivationMask) -> SurfaceState:
    traditional = scenario.with_mode(Mode.TRADITIONAL)
    state = SurfaceState.initial(scenario.geometry.element_count, mask=mask)
    return state.with_reflection(align_phases_closed_form(traditional, state))


def optimize_patterns(scenario: Scenario, params: PatternOptParams = PatternOptParams(), seed: int = 0,
                      initial: Optional[SurfaceState] = None,
                      precoders: Optional[PrecoderSet] = None) -> PatternResult:
    """Maximize the weighted sum rate over energy-constrained element patterns.

    Reflection phases stay at zero; any phases of ``initial`` are folded into
    its coefficients and ``precoders`` warm-start the first WMMSE pass. Without
    ``initial`` the ascent starts from the optimized isotropic traditional
    surface and its precoders, so the result never falls below it.
    """
    if scenario.mode is not Mode.PATTERN_FRIS:
        raise InvalidProblemError(f"pattern optimization needs a pattern-fris scenario, got {scenario.mode.value}")
    M = scenario.geometry.element_count
    E = params.energy_budget
    mask = initial.mask if initial is not None else ActivationMask.all_active(M)

    if initial is None:
        if scenario.is_multiuser:
            baseline = optimize_reflections(scenario.with_mode(Mode.TRADITIONAL), params, seed,
                                            PatternKind.ISOTROPIC, mask)
            initial, precoders = baseline.state, baseline.precoders
        else:
            initial = _single_user_start(scenario, mask)
    start = project_pattern_energy(PatternCoeffs(_absorbed_coefficients(initial, params.order, E), E))
    basis = start.basis
    zero_phases = ReflectionConfig.zeros(M)

    if (not scenario.is_multiuser and params.synthesis
            and min(scenario.channel.L, scenario.channel.Z) == 1
            and 1 + max(scenario.channel.L, scenario.channel.Z) <= basis.size):
        return _synthesized_result(scenario, mask, start, params)

    link = _Downlink(scenario, mask)
    theta = np.ones(len(link.active), dtype=complex)

    def channels_of(C):
        return link.pattern_channels(C, theta, basis)

    def direction_of(C, W):
        if params.gradient is GradientMethod.FINITE_DIFFERENCE:
            return _fd_gradient(link, C, theta, W, basis, params.fd_step)
        return _pattern_gradient(link, C, theta, W, basis)

    def step_of(C, direction, eta):
        moved = C + eta * math.sqrt(E) * _scaled(direction)
        return project_pattern_energy(PatternCoeffs(moved, E)).coefficients

    C0 = np.array(start.coefficients[link.active])
    C, W, objective, trace = _alternate(link, C0, channels_of, direction_of, step_of, params, "pattern",
                                        W0=precoders)

    coefficients = np.array(start.coefficients)
    coefficients[link.active] = C
    state = SurfaceState(mask, zero_phases, PatternCoeffs(coefficients, E))
    return PatternResult(state, W, objective, trace)


def _synthesized_result(scenario: Scenario, mask: ActivationMask, start: PatternCoeffs,
                        params: PatternOptParams) -> PatternResult:
    """Keep the better of exact path alignment and the aligned isotropic start"""
    M = scenario.geometry.element_count
    zero_phases = ReflectionConfig.zeros(M)
    candidates = [
        SurfaceState(mask, zero_phases, synthesize_aligned_patterns(scenario, mask, params.energy_budget, params.order)),
        SurfaceState(mask, zero_phases, start),
    ]
    powers = [received_power(scenario, s) for s in candidates]
    state = candidates[0] if powers[0] >= powers[1] else candidates[1]

    link = _Downlink(scenario, mask)
    H = link.pattern_channels(np.array(state.patterns.coefficients[link.active]), np.ones(len(link.active)),
                              state.patterns.basis)
    W = PrecoderSet(np.full((1, 1), math.sqrt(link.power_budget), dtype=complex), link.power_budget)
    objective = link.rate(H, W)
    return PatternResult(state, W, objective, (TraceRow(0, objective, objective),))


# ============================================================
# Exact path-aligned synthesis
# ============================================================

def _aligned_magnitudes(b: np.ndarray, A: np.ndarray, energy_budget: float) -> np.ndarray:
    """Maximize x0·(bᵀx1) subject to xᵀAx = E with every path magnitude above a small floor"""
    n = b.size + 1
    floor = MAGNITUDE_FLOOR * np.sqrt(energy_budget / np.diag(A))
    floor[0] = 0.0
    B = np.zeros((n, n))
    B[0, 1:] = B[1:, 0] = 0.5 * b
    _, vectors = eigh(B, A)
    x = vectors[:, -1] * math.sqrt(energy_budget)
    if x[0] < 0:
        x = -x
    if np.all(x >= floor):
        return x

    start = np.maximum(np.abs(x), floor)
    start *= math.sqrt(energy_budget / (start @ A @ start))
    outcome = minimize(
        lambda v: -v[0] * (b @ v[1:]),
        np.maximum(start, floor),
        jac=lambda v: -np.concatenate([[b @ v[1:]], v[0] * b]),
        method="SLSQP",
        bounds=[(lo, None) for lo in floor],
        constraints=[{"type": "ineq", "fun": lambda v: energy_budget - v @ A @ v, "jac": lambda v: -2 * A @ v}],
    )
    return np.maximum(outcome.x, floor)


def synthesize_aligned_patterns(scenario: Scenario, mask: ActivationMask,
                                energy_budget: float = DEFAULT_ENERGY_BUDGET,
                                order: int = DEFAULT_SH_ORDER) -> PatternCoeffs:
    """Element patterns that put every cascaded path of every active element in phase.

    Needs a single path on one hop (L = 1 or Z = 1). Each element's pattern is
    real-positive toward the shared direction and cancels the path phase toward
    each of the others; magnitudes maximize received power on the energy budget.
    """
    pair = scenario.single_user_channel()
    if min(pair.L, pair.Z) != 1:
        raise InvalidProblemError("aligned synthesis needs a single path on one hop")
    basis = spherical_basis(order)
    M = scenario.geometry.element_count
    positions = scenario.geometry.positions
    geometric = pair.cascaded_gains()[None] * np.exp(1j * cascaded_phases(pair, positions))
    if pair.L == 1:
        shared, others = pair.incidence_vectors(), pair.departure_vectors()
        G = geometric[:, 0, :]
    else:
        shared, others = pair.departure_vectors(), pair.incidence_vectors()
        G = geometric[:, :, 0]
    if 1 + len(others) > basis.size:
        raise InvalidProblemError(f"basis of size {basis.size} cannot align {len(others)} paths")

    D = basis.evaluate(np.vstack([shared, others])).T
    gram = D.T @ D
    gram += 1e-12 * np.trace(gram) / len(gram) * np.eye(len(gram))
    Gamma = solve(gram, np.eye(len(gram)), assume_a="pos")

    coefficients = PatternCoeffs.isotropic(M, order, energy_budget).coefficients.copy()
    for m in mask.indices:
        b = np.abs(G[m])
        if not np.any(b > 0):
            continue
        phases = np.concatenate([[1.0], np.exp(-1j * np.angle(G[m]))])
        A = np.real(phases.conj()[:, None] * Gamma * phases[None, :])
        x = _aligned_magnitudes(b, A, energy_budget)
        coefficients[m] = D @ (Gamma @ (phases * x))
    return project_pattern_energy(PatternCoeffs(coefficients, energy_budget))
