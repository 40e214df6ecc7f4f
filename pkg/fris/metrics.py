"""
Performance metrics
===================
Received power of the cascaded multipath model, Shannon rate, and the
multi-user MISO channel / weighted-sum-rate objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from fris.channel import ChannelPair, MultiUserChannel, cascaded_phases
from fris.errors import InvalidProblemError, InvalidSpecError, InvalidStateError
from fris.surface import (
    ActivationMask,
    ActivePositions,
    BaselinePattern,
    PatternCoeffs,
    PatternEvaluator,
    Patterns,
    PatternKind,
    ReflectionConfig,
    SurfaceGeometry,
    activation_apply,
    baseline_pattern,
    grid_positions,
)

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    TRADITIONAL = "traditional"
    POSITION_FRIS = "position-fris"
    PATTERN_FRIS = "pattern-fris"


@dataclass(frozen=True, eq=False)
class Scenario:
    """One experiment instance: surface, channel, noise and the BS-side budget"""
    geometry: SurfaceGeometry
    channel: Union[ChannelPair, MultiUserChannel]
    noise_power: float
    mode: Mode = Mode.TRADITIONAL
    power_budget: float = 1.0
    weights: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not self.noise_power >= 0:
            raise InvalidSpecError(f"noise power must be non-negative, got {self.noise_power}")
        if not self.power_budget > 0:
            raise InvalidSpecError(f"power budget must be positive, got {self.power_budget}")
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.weights is not None:
            weights = tuple(float(w) for w in self.weights)
            if len(weights) != self.user_count or any(not w > 0 for w in weights):
                raise InvalidSpecError(f"need {self.user_count} positive user weights, got {weights}")
            object.__setattr__(self, "weights", weights)

    @property
    def is_multiuser(self) -> bool:
        return isinstance(self.channel, MultiUserChannel)

    @property
    def user_count(self) -> int:
        return self.channel.K if self.is_multiuser else 1

    def user_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.user_count, 1.0 / self.user_count)
        return np.array(self.weights)

    def with_mode(self, mode: Mode) -> "Scenario":
        return replace(self, mode=mode)

    def with_geometry(self, geometry: SurfaceGeometry) -> "Scenario":
        return replace(self, geometry=geometry)

    def single_user_channel(self) -> ChannelPair:
        if self.is_multiuser:
            raise InvalidStateError("operation needs a single-user scenario")
        return self.channel


@dataclass(frozen=True, eq=False)
class SurfaceState:
    """Everything the surface controls"""
    mask: ActivationMask
    reflection: ReflectionConfig
    patterns: Patterns

    def __post_init__(self):
        M = self.mask.size
        if self.reflection.size != M:
            raise InvalidStateError(f"reflection covers {self.reflection.size} elements, mask covers {M}")
        if isinstance(self.patterns, PatternCoeffs) and self.patterns.element_count != M:
            raise InvalidStateError(f"patterns cover {self.patterns.element_count} elements, mask covers {M}")

    @classmethod
    def initial(cls, element_count: int, mask: Optional[ActivationMask] = None, bits: Optional[int] = None,
                patterns: Optional[Patterns] = None) -> "SurfaceState":
        """All elements active (unless masked), zero phases, isotropic elements"""
        return cls(
            mask if mask is not None else ActivationMask.all_active(element_count),
            ReflectionConfig.zeros(element_count, bits),
            patterns if patterns is not None else baseline_pattern(PatternKind.ISOTROPIC),
        )

    @property
    def element_count(self) -> int:
        return self.mask.size

    def with_mask(self, mask: ActivationMask) -> "SurfaceState":
        return replace(self, mask=mask)

    def with_reflection(self, reflection: ReflectionConfig) -> "SurfaceState":
        return replace(self, reflection=reflection)

    def with_patterns(self, patterns: Patterns) -> "SurfaceState":
        return replace(self, patterns=patterns)

    def to_dict(self, geometry: SurfaceGeometry) -> dict:
        if isinstance(self.patterns, PatternCoeffs):
            patterns = {
                "coefficients": [[[c.real, c.imag] for c in row] for row in self.patterns.coefficients],
                "energy_budget": self.patterns.energy_budget,
            }
        else:
            patterns = {"kind": self.patterns.kind.value}
        return {
            "geometry": {"rows": geometry.rows, "cols": geometry.cols, "spacing": geometry.spacing},
            "mask": self.mask.to_bits(),
            "phases": self.reflection.phases.tolist(),
            "bits": self.reflection.bits,
            "patterns": patterns,
        }

    @classmethod
    def from_dict(cls, data: dict) -> tuple[SurfaceGeometry, "SurfaceState"]:
        g = data["geometry"]
        geometry = grid_positions(int(g["rows"]), int(g["cols"]), float(g["spacing"]))
        spec = data["patterns"]
        if "kind" in spec:
            patterns = baseline_pattern(spec["kind"])
        else:
            coefficients = np.array(spec["coefficients"], dtype=float)
            patterns = PatternCoeffs(coefficients[..., 0] + 1j * coefficients[..., 1], float(spec["energy_budget"]))
        state = cls(ActivationMask.from_bits(data["mask"]), ReflectionConfig(data["phases"], data.get("bits")), patterns)
        return geometry, state


@dataclass(frozen=True, eq=False)
class PrecoderSet:
    """K transmit vectors of length N_t under a total power budget"""
    vectors: np.ndarray
    power_budget: float

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=complex)
        if vectors.ndim != 2:
            raise InvalidStateError("precoders must be a (K, N_t) array")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        if self.total_power > self.power_budget + 1e-9:
            raise InvalidStateError(f"precoders use {self.total_power:.6g} W, budget is {self.power_budget:.6g} W")

    @classmethod
    def zeros(cls, users: int, antennas: int, power_budget: float) -> "PrecoderSet":
        return cls(np.zeros((users, antennas), dtype=complex), power_budget)

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.vectors) ** 2))


# ============================================================
# Single-user received power
# ============================================================

def path_terms(pair: ChannelPair, positions: np.ndarray, patterns: PatternEvaluator) -> np.ndarray:
    """(M, L, Z) tensor g_{l,z} · f_eff(m,l,z) · e^{jφ_{m,l,z}}"""
    M = len(positions)
    f_inc = patterns.element_gains(pair.incidence_vectors(), M)
    f_dep = patterns.element_gains(pair.departure_vectors(), M)
    geometric = pair.cascaded_gains()[None, :, :] * np.exp(1j * cascaded_phases(pair, positions))
    return geometric * f_inc[:, :, None] * f_dep[:, None, :]


def _check_state(geometry: SurfaceGeometry, state: SurfaceState):
    if state.element_count != geometry.element_count:
        raise InvalidStateError(f"state covers {state.element_count} elements, surface has {geometry.element_count}")


def _active(geometry: SurfaceGeometry, state: SurfaceState) -> ActivePositions:
    _check_state(geometry, state)
    return activation_apply(state.mask, geometry)


def element_aggregates(scenario: Scenario, state: SurfaceState) -> np.ndarray:
    """c_m for every element (active or not)"""
    pair = scenario.single_user_channel()
    _check_state(scenario.geometry, state)
    return path_terms(pair, scenario.geometry.positions, state.patterns).sum(axis=(1, 2))


def per_element_aggregate(scenario: Scenario, state: SurfaceState, m: int) -> complex:
    """c_m = Σ_l Σ_z g_{l,z} f_eff(m,l,z) e^{jφ_{m,l,z}}"""
    if not 0 <= m < scenario.geometry.element_count:
        raise InvalidStateError(f"element index {m} out of range for M={scenario.geometry.element_count}")
    pair = scenario.single_user_channel()
    _check_state(scenario.geometry, state)
    position = scenario.geometry.positions[m:m + 1]
    patterns = state.patterns
    if isinstance(patterns, PatternCoeffs):
        patterns = patterns.with_coefficients(patterns.coefficients[m:m + 1])
    return complex(path_terms(pair, position, patterns).sum())


def received_power(scenario: Scenario, state: SurfaceState) -> float:
    """(1/(LZ))·|Σ_m ϑ_m c_m|² + σ² over the active elements"""
    pair = scenario.single_user_channel()
    active = _active(scenario.geometry, state).indices
    amplitude = np.sum(state.reflection.coefficients[active] * element_aggregates(scenario, state)[active])
    return float(np.abs(amplitude) ** 2 / (pair.L * pair.Z) + scenario.noise_power)


def achievable_rate(power: float, noise: float) -> float:
    """log2(1 + (power − noise)/noise)"""
    if not noise > 0:
        raise InvalidProblemError(f"noise power must be positive for a rate, got {noise}")
    return float(np.log2(1.0 + max(power - noise, 0.0) / noise))


def path_phasors(scenario: Scenario, state: SurfaceState) -> np.ndarray:
    """(L, Z) post-modulation contributions Σ_m ϑ_m g f_eff e^{jφ}"""
    pair = scenario.single_user_channel()
    active, positions = _active(scenario.geometry, state)
    terms = path_terms(pair, positions, _restrict(state.patterns, active))
    return np.tensordot(state.reflection.coefficients[active], terms, axes=1)


def incoming_phasors(scenario: Scenario, state: SurfaceState) -> np.ndarray:
    """(L, Z) unmodulated contributions at the active elements (ϑ = 1, isotropic)"""
    pair = scenario.single_user_channel()
    positions = _active(scenario.geometry, state).positions
    return path_terms(pair, positions, baseline_pattern(PatternKind.ISOTROPIC)).sum(axis=0)


def _restrict(patterns: Patterns, indices: np.ndarray) -> Patterns:
    if isinstance(patterns, PatternCoeffs):
        return patterns.with_coefficients(patterns.coefficients[indices])
    return patterns


# ============================================================
# Multi-user MISO
# ============================================================

def user_channel_terms(mu: MultiUserChannel, k: int, positions: np.ndarray, patterns: Patterns) -> np.ndarray:
    """(M, L) per-element, per-inbound-path contributions b_{k,m,l}, scaled by 1/sqrt(L·Z_k)"""
    pair = mu.user_pair(k)
    terms = path_terms(pair, positions, patterns).sum(axis=2)
    return terms / np.sqrt(pair.L * pair.Z)


def _multiuser(scenario: Scenario) -> MultiUserChannel:
    if not scenario.is_multiuser:
        raise InvalidStateError("operation needs a multi-user scenario")
    return scenario.channel


def user_channel_vector(mu: MultiUserChannel, geometry: SurfaceGeometry, state: SurfaceState, k: int) -> np.ndarray:
    """h_k: N_t-vector summing steering · gain · pattern · reflection · position phase"""
    if not 0 <= k < mu.K:
        raise InvalidStateError(f"user index {k} out of range for K={mu.K}")
    active, positions = _active(geometry, state)
    terms = user_channel_terms(mu, k, positions, _restrict(state.patterns, active))
    per_path = state.reflection.coefficients[active] @ terms
    return per_path @ mu.bs_steering()


def effective_user_channel(scenario: Scenario, state: SurfaceState, k: int) -> np.ndarray:
    """h_k of the scenario's multi-user channel; element positions come from its geometry"""
    return user_channel_vector(_multiuser(scenario), scenario.geometry, state, k)


def user_channels(scenario: Scenario, state: SurfaceState) -> np.ndarray:
    """(K, N_t) stack of every h_k"""
    mu = _multiuser(scenario)
    return np.array([effective_user_channel(scenario, state, k) for k in range(mu.K)])


def weighted_sum_rate(channels: Union[np.ndarray, Sequence[np.ndarray]], precoders: PrecoderSet,
                      weights, noise: float) -> float:
    """Σ_k α_k log2(1 + |h_kᴴw_k|² / (Σ_{j≠k}|h_kᴴw_j|² + σ²))"""
    H = np.atleast_2d(np.asarray(channels, dtype=complex))
    W = precoders.vectors
    alpha = np.asarray(weights, dtype=float)
    if H.shape != W.shape or alpha.shape != (H.shape[0],):
        raise InvalidStateError(
            f"dimension mismatch: channels {H.shape}, precoders {W.shape}, weights {alpha.shape}"
        )
    if np.any(alpha <= 0):
        raise InvalidProblemError("user weights must be positive")
    if not noise > 0:
        raise InvalidProblemError(f"noise power must be positive, got {noise}")
    gains = np.abs(H.conj() @ W.T) ** 2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    return float(np.sum(alpha * np.log2(1.0 + signal / (interference + noise))))
