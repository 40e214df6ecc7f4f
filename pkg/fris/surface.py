"""
Reconfigurable surface model
============================
Element geometry, activation masks, quantized reflection phases and
energy-constrained radiation patterns over a real spherical-harmonic basis.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Optional, Protocol, Union

import numpy as np
from scipy.special import sph_harm_y

from fris.channel import Direction, DirectionsLike, angles_of, direction_array, wrap_phase
from fris.errors import InvalidMaskError, InvalidSpecError

logger = logging.getLogger(__name__)

ISOTROPIC_ENERGY = 4.0 * np.pi
DEFAULT_SH_ORDER = 3
DEFAULT_ENERGY_GAIN = 10 ** 0.8
TR38901_PEAK_DBI = 8.0


def energy_budget_for_gain(gain: float) -> float:
    """Raw coefficient energy allowing `gain` times the isotropic energy"""
    return ISOTROPIC_ENERGY * gain


DEFAULT_ENERGY_BUDGET = energy_budget_for_gain(DEFAULT_ENERGY_GAIN)


# ============================================================
# Geometry and activation
# ============================================================

def _frozen_array(values, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    """Planar lattice of rows x cols element sites"""
    rows: int
    cols: int
    spacing: float
    positions: np.ndarray

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidSpecError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not self.spacing > 0:
            raise InvalidSpecError(f"element spacing must be positive, got {self.spacing}")
        positions = _frozen_array(self.positions, float)
        if positions.shape != (self.rows * self.cols, 3):
            raise InvalidSpecError(f"expected {self.rows * self.cols} positions, got shape {positions.shape}")
        if len(np.unique(positions, axis=0)) != len(positions):
            raise InvalidSpecError("element positions must be pairwise distinct")
        object.__setattr__(self, "positions", positions)

    @property
    def element_count(self) -> int:
        return self.rows * self.cols

    def lattice_point(self, m: int) -> np.ndarray:
        r, c = divmod(m, self.cols)
        return np.array([r * self.spacing, c * self.spacing, 0.0])

    def with_positions(self, positions: np.ndarray) -> "SurfaceGeometry":
        return replace(self, positions=positions)


def grid_positions(rows: int, cols: int, spacing: float) -> SurfaceGeometry:
    """Uniform planar array in z=0, element m = r·cols + c at (r·s, c·s, 0)"""
    if rows < 1 or cols < 1:
        raise InvalidSpecError(f"grid must be at least 1x1, got {rows}x{cols}")
    if not spacing > 0:
        raise InvalidSpecError(f"element spacing must be positive, got {spacing}")
    r, c = np.divmod(np.arange(rows * cols), cols)
    positions = np.column_stack([r * spacing, c * spacing, np.zeros(rows * cols)])
    return SurfaceGeometry(rows, cols, float(spacing), positions)


@dataclass(frozen=True, eq=False)
class ActivationMask:
    """ON/OFF state of every element"""
    active: np.ndarray

    def __post_init__(self):
        active = _frozen_array(self.active, bool)
        if active.ndim != 1 or active.size < 1:
            raise InvalidMaskError("mask must be a non-empty 1-D boolean vector")
        if not active.any():
            raise InvalidMaskError("at least one element must be active")
        object.__setattr__(self, "active", active)

    @classmethod
    def from_indices(cls, size: int, indices) -> "ActivationMask":
        indices = np.asarray(indices, dtype=int)
        if indices.size and (indices.min() < 0 or indices.max() >= size):
            raise InvalidMaskError(f"active indices {indices.tolist()} out of range for M={size}")
        if len(np.unique(indices)) != len(indices):
            raise InvalidMaskError("active indices must be distinct")
        active = np.zeros(size, dtype=bool)
        active[indices] = True
        return cls(active)

    @classmethod
    def all_active(cls, size: int) -> "ActivationMask":
        return cls(np.ones(size, dtype=bool))

    @classmethod
    def from_bits(cls, bits: str) -> "ActivationMask":
        if set(bits) - {"0", "1"}:
            raise InvalidMaskError(f"mask string may only contain 0 and 1, got {bits!r}")
        return cls(np.array([b == "1" for b in bits]))

    @property
    def size(self) -> int:
        return self.active.size

    @property
    def active_count(self) -> int:
        return int(self.active.sum())

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.active)

    def to_bits(self) -> str:
        return "".join("1" if a else "0" for a in self.active)

    def as_grid(self, rows: int, cols: int) -> np.ndarray:
        return self.active.reshape(rows, cols).astype(int)

    def __eq__(self, other):
        return isinstance(other, ActivationMask) and np.array_equal(self.active, other.active)

    __hash__ = None


class ActivePositions(NamedTuple):
    indices: np.ndarray
    positions: np.ndarray


def activation_apply(mask: ActivationMask, geometry: SurfaceGeometry,
                     active_count: Optional[int] = None) -> ActivePositions:
    """Positions of the active elements, in element-index order"""
    if mask.size != geometry.element_count:
        raise InvalidMaskError(f"mask has {mask.size} entries, surface has {geometry.element_count}")
    if active_count is not None and mask.active_count != active_count:
        raise InvalidMaskError(f"mask activates {mask.active_count} elements, expected {active_count}")
    indices = mask.indices
    return ActivePositions(indices, geometry.positions[indices])


def _near_square_factors(count: int, rows: int, cols: int) -> Optional[tuple[int, int]]:
    best = None
    for r in range(1, count + 1):
        if count % r:
            continue
        c = count // r
        if r <= rows and c <= cols and (best is None or abs(r - c) < abs(best[0] - best[1])):
            best = (r, c)
    return best


def uniform_mask(geometry: SurfaceGeometry, active_count: int) -> ActivationMask:
    """Traditional layout: M̂ elements spread evenly over the available region"""
    M = geometry.element_count
    if not 1 <= active_count <= M:
        raise InvalidMaskError(f"active count must lie in [1, {M}], got {active_count}")
    factors = _near_square_factors(active_count, geometry.rows, geometry.cols)
    if factors is None:
        indices = np.floor((np.arange(active_count) + 0.5) * M / active_count).astype(int)
    else:
        r_hat, c_hat = factors
        rows = np.floor((np.arange(r_hat) + 0.5) * geometry.rows / r_hat).astype(int)
        cols = np.floor((np.arange(c_hat) + 0.5) * geometry.cols / c_hat).astype(int)
        indices = (rows[:, None] * geometry.cols + cols[None, :]).ravel()
    return ActivationMask.from_indices(M, indices)


# ============================================================
# Reflection phases
# ============================================================

def codebook(bits: int) -> np.ndarray:
    if bits < 1:
        raise InvalidSpecError(f"phase resolution must be at least 1 bit, got {bits}")
    return 2.0 * np.pi * np.arange(2 ** bits) / 2 ** bits


def quantize_index(phase, bits: int) -> np.ndarray:
    """Index of the nearest codeword; ties go to the lower index"""
    words = codebook(bits)
    distance = np.abs(wrap_phase(np.asarray(phase, dtype=float)[..., None] - words))
    return np.argmin(distance, axis=-1)


def quantize_phase(phase, bits: int):
    """Nearest b-bit codeword in {2πk/2^b}"""
    quantized = codebook(bits)[quantize_index(phase, bits)]
    return float(quantized) if np.ndim(quantized) == 0 else quantized


@dataclass(frozen=True, eq=False)
class ReflectionConfig:
    """Unit-modulus reflection coefficients ϑ_m = exp(j·phase_m)"""
    phases: np.ndarray
    bits: Optional[int] = None

    def __post_init__(self):
        phases = _frozen_array(self.phases, float)
        if phases.ndim != 1 or not np.all(np.isfinite(phases)):
            raise InvalidSpecError("reflection phases must be a finite 1-D vector")
        if self.bits is not None:
            words = codebook(self.bits)
            off = np.abs(wrap_phase(phases - words[quantize_index(phases, self.bits)]))
            if np.any(off > 1e-9):
                raise InvalidSpecError(f"phases are not {self.bits}-bit codewords")
        object.__setattr__(self, "phases", phases)

    @classmethod
    def zeros(cls, size: int, bits: Optional[int] = None) -> "ReflectionConfig":
        return cls(np.zeros(size), bits)

    @classmethod
    def from_codes(cls, codes, bits: int) -> "ReflectionConfig":
        return cls(codebook(bits)[np.asarray(codes, dtype=int)], bits)

    @property
    def size(self) -> int:
        return self.phases.size

    @property
    def coefficients(self) -> np.ndarray:
        return np.exp(1j * self.phases)

    def quantized(self, bits: int) -> "ReflectionConfig":
        return ReflectionConfig(quantize_phase(self.phases, bits), bits)


# ============================================================
# Angular basis
# ============================================================

@dataclass(frozen=True)
class SphericalBasis:
    """Orthonormal real spherical harmonics up to `order`, index q = l² + l + m"""
    order: int

    @property
    def size(self) -> int:
        return (self.order + 1) ** 2

    def evaluate(self, directions: DirectionsLike) -> np.ndarray:
        """(N, Q) real basis samples"""
        azimuth, elevation = angles_of(direction_array(directions))
        return self._evaluate_angles(azimuth, elevation)

    def _evaluate_angles(self, azimuth: np.ndarray, elevation: np.ndarray) -> np.ndarray:
        values = np.zeros((np.size(elevation), self.size))
        for l in range(self.order + 1):
            values[:, l * l + l] = sph_harm_y(l, 0, elevation, azimuth).real
            for m in range(1, l + 1):
                # no Condon-Shortley phase
                harmonic = (-1) ** m * math.sqrt(2.0) * sph_harm_y(l, m, elevation, azimuth)
                values[:, l * l + l + m] = harmonic.real
                values[:, l * l + l - m] = harmonic.imag
        return values

    def gram_matrix(self) -> np.ndarray:
        """Gram matrix under Gauss-Legendre (cos θ) x uniform (φ) quadrature"""
        n_theta = 2 * self.order + 2
        n_phi = 4 * self.order + 4
        nodes, weights = np.polynomial.legendre.leggauss(n_theta)
        phi = 2 * np.pi * np.arange(n_phi) / n_phi - np.pi
        elevation = np.repeat(np.arccos(nodes), n_phi)
        azimuth = np.tile(phi, n_theta)
        w = np.repeat(weights, n_phi) * (2 * np.pi / n_phi)
        samples = self._evaluate_angles(azimuth, elevation)
        return samples.T @ (samples * w[:, None])


@lru_cache(maxsize=None)
def spherical_basis(order: int = DEFAULT_SH_ORDER) -> SphericalBasis:
    """Validated basis of the given order (orthonormality checked once)"""
    if order < 0:
        raise InvalidSpecError(f"basis order must be non-negative, got {order}")
    basis = SphericalBasis(order)
    error = np.max(np.abs(basis.gram_matrix() - np.eye(basis.size)))
    if error > 1e-6:
        raise InvalidSpecError(f"spherical basis of order {order} is not orthonormal (error {error:.2e})")
    logger.debug("Spherical basis order=%d validated, Gram error %.1e", order, error)
    return basis


def basis_for_size(size: int) -> SphericalBasis:
    order = math.isqrt(size) - 1
    if size < 1 or (order + 1) ** 2 != size:
        raise InvalidSpecError(f"coefficient count {size} is not a square (n+1)^2")
    return spherical_basis(order)


# ============================================================
# Patterns
# ============================================================

class PatternEvaluator(Protocol):
    """Anything that yields per-element complex gains toward a set of directions"""

    def element_gains(self, directions: DirectionsLike, element_count: int) -> np.ndarray:
        """(M, N) complex gains"""
        ...


@dataclass(frozen=True, eq=False)
class PatternCoeffs:
    """Per-element coefficients over the spherical basis plus the energy budget"""
    coefficients: np.ndarray
    energy_budget: float = DEFAULT_ENERGY_BUDGET

    def __post_init__(self):
        coefficients = _frozen_array(self.coefficients, complex)
        if coefficients.ndim != 2 or coefficients.shape[0] < 1:
            raise InvalidSpecError("pattern coefficients must be an (M, Q) array")
        basis_for_size(coefficients.shape[1])
        if not self.energy_budget > 0:
            raise InvalidSpecError(f"energy budget must be positive, got {self.energy_budget}")
        object.__setattr__(self, "coefficients", coefficients)

    @classmethod
    def isotropic(cls, element_count: int, order: int = DEFAULT_SH_ORDER,
                  energy_budget: float = DEFAULT_ENERGY_BUDGET) -> "PatternCoeffs":
        coefficients = np.zeros((element_count, (order + 1) ** 2), dtype=complex)
        coefficients[:, 0] = math.sqrt(4 * math.pi)
        return cls(coefficients, energy_budget)

    @property
    def element_count(self) -> int:
        return self.coefficients.shape[0]

    @property
    def basis(self) -> SphericalBasis:
        return basis_for_size(self.coefficients.shape[1])

    def energies(self) -> np.ndarray:
        return np.sum(np.abs(self.coefficients) ** 2, axis=1)

    def is_feasible(self) -> bool:
        return bool(np.all(self.energies() <= self.energy_budget + 1e-9))

    def with_coefficients(self, coefficients: np.ndarray) -> "PatternCoeffs":
        return PatternCoeffs(coefficients, self.energy_budget)

    def element_gains(self, directions: DirectionsLike, element_count: int) -> np.ndarray:
        if element_count != self.element_count:
            raise InvalidSpecError(f"patterns cover {self.element_count} elements, expected {element_count}")
        return self.coefficients @ self.basis.evaluate(directions).T


def pattern_gain(coefficients, direction: Direction) -> complex:
    """Σ_q c_q Y_q(direction) for one element"""
    c = np.asarray(coefficients, dtype=complex)
    return complex(basis_for_size(c.size).evaluate(direction)[0] @ c)


def effective_path_gain(coefficients, incidence: Direction, departure: Direction) -> complex:
    """Reciprocal element: pattern at incidence times pattern at departure"""
    return pattern_gain(coefficients, incidence) * pattern_gain(coefficients, departure)


def project_pattern_energy(coeffs: PatternCoeffs) -> PatternCoeffs:
    """Radially scale every element whose energy exceeds the budget"""
    energies = coeffs.energies()
    scale = np.ones_like(energies)
    over = energies > coeffs.energy_budget
    scale[over] = np.sqrt(coeffs.energy_budget / energies[over])
    return coeffs.with_coefficients(coeffs.coefficients * scale[:, None])


class PatternKind(str, Enum):
    ISOTROPIC = "isotropic"
    TR38901 = "tr38901"


@dataclass(frozen=True)
class BaselinePattern:
    """Fixed pattern shared by every element"""
    kind: PatternKind

    def amplitude(self, directions: DirectionsLike) -> np.ndarray:
        vectors = direction_array(directions)
        if self.kind is PatternKind.ISOTROPIC:
            return np.ones(len(vectors))
        azimuth, elevation = angles_of(vectors)
        vertical = -np.minimum(12.0 * ((np.degrees(elevation) - 90.0) / 65.0) ** 2, 30.0)
        horizontal = -np.minimum(12.0 * (np.degrees(azimuth) / 65.0) ** 2, 30.0)
        attenuation = -np.minimum(-(vertical + horizontal), 30.0)
        return 10.0 ** ((attenuation + TR38901_PEAK_DBI) / 20.0)

    def element_gains(self, directions: DirectionsLike, element_count: int) -> np.ndarray:
        gains = self.amplitude(directions).astype(complex)
        return np.broadcast_to(gains, (element_count, gains.size))


def baseline_pattern(kind: Union[PatternKind, str]) -> BaselinePattern:
    try:
        return BaselinePattern(PatternKind(kind))
    except ValueError as exc:
        raise InvalidSpecError(f"unknown baseline pattern {kind!r}") from exc


Patterns = Union[PatternCoeffs, BaselinePattern]
