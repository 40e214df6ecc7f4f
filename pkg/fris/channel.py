"""
Cascaded multipath channel
==========================
BS -> surface -> user plane-wave paths, the geometric phase term of the
received-power model, and the multi-user (MISO downlink) extension.

Angle convention: elevation is the zenith angle of the unit vector
(sin θ cos φ, sin θ sin φ, cos θ); the element boresight is θ = π/2, φ = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence, Union

import numpy as np

from fris.errors import InvalidSpecError, InvalidStateError
from fris.streams import Stream, substream

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


def wrap_phase(x):
    """Wrap radians to (-π, π]"""
    wrapped = np.pi - np.mod(np.pi - np.asarray(x, dtype=float), TWO_PI)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


# ============================================================
# Directions
# ============================================================

@dataclass(frozen=True)
class Direction:
    """Unit wave vector, interchangeable with (azimuth, elevation)"""
    unit_vector: tuple[float, float, float]

    def __post_init__(self):
        if len(self.unit_vector) != 3:
            raise InvalidSpecError("direction needs exactly three components")
        norm = math.sqrt(sum(c * c for c in self.unit_vector))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-12:
            raise InvalidSpecError(f"direction is not unit-norm (|u| = {norm})")

    @classmethod
    def from_angles(cls, azimuth: float, elevation: float) -> "Direction":
        sin_el = math.sin(elevation)
        return cls.from_vector((sin_el * math.cos(azimuth), sin_el * math.sin(azimuth), math.cos(elevation)))

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "Direction":
        v = np.asarray(vector, dtype=float)
        norm = float(np.linalg.norm(v))
        if v.shape != (3,) or not math.isfinite(norm) or norm == 0.0:
            raise InvalidSpecError(f"cannot build a direction from {vector!r}")
        v = v / norm
        return cls((float(v[0]), float(v[1]), float(v[2])))

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.unit_vector)

    @property
    def azimuth(self) -> float:
        """φ in [-π, π)"""
        phi = math.atan2(self.unit_vector[1], self.unit_vector[0])
        return -math.pi if phi >= math.pi else phi

    @property
    def elevation(self) -> float:
        """θ in [0, π]"""
        return math.acos(min(1.0, max(-1.0, self.unit_vector[2])))


DirectionsLike = Union[Direction, Sequence[Direction], np.ndarray]


def direction_array(directions: DirectionsLike) -> np.ndarray:
    """Stack directions (or pass through an (N, 3) array) as unit vectors"""
    if isinstance(directions, Direction):
        return directions.vector[None, :]
    if isinstance(directions, np.ndarray):
        return np.atleast_2d(np.asarray(directions, dtype=float))
    return np.array([d.unit_vector for d in directions], dtype=float).reshape(-1, 3)


def angles_of(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(azimuth, elevation) arrays for an (N, 3) array of unit vectors"""
    elevation = np.arccos(np.clip(vectors[:, 2], -1.0, 1.0))
    azimuth = np.arctan2(vectors[:, 1], vectors[:, 0])
    azimuth = np.where(azimuth >= np.pi, -np.pi, azimuth)
    return azimuth, elevation


# ============================================================
# Path records
# ============================================================

@dataclass(frozen=True)
class HopPath:
    """One path of a single hop: complex gain share and its direction at the surface"""
    gain: complex
    direction: Direction

    def __post_init__(self):
        if not (math.isfinite(self.gain.real) and math.isfinite(self.gain.imag)):
            raise InvalidSpecError(f"hop gain must be finite, got {self.gain}")

    def to_dict(self) -> dict:
        return {
            "gain": [self.gain.real, self.gain.imag],
            "azimuth": self.direction.azimuth,
            "elevation": self.direction.elevation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HopPath":
        re, im = data["gain"]
        return cls(complex(re, im), Direction.from_angles(data["azimuth"], data["elevation"]))


@dataclass(frozen=True)
class PathComponent:
    """One cascaded (l, z) path"""
    gain: complex
    incidence: Direction
    departure: Direction


class GainDistribution(str, Enum):
    RAYLEIGH = "rayleigh"
    UNIT_MODULUS = "unit-modulus"


class AngleDistribution(str, Enum):
    FRONT_HEMISPHERE = "front-hemisphere"
    SPHERE = "sphere"


@dataclass(frozen=True)
class ChannelSpec:
    """What sample_multipath draws: path counts, wavelength and distributions"""
    bs_paths: int
    user_paths: int
    wavelength: float = 0.1
    gain_distribution: GainDistribution = GainDistribution.RAYLEIGH
    angle_distribution: AngleDistribution = AngleDistribution.FRONT_HEMISPHERE
    path_loss: float = 1.0

    def __post_init__(self):
        if self.bs_paths < 1 or self.user_paths < 1:
            raise InvalidSpecError(
                f"need at least one path per hop, got L={self.bs_paths}, Z={self.user_paths}"
            )
        if not self.wavelength > 0:
            raise InvalidSpecError(f"wavelength must be positive, got {self.wavelength}")
        if not self.path_loss > 0:
            raise InvalidSpecError(f"path loss multiplier must be positive, got {self.path_loss}")
        try:
            object.__setattr__(self, "gain_distribution", GainDistribution(self.gain_distribution))
            object.__setattr__(self, "angle_distribution", AngleDistribution(self.angle_distribution))
        except ValueError as exc:
            raise InvalidSpecError(str(exc)) from exc


def _check_hops(bs_paths, user_paths, wavelength):
    if len(bs_paths) < 1 or len(user_paths) < 1:
        raise InvalidSpecError("a channel needs at least one path on each hop")
    if not wavelength > 0:
        raise InvalidSpecError(f"wavelength must be positive, got {wavelength}")


@dataclass(frozen=True)
class ChannelPair:
    """Single-user cascade: L inbound paths times Z outbound paths"""
    bs_paths: tuple[HopPath, ...]
    user_paths: tuple[HopPath, ...]
    wavelength: float

    def __post_init__(self):
        object.__setattr__(self, "bs_paths", tuple(self.bs_paths))
        object.__setattr__(self, "user_paths", tuple(self.user_paths))
        _check_hops(self.bs_paths, self.user_paths, self.wavelength)

    @property
    def L(self) -> int:
        return len(self.bs_paths)

    @property
    def Z(self) -> int:
        return len(self.user_paths)

    def cascaded_gains(self) -> np.ndarray:
        """(L, Z) matrix of g_{l,z} = g_l · g_z"""
        bs = np.array([p.gain for p in self.bs_paths], dtype=complex)
        user = np.array([p.gain for p in self.user_paths], dtype=complex)
        return np.outer(bs, user)

    def incidence_vectors(self) -> np.ndarray:
        return direction_array([p.direction for p in self.bs_paths])

    def departure_vectors(self) -> np.ndarray:
        return direction_array([p.direction for p in self.user_paths])

    def cascaded_paths(self) -> list[PathComponent]:
        """All L·Z cascaded paths, inbound index varying slowest"""
        return [
            PathComponent(b.gain * u.gain, b.direction, u.direction)
            for b in self.bs_paths
            for u in self.user_paths
        ]

    def scaled(self, factor: complex) -> "ChannelPair":
        """Same geometry with every inbound gain multiplied by factor"""
        bs = tuple(HopPath(p.gain * factor, p.direction) for p in self.bs_paths)
        return ChannelPair(bs, self.user_paths, self.wavelength)

    def to_dict(self) -> dict:
        return {
            "wavelength": self.wavelength,
            "bs_paths": [p.to_dict() for p in self.bs_paths],
            "user_paths": [p.to_dict() for p in self.user_paths],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelPair":
        return cls(
            tuple(HopPath.from_dict(p) for p in data["bs_paths"]),
            tuple(HopPath.from_dict(p) for p in data["user_paths"]),
            float(data["wavelength"]),
        )


def ula_steering(angles: Iterable[float], antennas: int) -> np.ndarray:
    """Half-wavelength ULA steering, a_l[n] = exp(jπ n sin ψ_l); shape (L, N_t)"""
    psi = np.asarray(list(angles), dtype=float)
    n = np.arange(antennas)
    return np.exp(1j * np.pi * np.outer(np.sin(psi), n))


@dataclass(frozen=True)
class MultiUserChannel:
    """Shared inbound paths, BS array steering per inbound path, per-user outbound paths"""
    bs_paths: tuple[HopPath, ...]
    user_paths: tuple[tuple[HopPath, ...], ...]
    bs_angles: tuple[float, ...]
    bs_antennas: int
    wavelength: float

    def __post_init__(self):
        object.__setattr__(self, "bs_paths", tuple(self.bs_paths))
        object.__setattr__(self, "user_paths", tuple(tuple(u) for u in self.user_paths))
        object.__setattr__(self, "bs_angles", tuple(float(a) for a in self.bs_angles))
        if len(self.user_paths) < 1:
            raise InvalidSpecError("a multi-user channel needs at least one user")
        for paths in self.user_paths:
            _check_hops(self.bs_paths, paths, self.wavelength)
        if len(self.bs_angles) != len(self.bs_paths):
            raise InvalidSpecError("one BS departure angle is needed per inbound path")
        if self.bs_antennas < 1:
            raise InvalidSpecError(f"need at least one BS antenna, got {self.bs_antennas}")

    @property
    def K(self) -> int:
        return len(self.user_paths)

    @property
    def L(self) -> int:
        return len(self.bs_paths)

    def bs_steering(self) -> np.ndarray:
        """(L, N_t) steering matrix; the first antenna is the phase reference"""
        return ula_steering(self.bs_angles, self.bs_antennas)

    def user_pair(self, k: int) -> ChannelPair:
        if not 0 <= k < self.K:
            raise InvalidStateError(f"user index {k} out of range for K={self.K}")
        return ChannelPair(self.bs_paths, self.user_paths[k], self.wavelength)

    def to_dict(self) -> dict:
        return {
            "wavelength": self.wavelength,
            "bs_antennas": self.bs_antennas,
            "bs_angles": list(self.bs_angles),
            "bs_paths": [p.to_dict() for p in self.bs_paths],
            "user_paths": [[p.to_dict() for p in paths] for paths in self.user_paths],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MultiUserChannel":
        return cls(
            tuple(HopPath.from_dict(p) for p in data["bs_paths"]),
            tuple(tuple(HopPath.from_dict(p) for p in paths) for paths in data["user_paths"]),
            tuple(data["bs_angles"]),
            int(data["bs_antennas"]),
            float(data["wavelength"]),
        )


def as_multiuser(pair: ChannelPair) -> MultiUserChannel:
    """Single-antenna, single-user view of a ChannelPair"""
    return MultiUserChannel(pair.bs_paths, (pair.user_paths,), (0.0,) * pair.L, 1, pair.wavelength)


# ============================================================
# Sampling
# ============================================================

def _draw_gains(rng: np.random.Generator, count: int, spec: ChannelSpec) -> np.ndarray:
    if spec.gain_distribution is GainDistribution.RAYLEIGH:
        gains = (rng.standard_normal(count) + 1j * rng.standard_normal(count)) / math.sqrt(2.0)
    else:
        gains = np.exp(1j * rng.uniform(0.0, TWO_PI, count))
    return gains * math.sqrt(spec.path_loss)


def _draw_directions(rng: np.random.Generator, count: int, spec: ChannelSpec) -> list[Direction]:
    if spec.angle_distribution is AngleDistribution.FRONT_HEMISPHERE:
        azimuth = rng.uniform(-np.pi / 2, np.pi / 2, count)
        elevation = rng.uniform(np.pi / 6, 5 * np.pi / 6, count)
    else:
        azimuth = rng.uniform(-np.pi, np.pi, count)
        elevation = np.arccos(rng.uniform(-1.0, 1.0, count))
    return [Direction.from_angles(float(a), float(e)) for a, e in zip(azimuth, elevation)]


def _draw_hop(rng: np.random.Generator, count: int, spec: ChannelSpec) -> tuple[HopPath, ...]:
    gains = _draw_gains(rng, count, spec)
    directions = _draw_directions(rng, count, spec)
    return tuple(HopPath(complex(g), d) for g, d in zip(gains, directions))


def sample_multipath(seed: int, spec: ChannelSpec) -> ChannelPair:
    """Draw one single-user cascade; user 0 of sample_multiuser for the same seed"""
    bs_paths = _draw_hop(substream(seed, Stream.CHANNEL, 0), spec.bs_paths, spec)
    user_paths = _draw_hop(substream(seed, Stream.CHANNEL, 1, 0), spec.user_paths, spec)
    logger.debug("Sampled channel seed=%d L=%d Z=%d", seed, spec.bs_paths, spec.user_paths)
    return ChannelPair(bs_paths, user_paths, spec.wavelength)


def sample_multiuser(seed: int, spec: ChannelSpec, users: int, bs_antennas: int) -> MultiUserChannel:
    """Draw a K-user cascade; BS angles do not depend on bs_antennas"""
    if users < 1:
        raise InvalidSpecError(f"need at least one user, got {users}")
    if bs_antennas < 1:
        raise InvalidSpecError(f"need at least one BS antenna, got {bs_antennas}")
    bs_paths = _draw_hop(substream(seed, Stream.CHANNEL, 0), spec.bs_paths, spec)
    user_paths = tuple(
        _draw_hop(substream(seed, Stream.CHANNEL, 1, k), spec.user_paths, spec) for k in range(users)
    )
    angles = substream(seed, Stream.CHANNEL, 2).uniform(-np.pi / 2, np.pi / 2, spec.bs_paths)
    return MultiUserChannel(bs_paths, user_paths, tuple(angles), bs_antennas, spec.wavelength)


# ============================================================
# Geometric phase
# ============================================================

def steering_phase(position, departure: Direction, incidence: Direction, wavelength: float) -> float:
    """(2π/λ)·(k_dep − k_inc)ᵀp wrapped to (-π, π]"""
    if not wavelength > 0:
        raise InvalidSpecError(f"wavelength must be positive, got {wavelength}")
    p = np.asarray(position, dtype=float)
    return wrap_phase(TWO_PI / wavelength * float(np.dot(departure.vector - incidence.vector, p)))


def cascaded_phases(pair: ChannelPair, positions: np.ndarray) -> np.ndarray:
    """Unwrapped (M, L, Z) phase tensor for every element position"""
    k = TWO_PI / pair.wavelength
    positions = np.asarray(positions, dtype=float)
    outbound = positions @ pair.departure_vectors().T
    inbound = positions @ pair.incidence_vectors().T
    return k * (outbound[:, None, :] - inbound[:, :, None])
