"""
Experiment configuration
========================
Declarative experiment files (YAML, or JSON as an alternate) validated by a
frozen pydantic schema, plus runtime settings read from the environment.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from fris.channel import AngleDistribution, ChannelSpec, GainDistribution
from fris.errors import ConfigInvariantError, ConfigNotFoundError, ConfigSchemaError
from fris.optimize import CeoParams, GradientMethod, PatternOptParams
from fris.surface import DEFAULT_ENERGY_GAIN, DEFAULT_SH_ORDER, energy_budget_for_gain

BUNDLED_CONFIGS = Path(__file__).resolve().parent.parent / "configs"


class ExperimentKind(str, Enum):
    DEMO = "demo"
    CASE1 = "case1"
    CASE2 = "case2"


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ============================================================
# Schema
# ============================================================

class ChannelSettings(_Section):
    bs_paths: int = Field(2, ge=1)
    user_paths: int = Field(2, ge=1)
    wavelength: float = Field(0.1, gt=0)
    gain_distribution: GainDistribution = GainDistribution.RAYLEIGH
    angle_distribution: AngleDistribution = AngleDistribution.FRONT_HEMISPHERE
    path_loss: float = Field(1.0, gt=0)

    def to_spec(self) -> ChannelSpec:
        return ChannelSpec(self.bs_paths, self.user_paths, self.wavelength,
                           self.gain_distribution, self.angle_distribution, self.path_loss)


class SurfaceSettings(_Section):
    grids: tuple[tuple[int, int], ...] = ((10, 10),)
    spacing_wavelengths: float = Field(0.25, gt=0)
    active_counts: tuple[int, ...] = (16,)
    bits: tuple[Optional[int], ...] = (1,)
    sh_order: int = Field(DEFAULT_SH_ORDER, ge=0, le=8)
    energy_gain: float = Field(DEFAULT_ENERGY_GAIN, gt=0)

    @property
    def energy_budget(self) -> float:
        return energy_budget_for_gain(self.energy_gain)


class SystemSettings(_Section):
    noise_power: float = Field(1.0, ge=0)
    power_budget: float = Field(1.0, gt=0)
    users: int = Field(2, ge=1)
    bs_antennas: tuple[int, ...] = (10,)
    baseline_antennas: int = Field(10, ge=1)
    weights: Optional[tuple[float, ...]] = None


class CeoSettings(_Section):
    population: int = Field(200, ge=10)
    elite_fraction: float = Field(0.1, gt=0, lt=1)
    smoothing: float = Field(0.7, gt=0, le=1)
    max_iterations: int = Field(100, ge=1)
    convergence: float = Field(0.99, gt=0.5, le=1)

    def to_params(self) -> CeoParams:
        return CeoParams(self.population, self.elite_fraction, self.smoothing, self.max_iterations, self.convergence)


class PatternSettings(_Section):
    step_size: float = Field(0.5, gt=0)
    max_iterations: int = Field(100, ge=1)
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    max_backtracks: int = Field(20, ge=1)
    wmmse_iterations: int = Field(50, ge=1)
    tolerance: float = Field(1e-7, gt=0)
    gradient: GradientMethod = GradientMethod.ANALYTIC

    def to_params(self, surface: SurfaceSettings) -> PatternOptParams:
        return PatternOptParams(
            step_size=self.step_size,
            max_iterations=self.max_iterations,
            backtrack_factor=self.backtrack_factor,
            max_backtracks=self.max_backtracks,
            wmmse_iterations=self.wmmse_iterations,
            tolerance=self.tolerance,
            gradient=self.gradient,
            order=surface.sh_order,
            energy_budget=surface.energy_budget,
        )


class ActivationMapSettings(_Section):
    grid: tuple[int, int] = (16, 16)
    active_count: int = Field(16, ge=1)
    bits: Optional[int] = Field(1, ge=1)
    seed: int = Field(0, ge=0)


class DemoSettings(_Section):
    brute_force_limit: int = Field(100_000, ge=1)
    refine_positions: bool = True


class ExperimentConfig(_Section):
    """One experiment file"""
    experiment: ExperimentKind
    seeds: tuple[int, ...] = (0,)
    output_dir: str = "results"
    channel: ChannelSettings = ChannelSettings()
    surface: SurfaceSettings = SurfaceSettings()
    system: SystemSettings = SystemSettings()
    ceo: CeoSettings = CeoSettings()
    pattern: PatternSettings = PatternSettings()
    activation_map: Optional[ActivationMapSettings] = None
    demo: DemoSettings = DemoSettings()

    def with_seeds(self, seeds: tuple[int, ...]) -> "ExperimentConfig":
        return self.model_copy(update={"seeds": tuple(seeds)})


# ============================================================
# Invariants
# ============================================================

def check_invariants(config: ExperimentConfig) -> ExperimentConfig:
    """Cross-field checks; each failure names the offending field"""
    surface, system = config.surface, config.system
    for name, values in (("seeds", config.seeds), ("surface.grids", surface.grids),
                         ("surface.active_counts", surface.active_counts), ("surface.bits", surface.bits),
                         ("system.bs_antennas", system.bs_antennas)):
        if len(values) == 0:
            raise ConfigInvariantError(name, "list must not be empty")
    if len(set(config.seeds)) != len(config.seeds):
        raise ConfigInvariantError("seeds", "seeds must be distinct")
    if any(seed < 0 for seed in config.seeds):
        raise ConfigInvariantError("seeds", "seeds must be non-negative")
    for i, (rows, cols) in enumerate(surface.grids):
        if rows < 1 or cols < 1:
            raise ConfigInvariantError(f"surface.grids.{i}", f"grid {rows}x{cols} must be at least 1x1")
    smallest = min(rows * cols for rows, cols in surface.grids)
    for i, count in enumerate(surface.active_counts):
        if not 1 <= count <= smallest:
            raise ConfigInvariantError(f"surface.active_counts.{i}",
                                       f"{count} active elements do not fit the smallest grid ({smallest})")
    for i, bits in enumerate(surface.bits):
        if bits is not None and bits < 1:
            raise ConfigInvariantError(f"surface.bits.{i}", "phase resolution must be at least 1 bit")
    if any(n < 1 for n in system.bs_antennas):
        raise ConfigInvariantError("system.bs_antennas", "every antenna count must be positive")
    if system.weights is not None:
        if len(system.weights) != system.users:
            raise ConfigInvariantError("system.weights", f"need {system.users} weights, got {len(system.weights)}")
        if any(w <= 0 for w in system.weights):
            raise ConfigInvariantError("system.weights", "weights must be positive")
    if config.experiment is not ExperimentKind.DEMO and system.noise_power == 0:
        raise ConfigInvariantError("system.noise_power", "rates need positive noise power")
    if config.activation_map is not None:
        amap = config.activation_map
        if tuple(amap.grid) not in set(surface.grids):
            raise ConfigInvariantError("activation_map.grid", f"{amap.grid} is not one of surface.grids")
        if amap.active_count not in surface.active_counts:
            raise ConfigInvariantError("activation_map.active_count", "not one of surface.active_counts")
        if amap.bits not in surface.bits:
            raise ConfigInvariantError("activation_map.bits", "not one of surface.bits")
        if amap.seed not in config.seeds:
            raise ConfigInvariantError("activation_map.seed", "not one of seeds")
    return config


# ============================================================
# Loading and saving
# ============================================================

def _parse(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigSchemaError(f"{path}: cannot parse: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigSchemaError(f"{path}: top level must be a mapping")
    return data


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Parse, validate and invariant-check an experiment file"""
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFoundError(path)
    try:
        config = ExperimentConfig.model_validate(_parse(path))
    except ValidationError as exc:
        locations = tuple(".".join(str(part) for part in error["loc"]) for error in exc.errors())
        details = "; ".join(f"{loc}: {error['msg']}" for loc, error in zip(locations, exc.errors()))
        raise ConfigSchemaError(f"{path}: {details}", locations) from exc
    return check_invariants(config)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = config.model_dump(mode="json")
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    return path


def bundled_config(kind: Union[ExperimentKind, str]) -> Path:
    return BUNDLED_CONFIGS / f"{ExperimentKind(kind).value}.yaml"


# ============================================================
# Runtime settings (environment)
# ============================================================

@dataclass(frozen=True)
class RuntimeSettings:
    """Process-level knobs; command-line flags override them"""
    threads: int = 1
    output_dir: Optional[str] = None
    log_level: str = "INFO"
    progress: bool = True

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        load_dotenv()
        raw_threads = os.getenv("FRIS_THREADS", "1")
        try:
            threads = int(raw_threads)
        except ValueError:
            raise ConfigInvariantError("FRIS_THREADS", f"expected a whole number, got {raw_threads!r}") from None
        if threads < 1:
            raise ConfigInvariantError("FRIS_THREADS", f"need at least one thread, got {threads}")
        return cls(
            threads=threads,
            output_dir=os.getenv("FRIS_OUTPUT_DIR") or None,
            log_level=os.getenv("FRIS_LOG_LEVEL", "INFO").upper(),
            progress=os.getenv("FRIS_PROGRESS", "true").lower() == "true",
        )
