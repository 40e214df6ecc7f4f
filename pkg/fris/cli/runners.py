"""
Experiment runners
==================
Seeded reproductions of the path-aware demo, the discrete position/phase
study (case 1) and the multi-user pattern study (case 2).
"""
from __future__ import annotations

import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from tqdm import tqdm

from fris.channel import sample_multipath, sample_multiuser
from fris.cli.config import ExperimentConfig, ExperimentKind
from fris.errors import FrisError
from fris.metrics import (
    Mode,
    Scenario,
    SurfaceState,
    achievable_rate,
    incoming_phasors,
    path_phasors,
    received_power,
)
from fris.optimize import (
    DiscreteProblem,
    TraceRow,
    brute_force_discrete,
    cross_entropy_search,
    max_phase_deviation,
    optimize_patterns,
    optimize_reflections,
    phase_spread,
    refine_positions_continuous,
)
from fris.surface import PatternKind, SurfaceGeometry, grid_positions

logger = logging.getLogger(__name__)

TRADITIONAL_TR38901 = "traditional-tr38901"
TRADITIONAL_ISOTROPIC = "traditional-isotropic"
CONTINUOUS_POSITION = "position-fris-continuous"


# ============================================================
# Result records
# ============================================================

@dataclass(frozen=True)
class ResultRecord:
    """One row of results.csv (runtime only goes to timings.csv)"""
    experiment: str
    grid: tuple[int, int]
    active_count: int
    resolution: str
    bs_antennas: int
    mode: str
    seed: int
    objective: float
    runtime_ms: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.objective) and self.objective >= 0):
            raise FrisError(f"objective must be finite and non-negative, got {self.objective}")

    @property
    def grid_label(self) -> str:
        return f"{self.grid[0]}x{self.grid[1]}"

    def sort_key(self) -> tuple:
        return (self.experiment, self.grid, self.active_count, self.resolution, self.bs_antennas,
                self.mode, self.seed)


@dataclass
class ExperimentResult:
    experiment: str
    seeds: tuple[int, ...]
    records: list[ResultRecord] = field(default_factory=list)
    traces: dict[str, tuple[TraceRow, ...]] = field(default_factory=dict)
    activation_map: Optional[dict] = None

    def sorted_records(self) -> list[ResultRecord]:
        return sorted(self.records, key=ResultRecord.sort_key)


@dataclass
class _CellOutcome:
    records: list[ResultRecord]
    traces: dict[str, tuple[TraceRow, ...]]
    states: dict[str, SurfaceState] = field(default_factory=dict)


def _resolution(bits: Optional[int]) -> str:
    return "continuous" if bits is None else f"b={bits}"


def _objective(power: float, noise: float) -> float:
    return achievable_rate(power, noise) if noise > 0 else power


def _geometry(config: ExperimentConfig, grid: tuple[int, int]) -> SurfaceGeometry:
    spacing = config.surface.spacing_wavelengths * config.channel.wavelength
    return grid_positions(grid[0], grid[1], spacing)


def _run_cells(label: str, cells: list, work: Callable, threads: int, progress: bool) -> list[_CellOutcome]:
    """Evaluate independent cells, optionally in parallel; order is restored by the caller"""
    outcomes = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(work, cell) for cell in cells]
        for future in tqdm(as_completed(futures), total=len(futures), desc=label,
                           disable=not progress, file=sys.stderr):
            outcomes.append(future.result())
    return outcomes


def _collect(config: ExperimentConfig, outcomes: list[_CellOutcome]) -> ExperimentResult:
    result = ExperimentResult(config.experiment.value, tuple(config.seeds))
    for outcome in outcomes:
        result.records.extend(outcome.records)
        result.traces.update(outcome.traces)
    result.records = result.sorted_records()
    return result


# ============================================================
# Case 1: position selection with discrete phases
# ============================================================

def _case1_cell(config: ExperimentConfig, cell) -> _CellOutcome:
    grid, active_count, bits, seed = cell
    channel = sample_multipath(seed, config.channel.to_spec())
    scenario = Scenario(_geometry(config, grid), channel, config.system.noise_power, Mode.POSITION_FRIS)
    problem = DiscreteProblem(scenario, active_count, bits)
    resolution = _resolution(bits)

    started = time.perf_counter()
    traditional = problem.traditional_objective()
    traditional_ms = (time.perf_counter() - started) * 1e3

    started = time.perf_counter()
    search = cross_entropy_search(problem, config.ceo.to_params(), seed)
    search_ms = (time.perf_counter() - started) * 1e3

    common = dict(experiment="case1", grid=tuple(grid), active_count=active_count, resolution=resolution,
                  bs_antennas=1, seed=seed)
    name = f"case1_{grid[0]}x{grid[1]}_m{active_count}_{resolution.replace('=', '')}_seed{seed}"
    return _CellOutcome(
        records=[
            ResultRecord(mode=Mode.TRADITIONAL.value, objective=traditional, runtime_ms=traditional_ms, **common),
            ResultRecord(mode=Mode.POSITION_FRIS.value, objective=search.objective, runtime_ms=search_ms, **common),
        ],
        traces={name: search.trace},
        states={name: search.state},
    )


def _activation_map(config: ExperimentConfig, outcomes: list[_CellOutcome]) -> Optional[dict]:
    amap = config.activation_map
    if amap is None:
        return None
    name = f"case1_{amap.grid[0]}x{amap.grid[1]}_m{amap.active_count}_{_resolution(amap.bits).replace('=', '')}_seed{amap.seed}"
    for outcome in outcomes:
        if name in outcome.states:
            mask = outcome.states[name].mask
            return {
                "run": name,
                "grid": list(amap.grid),
                "active_indices": mask.indices.tolist(),
                "rows": ["".join(str(v) for v in row) for row in mask.as_grid(*amap.grid)],
            }
    return None


def run_case1(config: ExperimentConfig, threads: int = 1, progress: bool = False) -> ExperimentResult:
    """Traditional layout vs cross-entropy position/phase search for every (grid, M̂, b, seed)"""
    surface = config.surface
    cells = [
        (tuple(grid), active_count, bits, seed)
        for grid in surface.grids
        for active_count in surface.active_counts
        for bits in surface.bits
        for seed in config.seeds
    ]
    logger.info("Case 1: %d cells on %d thread(s)", len(cells), threads)
    outcomes = _run_cells("case1", cells, lambda cell: _case1_cell(config, cell), threads, progress)
    result = _collect(config, outcomes)
    result.activation_map = _activation_map(config, outcomes)
    return result


# ============================================================
# Case 2: multi-user pattern optimization
# ============================================================

def _case2_cell(config: ExperimentConfig, cell) -> _CellOutcome:
    grid, antennas, seed = cell
    system = config.system
    params = config.pattern.to_params(config.surface)
    channel = sample_multiuser(seed, config.channel.to_spec(), system.users, antennas)
    geometry = _geometry(config, grid)
    scenario = Scenario(geometry, channel, system.noise_power, Mode.TRADITIONAL,
                        system.power_budget, system.weights)
    common = dict(experiment="case2", grid=tuple(grid), active_count=geometry.element_count,
                  bs_antennas=antennas, seed=seed)
    prefix = f"case2_{grid[0]}x{grid[1]}_nt{antennas}_seed{seed}"
    records, traces = [], {}

    started = time.perf_counter()
    isotropic = optimize_reflections(scenario, params, seed, PatternKind.ISOTROPIC)
    isotropic_ms = (time.perf_counter() - started) * 1e3

    if antennas == system.baseline_antennas:
        started = time.perf_counter()
        directional = optimize_reflections(scenario, params, seed, PatternKind.TR38901)
        directional_ms = (time.perf_counter() - started) * 1e3
        records.append(ResultRecord(mode=TRADITIONAL_ISOTROPIC, resolution="fixed", objective=isotropic.objective,
                                    runtime_ms=isotropic_ms, **common))
        records.append(ResultRecord(mode=TRADITIONAL_TR38901, resolution="fixed", objective=directional.objective,
                                    runtime_ms=directional_ms, **common))
        traces[f"{prefix}_{TRADITIONAL_ISOTROPIC}"] = isotropic.trace
        traces[f"{prefix}_{TRADITIONAL_TR38901}"] = directional.trace

    if antennas in system.bs_antennas:
        started = time.perf_counter()
        fris = optimize_patterns(scenario.with_mode(Mode.PATTERN_FRIS), params, seed,
                                 initial=isotropic.state, precoders=isotropic.precoders)
        fris_ms = (time.perf_counter() - started) * 1e3 + isotropic_ms
        resolution = f"Q={(config.surface.sh_order + 1) ** 2}"
        records.append(ResultRecord(mode=Mode.PATTERN_FRIS.value, resolution=resolution, objective=fris.objective,
                                    runtime_ms=fris_ms, **common))
        traces[f"{prefix}_{Mode.PATTERN_FRIS.value}"] = fris.trace
    return _CellOutcome(records, traces)


def run_case2(config: ExperimentConfig, threads: int = 1, progress: bool = False) -> ExperimentResult:
    """Pattern-FRIS at every N_t and both fixed-pattern baselines at the baseline N_t"""
    system = config.system
    antennas = sorted(set(system.bs_antennas) | {system.baseline_antennas})
    cells = [(tuple(grid), n, seed) for grid in config.surface.grids for n in antennas for seed in config.seeds]
    logger.info("Case 2: %d cells on %d thread(s)", len(cells), threads)
    outcomes = _run_cells("case2", cells, lambda cell: _case2_cell(config, cell), threads, progress)
    return _collect(config, outcomes)


# ============================================================
# Path-aware demo
# ============================================================

@dataclass
class ModeReport:
    power: float
    objective: float
    phase_spread: float
    max_phase_deviation_deg: float
    phasors: list
    incoming_phasors: list
    active_indices: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class DemoReport:
    seed: int
    channel: dict
    grid: tuple[int, int]
    active_count: int
    resolution: str
    search: str
    modes: dict[str, ModeReport]
    traces: dict[str, tuple[TraceRow, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "experiment": ExperimentKind.DEMO.value,
            "seed": self.seed,
            "channel": self.channel,
            "grid": list(self.grid),
            "active_count": self.active_count,
            "resolution": self.resolution,
            "position_search": self.search,
            "modes": {name: report.to_dict() for name, report in self.modes.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _pairs(values: np.ndarray) -> list:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values).ravel()]


def _mode_report(scenario: Scenario, state: SurfaceState) -> ModeReport:
    power = received_power(scenario, state)
    phasors = path_phasors(scenario, state)
    return ModeReport(
        power=power,
        objective=_objective(power, scenario.noise_power),
        phase_spread=phase_spread(phasors),
        max_phase_deviation_deg=max_phase_deviation(phasors),
        phasors=_pairs(phasors),
        incoming_phasors=_pairs(incoming_phasors(scenario, state)),
        active_indices=state.mask.indices.tolist(),
    )


def run_demo_path_aware(config: ExperimentConfig, seed: int) -> DemoReport:
    """Optimize one channel with all three surface types and report per-path phasors"""
    grid = tuple(config.surface.grids[0])
    active_count = config.surface.active_counts[0]
    bits = config.surface.bits[0]
    channel = sample_multipath(seed, config.channel.to_spec())
    scenario = Scenario(_geometry(config, grid), channel, config.system.noise_power, Mode.TRADITIONAL)
    problem = DiscreteProblem(scenario, active_count, bits)

    traditional = problem.state_for(*problem.traditional_candidate())

    traces = {}
    if problem.search_space_size <= config.demo.brute_force_limit:
        search_kind = "exhaustive"
        position = brute_force_discrete(problem).state
    else:
        search_kind = "cross-entropy"
        search = cross_entropy_search(problem, config.ceo.to_params(), seed)
        position = search.state
        traces[f"demo_seed{seed}_{Mode.POSITION_FRIS.value}"] = search.trace

    params = config.pattern.to_params(config.surface)
    pattern = optimize_patterns(scenario.with_mode(Mode.PATTERN_FRIS), params, seed, initial=position)
    traces[f"demo_seed{seed}_{Mode.PATTERN_FRIS.value}"] = pattern.trace

    modes = {
        Mode.TRADITIONAL.value: _mode_report(scenario, traditional),
        Mode.POSITION_FRIS.value: _mode_report(scenario, position),
        Mode.PATTERN_FRIS.value: _mode_report(scenario.with_mode(Mode.PATTERN_FRIS), pattern.state),
    }
    if config.demo.refine_positions:
        refined = refine_positions_continuous(scenario, position, bits)
        modes[CONTINUOUS_POSITION] = _mode_report(scenario.with_geometry(refined.geometry), refined.state)

    logger.info("Demo seed %d: %s", seed,
                ", ".join(f"{name} P={report.power:.4g}" for name, report in modes.items()))
    return DemoReport(seed, channel.to_dict(), grid, active_count, _resolution(bits), search_kind, modes, traces)
