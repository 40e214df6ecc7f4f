"""
Statistical acceptance tests
Orderings and trends over many seeded instances; slow, run with -m slow
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from fris.channel import ChannelSpec, sample_multipath
from fris.cli.config import DemoSettings, ExperimentKind, bundled_config, load_config
from fris.cli.runners import (
    TRADITIONAL_ISOTROPIC,
    TRADITIONAL_TR38901,
    run_case1,
    run_case2,
    run_demo_path_aware,
)
from fris.metrics import Mode, Scenario
from fris.optimize import CeoParams, DiscreteProblem, brute_force_discrete, cross_entropy_search
from fris.surface import grid_positions

pytestmark = pytest.mark.slow

SLACK = 1e-9


def assert_non_decreasing(trace, slack=0.0):
    values = [row.best_objective for row in trace]
    assert all(b >= a - slack for a, b in zip(values, values[1:]))


def medians(records, key):
    groups = {}
    for record in records:
        groups.setdefault(key(record), []).append(record.objective)
    return {k: float(np.median(v)) for k, v in groups.items()}


class TestCrossEntropyVsExhaustive:
    """CEO should find the exhaustive optimum on the 672-configuration problem"""

    def test_finds_optimum_in_95_of_100(self):
        geometry = grid_positions(3, 3, 0.025)
        hits = 0
        for seed in range(100):
            pair = sample_multipath(seed, ChannelSpec(2, 2))
            problem = DiscreteProblem(Scenario(geometry, pair, 1.0, Mode.POSITION_FRIS), 3, 1)
            assert problem.search_space_size == 672
            exact = brute_force_discrete(problem).objective
            search = cross_entropy_search(problem, CeoParams(), seed)
            assert search.objective <= exact + SLACK
            assert_non_decreasing(search.trace)
            hits += search.objective >= exact - 1e-12 * max(1.0, exact)
        assert hits >= 95


class TestPathAwareDemo:
    """Power and alignment ordering of the three surface types on L=1, Z=4 channels"""

    @pytest.fixture(scope="class")
    def reports(self):
        config = load_config(bundled_config(ExperimentKind.DEMO))
        config = config.model_copy(update={"demo": DemoSettings(refine_positions=False)})
        assert (config.surface.sh_order + 1) ** 2 == 16
        return [run_demo_path_aware(config, seed) for seed in range(100)]

    def test_power_ordering(self, reports):
        for report in reports:
            modes = report.modes
            assert modes["pattern-fris"].power >= modes["position-fris"].power - SLACK
            assert modes["position-fris"].power >= modes["traditional"].power - SLACK

    def test_spread_ordering(self, reports):
        for report in reports:
            modes = report.modes
            assert modes["pattern-fris"].phase_spread <= modes["position-fris"].phase_spread + SLACK
            assert modes["position-fris"].phase_spread <= modes["traditional"].phase_spread + SLACK

    def test_pattern_fris_aligns_paths(self, reports):
        aligned = sum(report.modes["pattern-fris"].max_phase_deviation_deg <= 5.0 for report in reports)
        assert aligned >= 90

    def test_traces_monotone(self, reports):
        for report in reports:
            for trace in report.traces.values():
                assert_non_decreasing(trace, SLACK)


class TestDiscreteSurfaceTrend:
    """Rate gain of position FRIS grows with the number of candidate positions"""

    @pytest.fixture(scope="class")
    def result(self):
        config = load_config(bundled_config(ExperimentKind.CASE1))
        surface = config.surface.model_copy(update={"active_counts": (16,), "bits": (1,)})
        config = config.model_copy(update={"surface": surface, "activation_map": None})
        assert len(config.seeds) >= 20
        return run_case1(config, threads=4)

    def test_fris_never_below_traditional(self, result):
        rows = {}
        for record in result.records:
            rows.setdefault((record.grid, record.seed), {})[record.mode] = record.objective
        for values in rows.values():
            assert values["position-fris"] >= values["traditional"] - SLACK

    def test_median_rate_grows_with_grid(self, result):
        fris = [r for r in result.records if r.mode == "position-fris"]
        by_grid = medians(fris, lambda r: r.grid)
        ordered = [by_grid[grid] for grid in sorted(by_grid, key=lambda g: g[0] * g[1])]
        assert all(b >= a for a, b in zip(ordered, ordered[1:]))

    def test_relative_gain_grows(self, result):
        rows = {}
        for record in result.records:
            rows.setdefault((record.grid, record.seed), {})[record.mode] = record.objective
        gains = {}
        for (grid, _), values in rows.items():
            gains.setdefault(grid, []).append(values["position-fris"] / values["traditional"] - 1)
        assert np.median(gains[(16, 16)]) > np.median(gains[(6, 6)])

    def test_traces_monotone(self, result):
        for trace in result.traces.values():
            assert_non_decreasing(trace)


class TestMultiUserPatternTrend:
    """Pattern FRIS against fixed-pattern baselines in the two-user downlink"""

    @pytest.fixture(scope="class")
    def result(self):
        return run_case2(load_config(bundled_config(ExperimentKind.CASE2)), threads=4)

    @staticmethod
    def objectives(result):
        table = {}
        for record in result.records:
            table[(record.grid, record.bs_antennas, record.mode, record.seed)] = record.objective
        return table

    def test_fris_beats_baselines(self, result):
        table = self.objectives(result)
        seeds = result.seeds
        for grid in ((5, 5), (10, 10)):
            for antennas in (5, 10):
                wins = sum(
                    table[(grid, antennas, "pattern-fris", s)] > max(table[(grid, 10, TRADITIONAL_ISOTROPIC, s)],
                                                                     table[(grid, 10, TRADITIONAL_TR38901, s)])
                    for s in seeds
                )
                assert wins >= 0.9 * len(seeds)

    def test_small_fris_matches_large_traditional(self, result):
        """Pattern FRIS on 5x5 elements keeps up with either fixed pattern on 10x10"""
        table = self.objectives(result)
        seeds = result.seeds
        records = result.records
        fris = medians([r for r in records if r.mode == "pattern-fris" and r.bs_antennas == 10], lambda r: r.grid)
        for baseline_mode in (TRADITIONAL_ISOTROPIC, TRADITIONAL_TR38901):
            wins = sum(table[((5, 5), 10, "pattern-fris", s)] >= table[((10, 10), 10, baseline_mode, s)]
                       for s in seeds)
            assert wins >= 0.9 * len(seeds)
            baseline = medians([r for r in records if r.mode == baseline_mode], lambda r: r.grid)
            assert fris[(5, 5)] >= baseline[(10, 10)]

    def test_traces_monotone(self, result):
        for trace in result.traces.values():
            assert_non_decreasing(trace, SLACK)
