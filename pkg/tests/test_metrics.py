"""
Unit Tests for performance metrics (fris.metrics)
Received power, rate and the multi-user weighted sum rate
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from fris.channel import ChannelSpec, HopPath, MultiUserChannel, as_multiuser, sample_multipath, sample_multiuser
from fris.errors import InvalidProblemError, InvalidSpecError, InvalidStateError
from fris.metrics import (
    Mode,
    PrecoderSet,
    Scenario,
    SurfaceState,
    achievable_rate,
    effective_user_channel,
    element_aggregates,
    incoming_phasors,
    path_phasors,
    per_element_aggregate,
    received_power,
    user_channel_vector,
    user_channels,
    weighted_sum_rate,
)
from fris.surface import (
    ActivationMask,
    PatternCoeffs,
    PatternKind,
    ReflectionConfig,
    SurfaceGeometry,
    baseline_pattern,
    grid_positions,
)

FIRST_ORDER = (1 / math.sqrt(4 * math.pi), math.sqrt(3 / (4 * math.pi)))


def literal_power(pair, positions, active, phases, coefficients, noise):
    """Element by element, path by path evaluation of the received power"""
    def gain(c, u):
        x, y, z = u
        return (c[0] * FIRST_ORDER[0] + c[1] * FIRST_ORDER[1] * y
                + c[2] * FIRST_ORDER[1] * z + c[3] * FIRST_ORDER[1] * x)

    total = 0j
    for m in range(len(positions)):
        if not active[m]:
            continue
        for inbound in pair.bs_paths:
            for outbound in pair.user_paths:
                k_inc = inbound.direction.unit_vector
                k_dep = outbound.direction.unit_vector
                phase = 2 * math.pi / pair.wavelength * sum(
                    (k_dep[i] - k_inc[i]) * positions[m][i] for i in range(3))
                total += (complex(math.cos(phases[m]), math.sin(phases[m]))
                          * inbound.gain * outbound.gain
                          * gain(coefficients[m], k_inc) * gain(coefficients[m], k_dep)
                          * complex(math.cos(phase), math.sin(phase)))
    return abs(total) ** 2 / (pair.L * pair.Z) + noise


def random_instance(rng):
    M = int(rng.integers(1, 9))
    L, Z = (int(v) for v in rng.integers(1, 4, size=2))
    pair = sample_multipath(int(rng.integers(0, 10 ** 6)), ChannelSpec(L, Z, angle_distribution="sphere"))
    positions = np.column_stack([rng.uniform(-0.2, 0.2, (M, 2)), np.zeros(M)])
    geometry = SurfaceGeometry(1, M, 0.05, positions)
    active = rng.random(M) < 0.7
    active[int(rng.integers(0, M))] = True
    phases = rng.uniform(0, 2 * math.pi, M)
    coefficients = rng.standard_normal((M, 4)) + 1j * rng.standard_normal((M, 4))
    noise = float(rng.uniform(0, 2))
    scenario = Scenario(geometry, pair, noise)
    state = SurfaceState(ActivationMask(active), ReflectionConfig(phases), PatternCoeffs(coefficients, 1e6))
    return scenario, state, (pair, positions, active, phases, coefficients, noise)


@pytest.fixture
def scenario():
    pair = sample_multipath(1, ChannelSpec(2, 3))
    return Scenario(grid_positions(3, 3, 0.025), pair, noise_power=0.5)


@pytest.fixture
def state():
    rng = np.random.default_rng(0)
    return SurfaceState(
        ActivationMask.from_indices(9, [0, 2, 4, 8]),
        ReflectionConfig(rng.uniform(0, 2 * math.pi, 9)),
        PatternCoeffs(rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4)), 1e6),
    )


class TestReceivedPowerOracle:
    """received_power against an independent literal evaluation"""

    def test_matches_literal_loop(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            scenario, state, args = random_instance(rng)
            expected = literal_power(*args)
            assert received_power(scenario, state) == pytest.approx(expected, rel=1e-12, abs=1e-12)


class TestReceivedPower:
    """Test the single-user received power"""

    def test_single_isotropic_element_at_origin(self):
        """At the origin c_m is the plain sum of cascaded gains"""
        pair = sample_multipath(3, ChannelSpec(2, 2))
        geometry = SurfaceGeometry(1, 1, 0.1, np.zeros((1, 3)))
        scenario = Scenario(geometry, pair, noise_power=0.0)
        state = SurfaceState.initial(1)
        c = pair.cascaded_gains().sum()
        assert per_element_aggregate(scenario, state, 0) == pytest.approx(c)
        assert received_power(scenario, state) == pytest.approx(abs(c) ** 2 / 4)

    def test_noise_floor(self, scenario, state):
        """Power never falls below the noise"""
        assert received_power(scenario, state) >= scenario.noise_power

    def test_inactive_elements_do_not_contribute(self, scenario, state):
        phases = np.array(state.reflection.phases)
        phases[1] += 1.0
        changed = state.with_reflection(ReflectionConfig(phases))
        assert received_power(scenario, changed) == pytest.approx(received_power(scenario, state), rel=1e-14)

    def test_aggregates_match_single_element(self, scenario, state):
        aggregates = element_aggregates(scenario, state)
        assert aggregates[4] == pytest.approx(per_element_aggregate(scenario, state, 4))

    def test_element_index_out_of_range(self, scenario, state):
        with pytest.raises(InvalidStateError):
            per_element_aggregate(scenario, state, 9)

    def test_state_size_mismatch(self, scenario):
        with pytest.raises(InvalidStateError):
            received_power(scenario, SurfaceState.initial(4))

    def test_path_phasors_sum_to_amplitude(self, scenario, state):
        """Σ over paths of the post-modulation phasors gives the received amplitude"""
        phasors = path_phasors(scenario, state)
        assert phasors.shape == (2, 3)
        power = abs(phasors.sum()) ** 2 / 6 + scenario.noise_power
        assert power == pytest.approx(received_power(scenario, state), rel=1e-12)

    def test_incoming_phasors_shape(self, scenario, state):
        assert incoming_phasors(scenario, state).shape == (2, 3)

    def test_global_phase_shift_leaves_power_unchanged(self, scenario, state):
        """A common rotation of every inbound gain or of every reflection phase drops out of |·|²"""
        expected = received_power(scenario, state)
        for alpha in (0.3, 1.7, -2.9):
            rotated = Scenario(scenario.geometry, scenario.channel.scaled(np.exp(1j * alpha)), scenario.noise_power)
            assert received_power(rotated, state) == pytest.approx(expected, rel=1e-12)
            shifted = state.with_reflection(ReflectionConfig(np.asarray(state.reflection.phases) + alpha))
            assert received_power(scenario, shifted) == pytest.approx(expected, rel=1e-12)

    def test_unit_slope_in_noise(self, scenario, state):
        base = received_power(scenario, state)
        for extra in (0.1, 1.0, 7.5):
            noisier = Scenario(scenario.geometry, scenario.channel, scenario.noise_power + extra)
            assert received_power(noisier, state) - base == pytest.approx(extra, rel=1e-9)

    def test_isotropic_pattern_coefficients_match_traditional(self, scenario, state):
        """Pattern mode with isotropic coefficients reproduces the fixed isotropic element"""
        traditional = SurfaceState(state.mask, state.reflection, baseline_pattern(PatternKind.ISOTROPIC))
        patterned = SurfaceState(state.mask, state.reflection, PatternCoeffs.isotropic(9))
        expected = received_power(scenario, traditional)
        assert received_power(scenario.with_mode(Mode.PATTERN_FRIS), patterned) == pytest.approx(expected, rel=1e-12)


class TestAchievableRate:
    def test_rate(self):
        assert achievable_rate(3.0, 1.0) == pytest.approx(math.log2(3.0))

    def test_unit_snr(self):
        assert achievable_rate(2.0, 1.0) == pytest.approx(1.0)

    def test_rate_falls_as_noise_rises(self):
        """Fixed signal power S: log2(1 + S/σ²) decreases strictly in σ²"""
        signal = 4.0
        noises = np.linspace(0.1, 10.0, 50)
        rates = [achievable_rate(signal + noise, noise) for noise in noises]
        assert all(b < a for a, b in zip(rates, rates[1:]))
        np.testing.assert_allclose(rates, np.log2(1 + signal / noises), rtol=1e-12)

    def test_noise_only_is_zero_rate(self):
        assert achievable_rate(0.7, 0.7) == 0.0

    def test_rejects_zero_noise(self):
        with pytest.raises(InvalidProblemError):
            achievable_rate(1.0, 0.0)


class TestScenario:
    """Test scenario validation"""

    def test_rejects_negative_noise(self, scenario):
        with pytest.raises(InvalidSpecError):
            Scenario(scenario.geometry, scenario.channel, -1.0)

    def test_default_weights(self):
        mu = sample_multiuser(0, ChannelSpec(2, 2), users=4, bs_antennas=2)
        scenario = Scenario(grid_positions(2, 2, 0.05), mu, 1.0)
        np.testing.assert_allclose(scenario.user_weights(), 0.25)

    def test_rejects_wrong_weight_count(self):
        mu = sample_multiuser(0, ChannelSpec(2, 2), users=2, bs_antennas=2)
        with pytest.raises(InvalidSpecError):
            Scenario(grid_positions(2, 2, 0.05), mu, 1.0, weights=(1.0,))

    def test_single_user_channel_of_multiuser(self):
        mu = sample_multiuser(0, ChannelSpec(2, 2), users=2, bs_antennas=2)
        with pytest.raises(InvalidStateError):
            Scenario(grid_positions(2, 2, 0.05), mu, 1.0).single_user_channel()


class TestPrecoderSet:
    def test_budget_enforced(self):
        with pytest.raises(InvalidStateError):
            PrecoderSet(np.ones((2, 2)), power_budget=1.0)

    def test_total_power(self):
        assert PrecoderSet(np.full((2, 2), 0.5), 1.0).total_power == pytest.approx(1.0)


class TestWeightedSumRate:
    """Test the MISO weighted sum rate"""

    def test_single_user(self):
        H = np.array([[1.0 + 0j]])
        assert weighted_sum_rate(H, PrecoderSet(np.array([[1.0]]), 1.0), [1.0], 1.0) == pytest.approx(1.0)

    def test_orthogonal_users(self):
        """No interference between orthogonal channels"""
        W = PrecoderSet(np.eye(2) * math.sqrt(0.5), 1.0)
        rate = weighted_sum_rate(np.eye(2), W, [1.0, 1.0], 1.0)
        assert rate == pytest.approx(2 * math.log2(1.5))

    def test_interference(self):
        H = np.array([[1.0, 0.0], [1.0, 0.0]])
        W = PrecoderSet(np.array([[math.sqrt(0.5), 0], [math.sqrt(0.5), 0]]), 1.0)
        rate = weighted_sum_rate(H, W, [0.5, 0.5], 1.0)
        assert rate == pytest.approx(math.log2(1 + 0.5 / 1.5))

    def test_shape_mismatch(self):
        with pytest.raises(InvalidStateError):
            weighted_sum_rate(np.eye(2), PrecoderSet(np.zeros((1, 2)), 1.0), [1.0, 1.0], 1.0)

    def test_rejects_zero_noise(self):
        with pytest.raises(InvalidProblemError):
            weighted_sum_rate(np.eye(2), PrecoderSet(np.zeros((2, 2)), 1.0), [1.0, 1.0], 0.0)


class TestEffectiveUserChannel:
    """Test the multi-user channel h_k"""

    def test_single_antenna_view_matches_received_power(self, scenario, state):
        """With K = 1 and N_t = 1, |h|² is the received power minus noise"""
        mu_scenario = Scenario(scenario.geometry, as_multiuser(scenario.channel), scenario.noise_power)
        h = user_channels(mu_scenario, state)
        assert h.shape == (1, 1)
        signal = received_power(scenario, state) - scenario.noise_power
        assert abs(h[0, 0]) ** 2 == pytest.approx(signal, rel=1e-12)

    def test_shapes(self, state):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        scenario = Scenario(grid_positions(3, 3, 0.025), mu, 1.0)
        assert user_channels(scenario, state).shape == (2, 4)
        assert effective_user_channel(scenario, state, 1).shape == (4,)

    def test_user_out_of_range(self, state):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        scenario = Scenario(grid_positions(3, 3, 0.025), mu, 1.0)
        with pytest.raises(InvalidStateError):
            effective_user_channel(scenario, state, 2)

    def test_channel_vector_from_multiuser_channel(self, state):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        geometry = grid_positions(3, 3, 0.025)
        h = user_channel_vector(mu, geometry, state, 1)
        np.testing.assert_allclose(h, effective_user_channel(Scenario(geometry, mu, 1.0), state, 1), rtol=1e-14)

    def test_zero_patterns_give_zero_channel(self, state):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        silent = SurfaceState(state.mask, state.reflection, PatternCoeffs(np.zeros((9, 4))))
        np.testing.assert_array_equal(user_channel_vector(mu, grid_positions(3, 3, 0.025), silent, 0), 0.0)

    def test_linear_in_inbound_gains(self, state):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        doubled = MultiUserChannel(tuple(HopPath(2 * p.gain, p.direction) for p in mu.bs_paths), mu.user_paths,
                                   mu.bs_angles, mu.bs_antennas, mu.wavelength)
        geometry = grid_positions(3, 3, 0.025)
        np.testing.assert_allclose(user_channel_vector(doubled, geometry, state, 0),
                                   2 * user_channel_vector(mu, geometry, state, 0), rtol=1e-12)

    def test_channel_vector_rejects_state_size_mismatch(self):
        mu = sample_multiuser(5, ChannelSpec(2, 3), users=2, bs_antennas=4)
        with pytest.raises(InvalidStateError):
            user_channel_vector(mu, grid_positions(3, 3, 0.025), SurfaceState.initial(4), 0)

    def test_requires_multiuser(self, scenario, state):
        with pytest.raises(InvalidStateError):
            user_channels(scenario, state)
