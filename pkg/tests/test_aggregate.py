"""Aggregate plant and bang-bang reference controller tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridforge.aggregate import (
    AggregateParams, AggregateTrajectory, balancing_output, constant_controller,
    droop_controller, fixed_vsg_controller, frequency_cost, pmp_control,
    simulate_aggregate, vsg_aggregate_controller,
)


def deficit_params(deficit=0.3, d_s=0.05, horizon=10.0):
    return AggregateParams(m_s=0.2, d_s=d_s, p_g=0.0, p_l=deficit,
                           p_min=-deficit, p_max=deficit, horizon=horizon)


class TestParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            AggregateParams(m_s=0.0, d_s=0.1, p_g=0, p_l=0, p_min=-1, p_max=1, horizon=1)
        with pytest.raises(ValueError):
            AggregateParams(m_s=1.0, d_s=-0.1, p_g=0, p_l=0, p_min=-1, p_max=1, horizon=1)
        with pytest.raises(ValueError):
            AggregateParams(m_s=1.0, d_s=0.1, p_g=0, p_l=0, p_min=1, p_max=1, horizon=1)


class TestPmpControl:
    def test_three_branch_selection(self):
        params = deficit_params()
        assert pmp_control(-0.1, params) == params.p_max
        assert pmp_control(0.1, params) == params.p_min
        assert pmp_control(0.0, params) == pytest.approx(0.3)  # P_L - P_G

    def test_dead_band_selects_balance_branch(self):
        params = deficit_params()
        assert pmp_control(5e-10, params) == pytest.approx(0.3)
        assert pmp_control(-5e-10, params) == pytest.approx(0.3)

    def test_balancing_output_clamped(self):
        params = AggregateParams(m_s=0.2, d_s=0.05, p_g=0.0, p_l=2.0,
                                 p_min=-0.3, p_max=0.3, horizon=1.0)
        assert balancing_output(params) == params.p_max

    @given(w=st.floats(-1, 1))
    def test_output_always_admissible(self, w):
        params = deficit_params()
        assert params.p_min <= pmp_control(w, params) <= params.p_max


class TestSimulateAggregate:
    def test_balanced_start_stays_at_zero(self):
        params = AggregateParams(m_s=0.2, d_s=0.05, p_g=0.5, p_l=0.5,
                                 p_min=-0.3, p_max=0.3, horizon=2.0)
        traj = simulate_aggregate(params, constant_controller(0.0), dt=1e-3)
        assert np.all(traj.omega_s == 0.0)

    def test_pmp_slides_back_to_zero(self):
        traj = simulate_aggregate(deficit_params(), lambda w, t: pmp_control(w, deficit_params()), dt=1e-4)
        assert abs(traj.omega_s[-1]) < 1e-6

    def test_uncontrolled_settles_at_droop_offset(self):
        # constant P_out = 0 against deficit -0.3: steady state -0.3/D_S
        params = deficit_params(d_s=0.5, horizon=20.0)
        traj = simulate_aggregate(params, constant_controller(0.0), dt=1e-3)
        assert traj.omega_s[-1] == pytest.approx(-0.3 / 0.5, rel=1e-4)

    def test_controller_output_clamped(self):
        params = deficit_params()
        traj = simulate_aggregate(params, constant_controller(99.0), dt=1e-3)
        assert np.all(traj.p_out <= params.p_max)

    def test_nonfinite_controller_rejected(self):
        with pytest.raises(ValueError):
            simulate_aggregate(deficit_params(), constant_controller(math.nan), dt=1e-3)

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValueError):
            simulate_aggregate(deficit_params(), lambda w, t: pmp_control(w, deficit_params()), dt=0.0)


class TestFrequencyCost:
    def test_zero_deviation_is_free(self):
        t = np.linspace(0, 1, 11)
        assert frequency_cost(AggregateTrajectory(t, np.zeros(11), np.zeros(11))) == 0.0

    def test_constant_integrand(self):
        t = np.linspace(0, 4.0, 401)
        traj = AggregateTrajectory(t, np.full(401, 0.5), np.zeros(401))
        assert frequency_cost(traj) == pytest.approx(0.5 * 0.25 * 4.0)

    def test_exponential_decay_quadrature(self):
        # integral of 0.5*e^{-2t} over a long horizon is 1/4
        t = np.linspace(0, 30.0, 300001)
        traj = AggregateTrajectory(t, np.exp(-t), np.zeros_like(t))
        assert frequency_cost(traj) == pytest.approx(0.25, abs=1e-6)


class TestOptimalityOrdering:
    def test_pmp_is_lower_envelope(self):
        params = deficit_params()
        dt = 1e-3
        pmp_cost = frequency_cost(simulate_aggregate(params, lambda w, t: pmp_control(w, params), dt))
        trace: list = []
        dynamic = frequency_cost(simulate_aggregate(
            params, vsg_aggregate_controller(params, gamma_trace=trace, dt=dt), dt))
        alpha = 10.0 * float(np.mean(np.abs(trace))) if trace else 1.0
        fixed = frequency_cost(simulate_aggregate(
            params, fixed_vsg_controller(params, alpha=alpha, dt=dt), dt))
        droop = frequency_cost(simulate_aggregate(params, droop_controller(params), dt))
        const = frequency_cost(simulate_aggregate(params, constant_controller(0.0), dt))
        for other in (dynamic, fixed, droop, const):
            assert pmp_cost <= other + 1e-9
        # the dynamic-penalty controller stays within the fixed-parameter cost
        assert pmp_cost <= dynamic <= fixed + 1e-9

    @settings(max_examples=20, deadline=None)
    @given(deficit=st.floats(0.05, 0.5), gain=st.floats(1.0, 30.0))
    def test_pmp_beats_droop_family(self, deficit, gain):
        params = deficit_params(deficit=deficit, horizon=5.0)
        dt = 2e-3
        pmp_cost = frequency_cost(simulate_aggregate(params, lambda w, t: pmp_control(w, params), dt))
        droop = frequency_cost(simulate_aggregate(params, droop_controller(params, gain), dt))
        assert pmp_cost <= droop + 1e-9
