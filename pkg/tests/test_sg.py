"""Swing machine tests: derivatives, reactance damping, pole-slip detection."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridforge.network import OMEGA_SYNC
from gridforge.sg import (
    SgParams, SgState, damping_from_reactances, loss_of_synchronism,
    swing_derivatives,
)


class TestParams:
    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            SgParams(m=0.0)
        with pytest.raises(ValueError):
            SgParams(m=1.0, d=-0.1)
        with pytest.raises(ValueError):
            SgParams(m=1.0, xq_t=0.2, xq_st=0.5)
        with pytest.raises(ValueError):
            SgParams(m=1.0, tq_st=0.0)


class TestSwingDerivatives:
    def test_synchronous_equilibrium(self):
        params = SgParams(m=10.0, d=2.0, p_mech=1.0)
        assert swing_derivatives(SgState(), params, 1.0) == (0.0, 0.0)

    def test_frozen_substitution(self):
        # M=10, D=2, omega=0.1, P_mech=1.0, P_elec=0.9:
        #   domega = (-0.2 + 1.0 - 0.9)/10 = -0.01
        params = SgParams(m=10.0, d=2.0, p_mech=1.0, governor_droop=0.0)
        dd, dw = swing_derivatives(SgState(omega=0.1), params, 0.9)
        assert dd == pytest.approx(0.1)
        assert dw == pytest.approx(-0.01)

    def test_undamped_drift(self):
        params = SgParams(m=5.0, d=0.0, p_mech=0.7)
        dd, dw = swing_derivatives(SgState(omega=0.5), params, 0.7)
        assert (dd, dw) == (0.5, 0.0)

    def test_droop_adds_braking_on_per_unit_frequency(self):
        # R=0.05 on 1 rad/s deviation: dP = -(omega/omega_s)/R
        params = SgParams(m=1.0, d=0.0, p_mech=1.0, governor_droop=0.05)
        _, dw = swing_derivatives(SgState(omega=1.0), params, 1.0)
        assert dw == pytest.approx(-(1.0 / OMEGA_SYNC) / 0.05)

    def test_droop_disabled_at_zero(self):
        params = SgParams(m=1.0, d=0.0, p_mech=1.0, governor_droop=0.0)
        _, dw = swing_derivatives(SgState(omega=1.0), params, 1.0)
        assert dw == 0.0


class TestDampingFromReactances:
    def test_frozen_scalar_evaluation(self):
        # ((0.5-0.2)/(0.1+0.5)) * (0.5/0.2) * 0.05 * 1.0 = 0.0625
        assert damping_from_reactances(0.1, 0.5, 0.2, 0.05, 1.0) == pytest.approx(0.0625)

    def test_no_saliency_means_no_damping(self):
        assert damping_from_reactances(0.1, 0.3, 0.3, 0.05, 1.0) == 0.0

    def test_proportional_in_v_out(self):
        assert damping_from_reactances(0.1, 0.5, 0.2, 0.05, 0.0) == 0.0
        assert damping_from_reactances(0.1, 0.5, 0.2, 0.05, 2.0) == pytest.approx(0.125)

    def test_division_guards(self):
        with pytest.raises(ValueError):
            damping_from_reactances(0.1, 0.5, 0.0, 0.05, 1.0)
        with pytest.raises(ValueError):
            damping_from_reactances(-0.5, 0.5, 0.2, 0.05, 1.0)

    @settings(max_examples=100)
    @given(
        x=st.floats(0.0, 1.0),
        xq_st=st.floats(0.05, 0.4),
        gap=st.floats(0.05, 0.5),
        tq=st.floats(0.01, 0.2),
        v=st.floats(0.5, 1.5),
    )
    def test_monotonicity(self, x, xq_st, gap, tq, v):
        xq_t = xq_st + gap
        base = damping_from_reactances(x, xq_t, xq_st, tq, v)
        assert damping_from_reactances(x, xq_t, xq_st, tq * 1.5, v) > base
        assert damping_from_reactances(x, xq_t, xq_st, tq, v * 1.5) > base
        assert damping_from_reactances(x + 0.2, xq_t, xq_st, tq, v) < base


class TestEnergyBookkeeping:
    def test_undamped_machine_conserves_first_integral(self):
        # machine on a stiff bus: P_elec = (E V / X) sin(delta); the first
        # integral 0.5*M*omega^2 - P_mech*delta + (E V / X)(1 - cos delta)
        # must drift less than 0.1% of its swing amplitude per second at the
        # default 1 ms step
        m, p_mech, k = 6.0, 0.8, 2.0
        params = SgParams(m=m, d=0.0, p_mech=p_mech)
        delta_eq = math.asin(p_mech / k)

        def energy(s):
            return 0.5 * m * s.omega ** 2 - p_mech * s.delta + k * (1 - math.cos(s.delta))

        state = SgState(delta=delta_eq + 0.4, omega=0.0)
        dt = 1e-3
        e0 = energy(state)
        energies = [e0]
        for _ in range(2000):
            d, w = state.delta, state.omega
            k1 = swing_derivatives(SgState(d, w), params, k * math.sin(d))
            k2 = swing_derivatives(SgState(d + 0.5 * dt * k1[0], w + 0.5 * dt * k1[1]),
                                   params, k * math.sin(d + 0.5 * dt * k1[0]))
            k3 = swing_derivatives(SgState(d + 0.5 * dt * k2[0], w + 0.5 * dt * k2[1]),
                                   params, k * math.sin(d + 0.5 * dt * k2[0]))
            k4 = swing_derivatives(SgState(d + dt * k3[0], w + dt * k3[1]),
                                   params, k * math.sin(d + dt * k3[0]))
            state = SgState(
                d + dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                w + dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]))
            energies.append(energy(state))
        # scale: energy of the swing above the bottom of the well
        scale = e0 - energy(SgState(delta_eq, 0.0))
        assert scale > 0
        drift = max(abs(e - e0) for e in energies)
        assert drift < 1e-3 * scale * 2.0  # 2 simulated seconds


class TestLossOfSynchronism:
    def test_pair_beyond_pi_flags(self):
        assert loss_of_synchronism([0.0, 3.2])
        assert not loss_of_synchronism([0.0, 3.1])

    def test_singleton_never_flags(self):
        assert not loss_of_synchronism([5.0])
        assert not loss_of_synchronism([])

    def test_spread_is_pairwise_max(self):
        assert loss_of_synchronism([-2.0, 0.0, 1.5])
        assert not loss_of_synchronism([-1.0, 0.0, 1.0])
