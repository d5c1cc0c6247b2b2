"""Small-signal analysis tests: closed-form matrices, roots, certificates."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridforge.stability import (
    LinearizationPoint, check_stability, characteristic_roots_b,
    evaluate_shifted_functions, exact_jacobian, finite_difference_jacobian,
    frozen_gradient_rhs, linearized_a, off_diagonal_b, united_rhs,
)
from gridforge.vsg import VsgParams


def unit_params(**kw):
    base = dict(tau_omega=1.0, tau_gamma=1.0, c_alpha=1.0, c_theta=1.0,
                c_omega=1.0, p_ref=0.8, p_max=1.0, p_min=0.0)
    base.update(kw)
    return VsgParams(**base)


def point(omega0=0.0, theta0=0.0, gamma0=0.0, t0=0.0, f_ref0=0.0,
          grad_f_ref0=1.0, grad_f_max0=1.0):
    return LinearizationPoint(omega0, theta0, gamma0, t0, f_ref0,
                              grad_f_ref0, grad_f_max0)


class TestShiftedFunctions:
    def test_subtraction(self):
        f_ref, f_max = evaluate_shifted_functions(
            lambda th, t: 1.2, 0.8, 1.0, 0.0, 0.0)
        assert (f_ref, f_max) == pytest.approx((0.4, 0.2))

    def test_degenerate_limits_coincide(self):
        f_ref, f_max = evaluate_shifted_functions(
            lambda th, t: 0.7, 1.0, 1.0, 0.0, 0.0)
        assert f_ref == f_max

    def test_boundary_is_stationary_condition(self):
        _, f_max = evaluate_shifted_functions(
            lambda th, t: 1.0, 0.8, 1.0, 0.0, 0.0)
        assert f_max == 0.0

    @given(f=st.floats(-2, 2), p_ref=st.floats(-1, 1), gap=st.floats(0, 1))
    def test_ordering(self, f, p_ref, gap):
        f_ref, f_max = evaluate_shifted_functions(
            lambda th, t: f, p_ref, p_ref + gap, 0.0, 0.0)
        assert f_ref >= f_max


class TestLinearizedA:
    def test_unit_point_gamma_zero(self):
        a = linearized_a(point(f_ref0=0.5), unit_params())
        assert np.allclose(a, [[-1, 0, -1.5], [1, 0, -1], [0, 0, -2]])

    def test_gamma_zero_kills_middle_column_couplings(self):
        a = linearized_a(point(f_ref0=0.3, grad_f_ref0=2.0, grad_f_max0=3.0),
                         unit_params())
        assert a[0, 1] == 0.0
        assert a[2, 1] == 0.0

    def test_unit_point_gamma_one(self):
        a = linearized_a(point(gamma0=1.0), unit_params())
        assert np.allclose(a, [[-1, -1, -1], [1, 0, -1], [0, 1, -2]])

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            point(gamma0=-0.1)


class TestOffDiagonalB:
    def test_zeroed_diagonal_of_unit_point(self):
        b = off_diagonal_b(point(gamma0=1.0), unit_params())
        assert np.allclose(b, [[0, -1, -1], [1, 0, -1], [0, 1, 0]])

    def test_gamma_zero_zeroes_lower_coupling(self):
        b = off_diagonal_b(point(grad_f_max0=7.0), unit_params())
        assert b[2, 1] == 0.0

    @settings(max_examples=100)
    @given(
        tw=st.floats(0.05, 2), tg=st.floats(0.05, 2), ct=st.floats(0.1, 3),
        cw=st.floats(0.1, 3), g0=st.floats(0, 2), fr=st.floats(-1, 1),
        dfr=st.floats(0, 5), dfm=st.floats(0, 5),
    )
    def test_decomposition_identity(self, tw, tg, ct, cw, g0, fr, dfr, dfm):
        params = unit_params(tau_omega=tw, tau_gamma=tg, c_theta=ct, c_omega=cw)
        pt = point(gamma0=g0, f_ref0=fr, grad_f_ref0=dfr, grad_f_max0=dfm)
        a = linearized_a(pt, params)
        b = off_diagonal_b(pt, params)
        diag = a - b
        expected = np.diag([-1.0 / tw, 0.0, -(1.0 + ct * dfm) / tg])
        assert np.allclose(diag, expected, atol=0)
        # diagonal part is negative semi-definite
        assert np.all(np.diag(diag) <= 0)


class TestCharacteristicRootsB:
    def test_unit_point(self):
        roots = characteristic_roots_b(point(gamma0=1.0), unit_params())
        assert roots[0] == 0
        assert roots[1] == pytest.approx(1j * math.sqrt(2))
        assert roots[2] == pytest.approx(-1j * math.sqrt(2))

    def test_triple_root_at_gamma_zero(self):
        assert characteristic_roots_b(point(), unit_params()) == (0, 0, 0)

    def test_direct_substitution(self):
        params = unit_params(tau_omega=2.0, tau_gamma=0.5)
        roots = characteristic_roots_b(point(gamma0=1.0), params)
        assert roots[1] == pytest.approx(1j * math.sqrt(2.5))

    def test_negative_gradient_rejected(self):
        with pytest.raises(ValueError):
            characteristic_roots_b(point(grad_f_ref0=-1.0), unit_params())

    @settings(max_examples=200)
    @given(
        tw=st.floats(0.01, 5), tg=st.floats(0.01, 5), ct=st.floats(0.01, 5),
        cw=st.floats(0.01, 5), g0=st.floats(0, 3), dfr=st.floats(0, 10),
        dfm=st.floats(0, 10),
    )
    def test_real_parts_exactly_zero(self, tw, tg, ct, cw, g0, dfr, dfm):
        params = unit_params(tau_omega=tw, tau_gamma=tg, c_theta=ct, c_omega=cw)
        pt = point(gamma0=g0, grad_f_ref0=dfr, grad_f_max0=dfm)
        for r in characteristic_roots_b(pt, params):
            assert r.real == 0.0


class TestCheckStability:
    def test_unit_point_certified(self):
        report = check_stability(point(gamma0=1.0), unit_params())
        assert report.det_a == pytest.approx(-4.0)
        assert report.stable
        assert np.max(report.eigenvalues.real) < 0

    def test_gamma_zero_point_singular(self):
        report = check_stability(point(f_ref0=0.0), unit_params())
        assert abs(report.det_a) < 1e-12
        assert not report.stable

    @settings(max_examples=1000, deadline=None)
    @given(
        tw=st.floats(0.01, 5), tg=st.floats(0.01, 5), ct=st.floats(0.01, 5),
        cw=st.floats(0.01, 5), g0=st.floats(1e-6, 3), fr=st.floats(-1, 1),
        dfr=st.floats(1e-6, 10), dfm=st.floats(1e-6, 10),
    )
    def test_fuzz_report_always_produced(self, tw, tg, ct, cw, g0, fr, dfr, dfm):
        params = unit_params(tau_omega=tw, tau_gamma=tg, c_theta=ct, c_omega=cw)
        pt = point(gamma0=g0, f_ref0=fr, grad_f_ref0=dfr, grad_f_max0=dfm)
        report = check_stability(pt, params)
        assert np.all(np.isfinite(report.matrix))
        assert report.eigenvalues.shape == (3,)
        assert isinstance(report.stable, bool)


class TestFiniteDifferenceJacobian:
    def test_exact_for_linear_maps(self):
        a = np.array([[1.0, 2.0, -3.0], [0.5, -1.0, 4.0], [2.0, 0.0, 1.0]])
        jac = finite_difference_jacobian(lambda x: a @ np.asarray(x), [0.3, -0.2, 0.7])
        assert np.allclose(jac, a, atol=1e-8)

    def test_matches_exact_jacobian_of_united_system(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            params = unit_params(
                tau_omega=rng.uniform(0.05, 1), tau_gamma=rng.uniform(0.05, 1),
                c_alpha=rng.uniform(0.5, 10), c_theta=rng.uniform(0.1, 2),
                c_omega=rng.uniform(0.5, 8))
            pt = point(
                omega0=rng.uniform(-0.5, 0.5), theta0=rng.uniform(-1, 1),
                gamma0=rng.uniform(0, 1), f_ref0=rng.uniform(-0.5, 0.5),
                grad_f_ref0=rng.uniform(0.1, 5), grad_f_max0=rng.uniform(0.1, 5))
            # the tangent-model oracle needs both gradients equal (one scalar
            # function drives both shifted values)
            pt = LinearizationPoint(pt.omega0, pt.theta0, pt.gamma0, pt.t0,
                                    pt.f_ref0, pt.grad_f_ref0, pt.grad_f_ref0)
            rhs = frozen_gradient_rhs(pt, params)
            x0 = [pt.omega0, pt.theta0, pt.gamma0]
            fd = finite_difference_jacobian(rhs, x0)
            exact = exact_jacobian(pt, params)
            err = np.linalg.norm(fd - exact) / np.linalg.norm(exact)
            assert err < 1e-5

    def test_second_order_convergence(self):
        rhs = united_rhs(unit_params(c_alpha=3.0), lambda th, t: math.sin(th) + 1.0)
        x0 = [0.1, 0.4, 0.2]
        exact_limit = finite_difference_jacobian(rhs, x0, h=1e-7)
        e1 = np.linalg.norm(finite_difference_jacobian(rhs, x0, h=1e-3) - exact_limit)
        e2 = np.linalg.norm(finite_difference_jacobian(rhs, x0, h=5e-4) - exact_limit)
        assert e2 < e1 / 3.0  # ~4x reduction for halved step

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValueError):
            finite_difference_jacobian(lambda x: x, [0, 0, 0], h=0.0)

    def test_nonfinite_dynamics_rejected(self):
        with pytest.raises(ValueError):
            finite_difference_jacobian(
                lambda x: [math.nan, 0.0, 0.0], [0.0, 0.0, 0.0])

    def test_closed_form_matrix_deviates_from_numeric_jacobian(self):
        # the displayed closed-form matrix and the true Jacobian of the united
        # dynamics disagree in entries (0,1), (0,2), (2,1) whenever
        # c_alpha != c_theta at gamma0 > 0; the finite-difference oracle sides
        # with the analytic Jacobian
        params = unit_params(c_alpha=10.0, c_theta=0.5)
        pt = point(gamma0=0.4, f_ref0=0.2, grad_f_ref0=2.0, grad_f_max0=2.0)
        fd = finite_difference_jacobian(
            frozen_gradient_rhs(pt, params), [pt.omega0, pt.theta0, pt.gamma0])
        closed = linearized_a(pt, params)
        exact = exact_jacobian(pt, params)
        assert np.allclose(fd, exact, atol=1e-6)
        assert abs(closed[0, 1] - exact[0, 1]) > 1e-3
        assert abs(closed[0, 2] - exact[0, 2]) > 1e-3
        # rows 1 agree everywhere; only the three documented entries differ
        mask = ~np.isclose(closed, exact, atol=1e-12)
        assert set(zip(*np.nonzero(mask))) <= {(0, 1), (0, 2), (2, 1)}


class TestStationaryBasin:
    def test_small_perturbations_return_to_stationary_manifold(self):
        # stationary point: omega = gamma = 0, f at exactly P_max; perturbing
        # by 1e-3 and integrating the united system settles power back to the
        # limit with gamma -> 0
        params = unit_params(tau_omega=0.25, tau_gamma=0.1, c_alpha=10.0,
                             c_theta=0.5, c_omega=6.0)
        k = 2.0
        theta_star = math.asin(params.p_max / k)
        rhs = united_rhs(params, lambda th, t: k * math.sin(th))
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = np.array([0.0, theta_star, 0.0]) + rng.uniform(-1e-3, 1e-3, 3)
            x[2] = abs(x[2])
            dt = 1e-3
            for _ in range(8000):
                k1 = np.array(rhs(x))
                k2 = np.array(rhs(x + 0.5 * dt * k1))
                k3 = np.array(rhs(x + 0.5 * dt * k2))
                k4 = np.array(rhs(x + dt * k3))
                x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            omega, theta, gamma = x
            p_out = k * math.sin(theta - params.c_theta * gamma)
            assert abs(omega) < 1e-4
            assert abs(gamma) < 1e-4
            assert abs(p_out - params.p_max) < 1e-3
