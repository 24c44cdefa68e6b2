import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mildspde.convolution import (ConvolutionQuadrature, WeightedForcing, analytic_second_moment,
                                  beta_function, convolution_bound_check,
                                  deterministic_convolution, ito_isometry_check, phi1,
                                  stochastic_convolution_sample)
from mildspde.errors import ConvergenceError, InputError
from mildspde.holder import Trajectory, graded_grid, weighted_holder_norm
from mildspde.noise import NoiseModel, sample_wiener_increments
from mildspde.spectral import semigroup_bound_constant

from conftest import op_from

# e^{-1} sum_n 1/(n! (n + 0.3)), evaluated at 40 digits
SERIES_ORACLE_BETA_03 = 1.6120380208750622033


def ones_forcing(beta, dim=1):
    return WeightedForcing(beta, lambda t: np.ones((np.size(t), dim)), dim)


def test_beta_function_examples():
    assert beta_function(1, 1) == pytest.approx(1.0, rel=1e-15)
    assert beta_function(2, 3) == pytest.approx(1.0 / 12.0, rel=1e-14)
    assert beta_function(0.5, 0.5) == pytest.approx(np.pi, rel=1e-14)
    with pytest.raises(InputError):
        beta_function(0.0, 1.0)


def test_phi1_small_argument():
    x = np.array([0.0, 1e-12, 1e-3, 1.0, 50.0])
    ref = np.array([1.0, 1.0 - 5e-13, -np.expm1(-1e-3) / 1e-3, 1 - np.exp(-1.0), 1 / 50.0])
    np.testing.assert_allclose(phi1(x), ref, rtol=1e-14)


class TestDeterministic:
    def test_zero_forcing(self):
        op = op_from([1.0, 3.0])
        out = deterministic_convolution(op, WeightedForcing.zero(2), 0.0, np.linspace(0, 1, 5))
        assert np.all(out.values == 0.0)

    def test_tiny_eigenvalue_constant_forcing(self):
        op = op_from([1e-8])
        t = np.linspace(0, 1, 6)
        out = deterministic_convolution(op, WeightedForcing.constant([2.0]), 0.0, t)
        np.testing.assert_allclose(out.values[:, 0], 2.0 * t, rtol=1e-7)

    def test_singular_forcing_series_oracle(self):
        op = op_from([1.0])
        out = deterministic_convolution(op, ones_forcing(0.3), 0.0, np.array([0.0, 1.0]))
        assert out.values[-1, 0] == pytest.approx(SERIES_ORACLE_BETA_03, rel=1e-8)

    def test_refined_quadrature_agrees(self, example1):
        t = graded_grid(0.5, 40)
        base = deterministic_convolution(example1.operator, example1.F2, 0.0, t)
        fine = deterministic_convolution(example1.operator, example1.F2, 0.0, t,
                                         ConvolutionQuadrature(nodes_per_step=64))
        np.testing.assert_allclose(base.values, fine.values, rtol=0, atol=1e-8 * np.abs(fine.values).max())

    def test_underresolved_quadrature_is_reported(self):
        op = op_from([1.0])
        rough = WeightedForcing(1.0, lambda t: np.abs(np.sin(40 * t))[:, None] ** 0.5, 1)
        with pytest.raises(ConvergenceError):
            deterministic_convolution(op, rough, 0.0, np.array([0.0, 1.0]),
                                      ConvolutionQuadrature(nodes_per_step=4))

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_linearity(self, a, b):
        op = op_from([1.0, 5.0])
        F = ones_forcing(0.2, 2)
        G = WeightedForcing(0.2, lambda t: np.stack([t, t ** 2], axis=-1), 2)
        t = np.linspace(0, 1, 5)
        lhs = deterministic_convolution(op, F.scaled(a).plus(G.scaled(b)), 0.0, t).values
        rhs = (a * deterministic_convolution(op, F, 0.0, t).values
               + b * deterministic_convolution(op, G, 0.0, t).values)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-12)

    def test_trajectory_input_with_beta(self):
        op = op_from([2.0])
        t = graded_grid(1.0, 64)
        F = Trajectory(t, np.ones((65, 1)))
        out = deterministic_convolution(op, F, 0.0, beta=1.0)
        np.testing.assert_allclose(out.values[:, 0], -np.expm1(-2 * t) / 2, rtol=1e-10, atol=1e-15)
        with pytest.raises(InputError):
            deterministic_convolution(op, F, 0.0)

    def test_bad_theta(self):
        with pytest.raises(InputError):
            deterministic_convolution(op_from([1.0]), ones_forcing(0.2), 1.0, [0.0, 1.0])


@pytest.mark.parametrize("theta", [0.0, 0.2, 0.25])
def test_forcing_convolution_bound_has_slack(example1, theta):
    v = np.zeros(8)
    v[1] = 1.0
    r = convolution_bound_check(example1.operator, v, 0.2, 0.1, theta, graded_grid(1.0, 128))
    assert np.all(r.slack >= 0)
    assert r.value[0] == 0.0


def test_convolution_bound_closed_form():
    # one mode, F2 = t^{beta-1}: the norm of F2 is 1 and the bound is B(beta, 1) t^beta = t^beta/beta
    op = op_from([1.0])
    r = convolution_bound_check(op, [1.0], 0.3, 0.1, 0.0, np.array([0.0, 1.0]), F2_norm=1.0)
    assert r.bound[-1] == pytest.approx(1.0 / 0.3, rel=1e-6)
    assert r.value[-1] == pytest.approx(SERIES_ORACLE_BETA_03, rel=1e-8)


# sup over x in (0,1) of (x^0.1 - x^0.8) / (1 - x)^0.1: the Hoelder part of the norm of t^{-0.7}
PURE_POWER_SEMINORM = 0.6536790250942511


def test_forcing_norm_of_pure_power():
    F = ones_forcing(0.3)
    rep = weighted_holder_norm(F.trajectory(graded_grid(1.0, 256)), 0.3, 0.1)
    assert rep.sup_component == pytest.approx(1.0, rel=1e-14)
    assert rep.holder_component == pytest.approx(PURE_POWER_SEMINORM, rel=1e-8)
    r = convolution_bound_check(op_from([1.0]), [1.0], 0.3, 0.1, 0.0, graded_grid(1.0, 256))
    assert r.bound[-1] == pytest.approx((1.0 + PURE_POWER_SEMINORM) / 0.3, rel=1e-8)


class TestStochastic:
    def test_zero_coupling(self):
        op = op_from([1.0, 2.0])
        s = stochastic_convolution_sample(op, NoiseModel.zero(2), np.linspace(0, 1, 5), 3, 0)
        assert np.all(s.paths == 0.0)

    def test_ou_variance_closed_form(self):
        op = op_from([1.0])
        model = NoiseModel.constant([[1.0]])
        grid = np.linspace(0, 1, 11)
        m = analytic_second_moment(op, model, grid, 0.0)
        assert m[-1] == pytest.approx((1 - np.exp(-2.0)) / 2, rel=1e-14)
        assert m[-1] == pytest.approx(0.432332358381693654, rel=1e-14)
        # small-time slope g^2
        small = analytic_second_moment(op, model, np.array([0.0, 1e-6]), 0.0)
        assert small[-1] / 1e-6 == pytest.approx(1.0, rel=1e-5)

    def test_tiny_eigenvalue_branch(self):
        op = op_from([1e-13])
        model = NoiseModel.constant([[3.0]])
        m = analytic_second_moment(op, model, np.array([0.0, 0.5]), 0.0)
        assert m[-1] == pytest.approx(9.0 * 0.5, rel=1e-10)
        s = stochastic_convolution_sample(op, model, np.array([0.0, 0.5]), 20000, 4)
        assert s.paths[:, -1, 0].var() == pytest.approx(4.5, rel=0.05)

    def test_single_step_variance_within_standard_errors(self):
        op = op_from([1.0, 4.0])
        model = NoiseModel.constant(np.ones((2, 1)))
        grid = np.array([0.0, 0.1])
        s = stochastic_convolution_sample(op, model, grid, 100000, 9)
        x = s.paths[:, -1, 0] ** 2
        exact = (1 - np.exp(-0.2)) / 2
        assert abs(x.mean() - exact) <= 4 * x.std(ddof=1) / np.sqrt(x.size)

    def test_joint_law_with_increments(self):
        # W_G and W are coupled: Cov(W_G(h), W(h)) = g h phi1(lambda h) on one step
        op = op_from([2.0])
        model = NoiseModel.constant([[1.0]])
        grid = np.array([0.0, 0.5])
        s = stochastic_convolution_sample(op, model, grid, 100000, 13)
        w = s.increments.increments[:, 0, 0]
        c = np.mean(s.paths[:, -1, 0] * w)
        exact = 0.5 * phi1(1.0)
        se = np.std(s.paths[:, -1, 0] * w, ddof=1) / np.sqrt(w.size)
        assert abs(c - exact) <= 4 * se

    def test_pathwise_linearity_with_shared_increments(self):
        op = op_from([1.0, 3.0])
        a = NoiseModel.constant([[1.0], [0.5]])
        b = NoiseModel.constant([[0.0], [2.0]])
        grid = np.linspace(0, 1, 9)
        inc = sample_wiener_increments(1, grid, 4, 21)
        sa = stochastic_convolution_sample(op, a, grid, 4, 21, inc)
        sb = stochastic_convolution_sample(op, b, grid, 4, 21, inc)
        sab = stochastic_convolution_sample(op, a.plus(b), grid, 4, 21, inc)
        np.testing.assert_allclose(sab.paths, sa.paths + sb.paths, rtol=1e-12, atol=1e-14)

    def test_reproducible(self):
        op = op_from([1.0, 3.0])
        model = NoiseModel.constant([[1.0], [0.5]])
        grid = np.linspace(0, 1, 9)
        a = stochastic_convolution_sample(op, model, grid, 5, 77)
        b = stochastic_convolution_sample(op, model, grid, 5, 77)
        assert np.array_equal(a.paths, b.paths)

    def test_mismatched_increments_rejected(self):
        op = op_from([1.0])
        model = NoiseModel.constant([[1.0]])
        inc = sample_wiener_increments(1, np.linspace(0, 1, 5), 3, 0)
        with pytest.raises(InputError):
            stochastic_convolution_sample(op, model, np.linspace(0, 1, 6), 3, 0, inc)


class TestItoIsometry:
    def test_zero_coupling_all_zero(self):
        op = op_from([1.0])
        r = ito_isometry_check(op, NoiseModel.zero(1), 0.0, np.linspace(0, 1, 5), 10, 0)
        assert np.all(r.mc_second_moment == 0) and np.all(r.analytic_second_moment == 0)
        assert np.all(r.bound == 0) and np.all(r.z_scores == 0)

    def test_single_mode_slack_value(self):
        op = op_from([1.0])
        r = ito_isometry_check(op, NoiseModel.constant([[1.0]]), 0.0, np.linspace(0, 1, 11), 100, 0)
        assert r.bound[-1] == pytest.approx(1.0)
        assert r.slack[-1] == pytest.approx(1 - 0.432332358381693654, rel=1e-12)

    def test_theta_half_rejected(self):
        with pytest.raises(InputError):
            ito_isometry_check(op_from([1.0]), NoiseModel.zero(1), 0.5, [0.0, 1.0], 10, 0)

    @pytest.mark.parametrize("theta", [0.0, 0.2, 0.4])
    def test_bound_dominates_exact_moment(self, example1, theta):
        grid = np.linspace(0, 1, 41)
        m = analytic_second_moment(example1.operator, example1.noise, grid, theta)
        G = 2 ** 0.5
        bound = semigroup_bound_constant(theta) ** 2 * grid ** (1 - 2 * theta) * G ** 2 / (1 - 2 * theta)
        assert np.all(bound - m >= 0)

    def test_csv_columns(self, tmp_path):
        op = op_from([1.0])
        r = ito_isometry_check(op, NoiseModel.constant([[1.0]]), 0.0, np.linspace(0, 1, 3), 10, 0)
        r.write_csv(tmp_path / "ito.csv", {"tag": "x"})
        header = next(csv.reader(open(tmp_path / "ito.csv")))
        assert header == ["time", "theta", "mc_second_moment", "analytic_second_moment",
                          "paper_bound", "standard_error", "tag"]
