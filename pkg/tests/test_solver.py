import numpy as np
import pytest
from hypothesis import given, strategies as st

from mildspde.convolution import WeightedForcing
from mildspde.errors import ConvergenceError, EstimateViolation, InputError
from mildspde.holder import ExponentSet
from mildspde.noise import NoiseModel
from mildspde.problems import build_linear_instance, linear_closed_form
from mildspde.solver import (InitialCondition, Nonlinearity, SolverConfig, _condition_margins,
                             choose_T_loc, contraction_constant, empirical_lipschitz,
                             mild_residual, prepare_context, solve_mild, validate_exponents,
                             xi_norm)

from conftest import op_from

EXPS = ExponentSet(0.25, 0.2, 0.1)


@pytest.mark.parametrize("exps, n_bad", [
    (ExponentSet(0.25, 0.2, 0.1), 0),
    (ExponentSet(0.5, 0.2, 0.1), 2),    # also beta <= 2 eta - 1/2
    (ExponentSet(0.25, 0.3, 0.1), 1),
    (ExponentSet(0.45, 0.35, 0.1), 1),   # beta must exceed 2 eta - 1/2 = 0.4
    (ExponentSet(0.25, 0.2, 0.2), 1),
    (ExponentSet(0.25, 0.2, 0.1, gamma=0.2), 1),  # gamma_max = 0.1
    (ExponentSet(0.25, 0.2, 0.1, rho=0.8), 1),    # rho < 1 - eta = 0.75
])
def test_validate_exponents(exps, n_bad):
    assert len(validate_exponents(exps)) == n_bad


class TestLipschitz:
    def test_linear(self):
        op = op_from([1.0, 4.0, 9.0])
        est = empirical_lipschitz(Nonlinearity.linear(-0.7), op, 0.25, 500, 1)
        assert 0.0 < est <= 0.7 + 1e-12

    def test_constant_map(self):
        op = op_from([1.0, 4.0])
        F = Nonlinearity(lambda x: np.ones_like(x), 0.0)
        assert empirical_lipschitz(F, op, 0.25, 200, 0) == 0.0

    def test_example1_below_declared(self, example1):
        est = empirical_lipschitz(example1.F1, example1.operator, 0.25, 2000, 0)
        assert est <= example1.F1.lipschitz

    def test_bad_count(self):
        with pytest.raises(InputError):
            empirical_lipschitz(Nonlinearity.zero(), op_from([1.0]), 0.2, 0, 0)


class TestTloc:
    def test_trivial_data_reaches_horizon(self):
        ins = build_linear_instance(op_from([1.0, 2.0]), 0.0, horizon=3.0)
        r = choose_T_loc(ins)
        assert r.T_loc == 3.0
        assert r.binding == "horizon"

    def test_monotone_in_noise(self):
        op = op_from([1.0, 2.0])
        prev = np.inf
        for g in (0.1, 0.5, 1.0, 3.0):
            ins = build_linear_instance(op, 0.5, noise=NoiseModel.constant([[g], [0.0]]),
                                        xi=InitialCondition.deterministic([1.0, 0.0]))
            T = choose_T_loc(ins).T_loc
            assert T <= prev
            prev = T

    def test_kappa_above_twice_constants(self, example1):
        r = choose_T_loc(example1)
        assert r.kappa_sq == pytest.approx(2.02 * max(r.C1, r.C2), rel=1e-14)
        with pytest.raises(InputError):
            choose_T_loc(example1, kappa_policy=2.0 * max(r.C1, r.C2))

    def test_example1_scan(self, example1):
        # independent check: the first failing point of a 10^6-point scan sits at T_loc
        r = choose_T_loc(example1)
        S = np.linspace(0.0, example1.horizon, 1_000_001)[1:]
        m = _condition_margins(S, r.kappa_sq, example1.exponents, r.inputs)
        ok = (m["moment_eta"] >= 0) & (m["moment_beta"] >= 0) & (m["contraction"] > 0)
        first_bad = S[np.argmin(ok)]
        assert ok[S <= r.T_loc].all()
        assert abs(first_bad - r.T_loc) <= S[1] - S[0]
        margins = r.conditions(r.T_loc, example1.exponents)
        assert min(margins.values()) >= 0.0

    def test_inadmissible_refused(self, example1):
        bad = example1.replace(exponents=ExponentSet(0.25, 0.3, 0.1))
        with pytest.raises(InputError):
            choose_T_loc(bad)


def test_contraction_constant():
    assert contraction_constant(0.0, EXPS, 1.0) == 0.0
    vals = [contraction_constant(1.5, EXPS, S) for S in (0.01, 0.1, 1.0, 2.0)]
    assert np.all(np.diff(vals) > 0)


@given(st.floats(0.0, 3.0), st.floats(0.01, 2.0))
def test_contraction_scales_quadratically_in_c(c, S):
    assert contraction_constant(2 * c, EXPS, S) == pytest.approx(4 * contraction_constant(c, EXPS, S),
                                                                 rel=1e-12, abs=1e-300)


def linear_noisy():
    op = op_from([1.0, 4.0])
    return build_linear_instance(op, 0.5, noise=NoiseModel.constant([[0.5], [0.3]]),
                                 xi=InitialCondition.gaussian([1.0, -0.5], [0.2, 0.1]))


class TestPicard:
    def test_converges_and_ratio_below_bound(self, example1):
        cfg = SolverConfig(n_steps=64, n_realizations=200, seed=5)
        sol = solve_mild(example1, cfg)
        assert sol.iterations < cfg.picard_max_iters
        assert sol.observed_ratio <= sol.tloc.contraction_factor
        assert sol.ball.ok
        assert mild_residual(sol, example1) <= 1e-5 * xi_norm(sol.paths, example1.operator, 0.25, 0.2,
                                                                sol.times).value

    def test_unique_from_two_starts(self, example1):
        cfg = SolverConfig(n_steps=32, n_realizations=50, seed=2, picard_tol=1e-12)
        a = solve_mild(example1, cfg)
        b = solve_mild(example1, cfg, context=a.context, start=5.0 * np.ones_like(a.paths))
        assert xi_norm(a.paths - b.paths, example1.operator, 0.25, 0.2, a.times).value < 1e-9

    def test_non_convergence_reported(self, example1):
        cfg = SolverConfig(n_steps=16, n_realizations=10, seed=0, picard_tol=1e-14, picard_max_iters=2)
        with pytest.raises(ConvergenceError):
            solve_mild(example1, cfg)

    def test_horizon_beyond_tloc_refused(self, example1):
        with pytest.raises(InputError):
            solve_mild(example1, SolverConfig(n_steps=8, n_realizations=2, horizon=1.0))

    def test_ball_violation_reported(self, example1):
        r = choose_T_loc(example1)
        r.kappa_sq = 1e-6
        with pytest.raises(EstimateViolation):
            solve_mild(example1, SolverConfig(n_steps=8, n_realizations=20), tloc=r)

    def test_deterministic_seed(self, example1):
        cfg = SolverConfig(n_steps=16, n_realizations=20, seed=11)
        assert np.array_equal(solve_mild(example1, cfg).paths, solve_mild(example1, cfg).paths)

    def test_realization_blocks_are_consistent(self, example1):
        # realization r uses the same noise whether drawn alone or within a batch
        t = np.linspace(0, 0.05, 9)
        full = prepare_context(example1, t, 6, 4)
        tail = prepare_context(example1, t, 2, 4, first_realization=4)
        np.testing.assert_array_equal(full.free[4:], tail.free)


class TestLinearOracle:
    def test_noise_free_first_order(self):
        op = op_from([1.0, 4.0])
        ins = build_linear_instance(op, 0.5, xi=InitialCondition.deterministic([1.0, -0.5]))
        r = choose_T_loc(ins)
        errs = []
        for n in (32, 64, 128, 256):
            sol = solve_mild(ins, SolverConfig(n_steps=n, n_realizations=1, picard_tol=1e-13), tloc=r)
            m, _ = linear_closed_form(op, 0.5, [1.0, -0.5], [0, 0], [0, 0], sol.times)
            errs.append(np.abs(sol.paths[0] - m).max())
        orders = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(np.abs(orders - 1.0) < 0.05)
        assert errs[-1] < 1e-4

    def test_mean_and_variance(self):
        ins = linear_noisy()
        op = ins.operator
        r = choose_T_loc(ins)
        R = 4000
        sol = solve_mild(ins, SolverConfig(n_steps=256, n_realizations=R, seed=3), tloc=r)
        m, v = linear_closed_form(op, 0.5, [1.0, -0.5], [0.04, 0.01], [0.25, 0.09], sol.times)
        X = sol.paths
        z_mean = (X.mean(0) - m)[1:] / np.sqrt(v[1:] / R)
        z_var = (X.var(0, ddof=1) - v)[1:] / (v[1:] * np.sqrt(2.0 / (R - 1)))
        # time discretization error is O(dt) ~ 1e-3, well inside the Monte Carlo noise here
        assert np.abs(z_mean).max() < 4.5
        assert np.abs(z_var).max() < 4.5


def test_initial_condition_sampling():
    xi = InitialCondition.gaussian([1.0, 2.0], [0.0, 0.5])
    s = xi.sample(0, np.arange(20000))
    assert np.all(s[:, 0] == 1.0)
    assert s[:, 1].std() == pytest.approx(0.5, rel=0.03)
    with pytest.raises(InputError):
        InitialCondition.gaussian([1.0], [-1.0])


def test_forcing_norm_cached(example1):
    ins = example1.replace(F2_norm=3.0)
    assert ins.forcing_norm() == 3.0
    with pytest.raises(InputError):
        example1.replace(F2=WeightedForcing.zero(3))
