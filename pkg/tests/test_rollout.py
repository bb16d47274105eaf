from fractions import Fraction

import numpy as np
import pytest

from predpower.errors import DimensionMismatch, InformationLeak, NoConvergence
from predpower.lqr import riccati_backward
from predpower.predictors import (AffineGaussian, Baseline, BinaryPerfect,
                                  ProblemInstance, sample_dataset, sample_instance)
from predpower.presets import THETA_MIXED, double_integrator, scalar_unit
from predpower.rollout import (LinearPredictive, NoPredictionLQR, OptimalPredictive,
                               Planner, QuadraticCostSpec, certainty_equivalent_plan,
                               monte_carlo_cost, mpc_counterexample,
                               prediction_power_mc, rollout_costs_batch, run_policy)

GOLDEN = (1 + np.sqrt(5)) / 2


class _ZeroNoise:
    """Degenerate model: deterministic zero disturbances and predictions."""

    def __init__(self, T, n=2, d=0):
        self.T, self.n, self.d = T, n, d
        self.model_id = "zero-noise"
        self.max_lookahead = 0

    def sample(self, rng):
        return ProblemInstance(W=np.zeros((self.T, self.n)),
                               V=np.zeros((self.T, self.d)),
                               predictor_id=self.model_id)

    def cond_means_future(self, history):
        return np.zeros((0, self.n))

    def cond_means_future_batch(self, t, batch):
        return np.zeros((batch.count, 0, self.n))


class TestRunPolicy:
    def test_zero_noise_from_origin(self, di_system, di_riccati):
        inst = _ZeroNoise(di_system.T).sample(None)
        traj = run_policy(di_system, NoPredictionLQR(di_riccati), inst)
        assert traj.total_cost == 0.0
        assert np.allclose(traj.X, 0.0) and np.allclose(traj.U, 0.0)

    def test_scalar_one_step_hand_value(self):
        sysm = scalar_unit(T=1)
        rc = riccati_backward(sysm)
        inst = ProblemInstance(W=np.array([[1.0]]), V=np.zeros((1, 0)),
                               predictor_id="manual")
        traj = run_policy(sysm, NoPredictionLQR(rc), inst)
        assert traj.U[0, 0] == 0.0
        assert abs(traj.total_cost - GOLDEN) < 1e-12
        assert abs(traj.stage_costs[1] - GOLDEN) < 1e-12

    def test_binary_perfect_cancels_disturbances(self, binary_system, binary_riccati):
        model = BinaryPerfect(T=binary_system.T)
        inst = sample_instance(model, seed=5)
        traj = run_policy(binary_system, OptimalPredictive(binary_riccati,
                                                           binary_system, model), inst)
        assert np.allclose(traj.X[1:], 0.0)
        assert traj.total_cost == 0.0
        assert np.allclose(traj.U[:, 0], -inst.W[:, 0])

    def test_dynamics_replay_exact(self, di_system, di_riccati, di_model):
        inst = sample_instance(di_model, seed=9)
        traj = run_policy(di_system, OptimalPredictive(di_riccati, di_system,
                                                       di_model), inst)
        for t in range(di_system.T):
            xn = di_system.A[t] @ traj.X[t] + di_system.B[t] @ traj.U[t] + inst.W[t]
            assert np.array_equal(traj.X[t + 1], xn) or np.allclose(traj.X[t + 1], xn)
        assert traj.total_cost == pytest.approx(traj.stage_costs.sum())

    def test_bit_identical_replay(self, di_system, di_riccati, di_model):
        inst = sample_instance(di_model, seed=10)
        pol = OptimalPredictive(di_riccati, di_system, di_model)
        t1 = run_policy(di_system, pol, inst)
        t2 = run_policy(di_system, pol, inst)
        assert np.array_equal(t1.X, t2.X)
        assert np.array_equal(t1.U, t2.U)
        assert t1.total_cost == t2.total_cost

    def test_information_leak_probe(self, di_system, di_riccati, di_model):
        inst = sample_instance(di_model, seed=2)

        class ProbeW:
            def action(self, t, x, history):
                history.w(t + 1)
                return np.zeros(1)

        class ProbeV:
            def action(self, t, x, history):
                history.v(t + 1)
                return np.zeros(1)

        for probe in (ProbeW(), ProbeV()):
            with pytest.raises(InformationLeak):
                run_policy(di_system, probe, inst)


class TestBatchRollout:
    def test_matches_per_instance(self, di_system, di_riccati):
        for model in (AffineGaussian(T=100, rho=0.5, theta=THETA_MIXED),
                      Baseline(T=100, n=2)):
            ds = sample_dataset(model, 6, master_seed=4)
            for pol in (NoPredictionLQR(di_riccati),
                        OptimalPredictive(di_riccati, di_system, model),
                        LinearPredictive(di_riccati,
                                         np.zeros((1, model.d)))):
                batch = rollout_costs_batch(di_system, pol, ds.W, ds.V)
                loop = [run_policy(di_system, pol, ds.instance(i)).total_cost
                        for i in range(6)]
                assert np.allclose(batch, loop, rtol=1e-12, atol=1e-9)

    def test_linear_predictive_uses_current_prediction(self, di_system, di_riccati):
        model = AffineGaussian(T=100, rho=0.5, theta=np.eye(2))
        inst = sample_instance(model, seed=12)
        ups = np.array([[0.3, -0.2]])
        pol = LinearPredictive(di_riccati, ups)
        traj = run_policy(di_system, pol, inst)
        t = 11
        expected = -(di_riccati.K[t] @ traj.X[t]) + ups @ inst.V[t]
        assert np.allclose(traj.U[t], expected)


class TestMonteCarlo:
    def test_zero_noise_zero_se(self, di_system, di_riccati):
        rep = monte_carlo_cost(di_system, NoPredictionLQR(di_riccati),
                               _ZeroNoise(di_system.T), count=16, seed=0)
        assert rep.mean_cost == 0.0 and rep.std_error == 0.0

    def test_binary_means(self, binary_system, binary_riccati):
        model = BinaryPerfect(T=binary_system.T)
        base = monte_carlo_cost(binary_system, NoPredictionLQR(binary_riccati),
                                model, count=200, seed=3)
        pred = monte_carlo_cost(binary_system,
                                OptimalPredictive(binary_riccati, binary_system,
                                                  model), model, count=200, seed=3)
        assert base.mean_cost == pytest.approx(binary_system.T)
        assert base.std_error == 0.0
        assert pred.mean_cost == 0.0

    def test_count_validation(self, di_system, di_riccati):
        with pytest.raises(DimensionMismatch):
            monte_carlo_cost(di_system, NoPredictionLQR(di_riccati),
                             _ZeroNoise(di_system.T), count=1, seed=0)


class TestPredictionPowerMC:
    def test_baseline_vs_baseline_zero(self, di_system, di_riccati):
        res = prediction_power_mc(di_system, Baseline(T=100, n=2), count=64,
                                  seed=5, riccati=di_riccati)
        assert res.estimate == 0.0 and res.std_error == 0.0

    def test_binary_exact(self, binary_system, binary_riccati):
        res = prediction_power_mc(binary_system, BinaryPerfect(T=10), count=128,
                                  seed=6, riccati=binary_riccati)
        assert res.estimate == 10.0
        assert res.std_error == 0.0

    def test_paired_variance_smaller_than_unpaired(self, di_system, di_riccati,
                                                   di_model):
        ds = sample_dataset(di_model, 500, master_seed=8)
        base = rollout_costs_batch(di_system, NoPredictionLQR(di_riccati),
                                   ds.W, ds.V)
        pred = rollout_costs_batch(
            di_system, OptimalPredictive(di_riccati, di_system, di_model),
            ds.W, ds.V)
        assert np.var(base - pred, ddof=1) < np.var(base, ddof=1) + np.var(pred, ddof=1)

    def test_cost_separation_across_rho(self):
        # informative predictions cut the realized cost, and the mixed map
        # (higher closed-form power here) cuts it further
        T = 60
        sysm = double_integrator(T)
        rc = riccati_backward(sysm)
        costs = {}
        for rho in (0.0, 0.3, 0.7):
            model = AffineGaussian(T=T, rho=rho, theta=np.eye(2))
            ds = sample_dataset(model, 800, master_seed=11)
            pol = OptimalPredictive(rc, sysm, model)
            costs[rho] = rollout_costs_batch(sysm, pol, ds.W, ds.V).mean()
        assert costs[0.7] < costs[0.3] < costs[0.0]
        mixed = AffineGaussian(T=T, rho=0.7, theta=THETA_MIXED)
        ds = sample_dataset(mixed, 800, master_seed=11)
        cost_mixed = rollout_costs_batch(
            sysm, OptimalPredictive(rc, sysm, mixed), ds.W, ds.V).mean()
        assert cost_mixed < costs[0.7]


class TestPlanner:
    def test_zero_plan_for_zero_inputs(self, di_system):
        plan = certainty_equivalent_plan(QuadraticCostSpec(di_system), di_system,
                                         0, np.zeros(2), [], tol=1e-11)
        assert np.max(np.abs(plan)) < 1e-10

    def test_binary_costs_plan_cancels_disturbances(self, binary_system):
        w = np.array([[1.0], [-1.0], [1.0], [1.0], [-1.0],
                      [1.0], [-1.0], [-1.0], [1.0], [-1.0]])
        plan = certainty_equivalent_plan(QuadraticCostSpec(binary_system),
                                         binary_system, 0, np.zeros(1), w,
                                         tol=1e-10)
        assert np.max(np.abs(plan + w)) < 1e-8

    def test_planner_policy_equals_optimal_predictive(self):
        T = 10
        sysm = double_integrator(T)
        rc = riccati_backward(sysm)
        model = AffineGaussian(T=T, rho=0.5, theta=np.eye(2))
        inst = sample_instance(model, seed=13)
        t_opt = run_policy(sysm, OptimalPredictive(rc, sysm, model), inst)
        t_plan = run_policy(sysm, Planner(QuadraticCostSpec(sysm), sysm, model),
                            inst)
        assert np.max(np.abs(t_opt.U - t_plan.U)) < 1e-7

    def test_no_convergence_reported(self, di_system):
        with pytest.raises(NoConvergence):
            certainty_equivalent_plan(QuadraticCostSpec(di_system), di_system, 0,
                                      np.ones(2), [], tol=1e-10, max_iter=3)


class TestMpcCounterexample:
    def test_exact_values_at_p_01(self):
        r = mpc_counterexample(Fraction(1, 10))
        assert r["mpc_cost"] == Fraction(19, 60)
        assert r["alternative_cost"] == Fraction(1, 10)
        assert r["optimal_threshold"] == Fraction(2, 9)
        assert r["mpc_plan_u0"] == Fraction(-1, 3)
        assert r["mpc_suboptimal"]
        assert float(r["mpc_cost"]) == pytest.approx(0.31666, abs=1e-4)

    def test_closed_form_over_grid(self):
        for k in range(1, 100):
            p = Fraction(k, 100)
            r = mpc_counterexample(p)
            assert r["mpc_cost"] == (5 + 7 * p) / 18
            assert r["alternative_cost"] == p
            assert r["mpc_cost"] >= Fraction(2, 9)
            if p < Fraction(2, 9):
                assert r["alternative_cost"] < r["mpc_cost"]

    def test_threshold_semantics_near_one(self):
        # above the threshold both values are reported without asserting
        # suboptimality; at p -> 1 the waiting policy loses
        r = mpc_counterexample(Fraction(99, 100))
        assert r["alternative_cost"] > r["optimal_threshold"]
        assert not r["mpc_suboptimal"]

    def test_domain_validation(self):
        with pytest.raises(DimensionMismatch):
            mpc_counterexample(Fraction(0))
        with pytest.raises(DimensionMismatch):
            mpc_counterexample(Fraction(1))
