import csv
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predpower.errors import DimensionMismatch, NonInvertible
from predpower.lqr import (LTVSystem, optimal_action,
                           optimal_feedforward, prediction_power_closed_form,
                           riccati_backward, surrogate_actions_batch,
                           surrogate_optimal_action)
from predpower.predictors import AffineGaussian, sample_dataset
from predpower.presets import THETA_MIXED, double_integrator, scalar_unit
from predpower.rollout import QuadraticCostSpec, certainty_equivalent_plan

GOLDEN = (1 + np.sqrt(5)) / 2

DATA = os.path.join(os.path.dirname(__file__), "data")


def fixed_point_by_iteration():
    # independent oracle: iterate the scalar recursion to its fixed point
    P = 1.0
    for _ in range(200):
        P_next = 1.0 + P - P ** 2 / (1.0 + P)
        if abs(P_next - P) < 1e-12:
            break
        P = P_next
    return P_next


class TestRiccati:
    def test_scalar_fixed_point(self, scalar_system, scalar_riccati):
        P_star = fixed_point_by_iteration()
        assert abs(P_star - GOLDEN) < 1e-11
        assert np.allclose(scalar_riccati.P[:, 0, 0], P_star, atol=1e-11)
        assert np.allclose(scalar_riccati.K[:, 0, 0], GOLDEN - 1, atol=1e-11)

    def test_no_control_authority(self):
        sysm = LTVSystem(T=4, A=0.5 * np.eye(2), B=np.zeros((2, 1)), Q=np.eye(2),
                         R=np.eye(1), P_T=np.eye(2), x0=np.zeros(2))
        rc = riccati_backward(sysm)
        assert np.allclose(rc.K, 0.0)
        expected = np.eye(2)
        for t in range(3, -1, -1):
            expected = np.eye(2) + 0.25 * expected
            assert np.allclose(rc.P[t], expected)

    def test_double_integrator_golden_file(self):
        sysm = double_integrator(T=20)
        rc = riccati_backward(sysm)
        with open(os.path.join(DATA, "riccati_double_integrator_T20.csv")) as fh:
            rows = list(csv.DictReader(fh))
        for row in rows:
            t = int(row["t"])
            P = np.array([[float(row["P_0_0"]), float(row["P_0_1"])],
                          [float(row["P_1_0"]), float(row["P_1_1"])]])
            assert np.allclose(rc.P[t], P, atol=1e-12)
            if t < 20:
                K = np.array([[float(row["K_0_0"]), float(row["K_0_1"])]])
                assert np.allclose(rc.K[t], K, atol=1e-12)

    def test_monotone_convergence_from_any_pd_terminal(self):
        for A, B in [(np.array([[1.0]]), np.array([[1.0]])),
                     (np.array([[1.0, 0.1], [0.0, 1.0]]), np.array([[0.0], [0.1]]))]:
            n = A.shape[0]
            sysm = LTVSystem(T=60, A=A, B=B, Q=np.eye(n), R=np.eye(1),
                             P_T=5.0 * np.eye(n), x0=np.zeros(n))
            rc = riccati_backward(sysm)
            # step k of the backward iteration produces P_{T-k}; the update
            # norms must shrink monotonically past a short burn-in
            per_iter = [np.linalg.norm(rc.P[60 - k] - rc.P[60 - k - 1])
                        for k in range(60)]
            assert all(b <= a + 1e-13 for a, b in zip(per_iter[5:], per_iter[6:]))
            assert per_iter[-1] < 1e-2 * max(per_iter)

    def test_noninvertible(self):
        sysm = LTVSystem(T=2, A=np.eye(1), B=np.zeros((1, 1)), Q=np.eye(1),
                         R=np.zeros((1, 1)), P_T=np.eye(1), x0=np.zeros(1),
                         allow_semidefinite_r=True)
        with pytest.raises(NonInvertible):
            riccati_backward(sysm)

    def test_dimension_validation(self):
        with pytest.raises(DimensionMismatch):
            LTVSystem(T=2, A=np.eye(2), B=np.zeros((2, 1)), Q=np.eye(3),
                      R=np.eye(1), P_T=np.eye(2), x0=np.zeros(2))
        with pytest.raises(DimensionMismatch):
            LTVSystem(T=2, A=np.eye(2), B=np.zeros((2, 1)), Q=-np.eye(2),
                      R=np.eye(1), P_T=np.eye(2), x0=np.zeros(2))


class TestPhiTable:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_semigroup(self, seed):
        rng = np.random.default_rng(seed)
        T, n, m = 7, 2, 1
        A = np.stack([0.8 * rng.standard_normal((n, n)) for _ in range(T)])
        B = np.stack([rng.standard_normal((n, m)) for _ in range(T)])
        Q = np.stack([np.eye(n) for _ in range(T)])
        R = np.stack([np.eye(m) for _ in range(T)])
        sysm = LTVSystem(T=T, A=A, B=B, Q=Q, R=R, P_T=np.eye(n), x0=np.zeros(n))
        rc = riccati_backward(sysm)
        for t1 in range(T + 1):
            for t2 in range(t1, T + 1):
                for t3 in range(t2, T + 1):
                    lhs = rc.Phi(t3, t1)
                    rhs = rc.Phi(t3, t2) @ rc.Phi(t2, t1)
                    assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_identity_at_equal_times(self, di_riccati):
        assert np.array_equal(di_riccati.Phi(5, 5), np.eye(2))


class TestFeedforward:
    def test_zero_means(self, di_system, di_riccati):
        u = optimal_feedforward(di_riccati, di_system, 3, np.zeros((5, 2)))
        assert np.allclose(u, 0.0)
        u = optimal_feedforward(di_riccati, di_system, 3, [])
        assert np.allclose(u, 0.0)

    def test_scalar_last_step(self, scalar_system, scalar_riccati):
        u = optimal_feedforward(scalar_riccati, scalar_system, 5, [[1.0]])
        assert abs(u[0] - (-GOLDEN / (1 + GOLDEN))) < 1e-12
        assert abs(u[0] + 0.618034) < 1e-6

    def test_double_integrator_one_step(self, di_system, di_riccati):
        t = di_system.T - 1
        w = np.array([1.0, 0.0])
        u = optimal_feedforward(di_riccati, di_system, t, [w])
        direct = -(di_riccati.Minv[t] @ di_system.B[t].T @ di_riccati.P[t + 1] @ w)
        assert np.allclose(u, direct, atol=1e-14)
        # cross-check against the planner on the same conditional means
        plan = certainty_equivalent_plan(QuadraticCostSpec(di_system), di_system,
                                         t, np.zeros(2), [w], tol=1e-10)
        assert np.allclose(u, plan[0], atol=1e-8)

    def test_window_too_long_rejected(self, di_system, di_riccati):
        with pytest.raises(DimensionMismatch):
            optimal_feedforward(di_riccati, di_system, di_system.T - 1,
                                np.ones((2, 2)))


class TestOptimalAction:
    def test_reduces_to_feedback(self, di_system, di_riccati):
        x = np.array([1.0, -2.0])
        u = optimal_action(di_riccati, di_system, 4, x, [])
        assert np.allclose(u, -(di_riccati.K[4] @ x))

    def test_zero_state_equals_feedforward(self, di_system, di_riccati):
        means = 0.3 * np.ones((4, 2))
        ua = optimal_action(di_riccati, di_system, 2, np.zeros(2), means)
        ff = optimal_feedforward(di_riccati, di_system, 2, means)
        assert np.allclose(ua, ff)

    def test_matches_planner_first_entry(self, di_riccati):
        sysm = double_integrator(T=14)
        rc = riccati_backward(sysm)
        rng = np.random.default_rng(2)
        for t in (0, 6, 13):
            x = rng.standard_normal(2)
            means = 0.5 * rng.standard_normal((14 - t, 2))
            ua = optimal_action(rc, sysm, t, x, means)
            plan = certainty_equivalent_plan(QuadraticCostSpec(sysm), sysm, t, x,
                                             means, tol=1e-10)
            assert np.max(np.abs(ua - plan[0])) < 1e-8


class TestSurrogateAction:
    def test_zero_disturbances(self, di_system, di_riccati):
        u = surrogate_optimal_action(di_riccati, di_system, 0,
                                     np.zeros((di_system.T, 2)))
        assert np.allclose(u, 0.0)

    def test_definitional_match_with_feedforward(self, di_system, di_riccati):
        rng = np.random.default_rng(8)
        w = rng.standard_normal((7, 2))
        a = surrogate_optimal_action(di_riccati, di_system, 20, w)
        b = optimal_feedforward(di_riccati, di_system, 20, w)
        assert np.array_equal(a, b)

    def test_scalar_two_step_hand_value(self, scalar_system, scalar_riccati):
        # -(1/(1+P)) (P + F P), F = 1 - K; independent arithmetic
        P = GOLDEN
        F = 1.0 - (GOLDEN - 1.0)
        expected = -(P + F * P) / (1.0 + P)
        u = surrogate_optimal_action(scalar_riccati, scalar_system, 4,
                                     [[1.0], [1.0]])
        assert abs(u[0] - expected) < 1e-12
        assert abs(u[0] + 0.854102) < 1e-6

    def test_batch_matches_single(self, di_system, di_riccati):
        model = AffineGaussian(T=di_system.T, rho=0.5, theta=np.eye(2))
        ds = sample_dataset(model, 5, master_seed=3)
        U = surrogate_actions_batch(di_riccati, di_system, ds.W)
        for i in range(5):
            for t in (0, 37, 99):
                u = surrogate_optimal_action(di_riccati, di_system, t,
                                             ds.W[i, t:])
                assert np.allclose(U[i, t], u, atol=1e-10)


class TestClosedFormPower:
    def test_rho_zero_is_zero(self, di_system, di_riccati):
        model = AffineGaussian(T=100, rho=0.0, theta=np.eye(2))
        assert prediction_power_closed_form(di_system, di_riccati, model) == 0.0

    def test_time_invariant_formula(self, di_system, di_riccati):
        # both sides computed independently: the generic conditional-
        # covariance path vs rho^2 T Tr(theta' theta P H P)
        for theta in (np.eye(2), THETA_MIXED):
            model = AffineGaussian(T=100, rho=0.5, theta=theta)
            generic = prediction_power_closed_form(di_system, di_riccati, model)
            P, H = di_riccati.P[0], di_riccati.H[0]
            formula = 0.25 * 100 * np.trace(theta.T @ theta @ P @ H @ P)
            assert abs(generic - formula) / formula < 1e-12

    def test_unsupported_predictor(self, di_system, di_riccati):
        from predpower.errors import UnsupportedPredictor

        class Opaque:
            pass

        with pytest.raises(UnsupportedPredictor):
            prediction_power_closed_form(di_system, di_riccati, Opaque())

    @settings(max_examples=20, deadline=None)
    @given(rho=st.floats(min_value=0.0, max_value=0.707),
           seed=st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_nonnegative(self, di_system, di_riccati, rho, seed):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((2, 2))
        top = np.linalg.eigvalsh(raw @ raw.T)[-1]
        theta = raw / np.sqrt(2.0 * top)    # theta theta' <= I/2
        model = AffineGaussian(T=100, rho=rho, theta=theta)
        assert prediction_power_closed_form(di_system, di_riccati, model) >= 0.0


class TestQuadraticGrowthIdentity:
    def test_nested_mc_matches_quadratic_form(self):
        # E[Q_t(x,u) - C_t(x) | history] = (u - pi)' M_t (u - pi), checked
        # by paired nested Monte Carlo on a T=3 scalar instance
        from predpower.bounds import LQRCheckProblem
        from predpower.predictors import derive_rng

        sysm = scalar_unit(T=3)
        rc = riccati_backward(sysm)
        model = AffineGaussian(T=3, rho=0.5, theta=np.array([[np.sqrt(0.5)]]))
        prob = LQRCheckProblem(sysm, rc, model)
        rng = derive_rng(123, 0)
        history = prob.sample_history(1, rng)
        insts = [model.sample_completion(history, rng) for _ in range(8000)]
        W = np.stack([i.W for i in insts])
        V = np.stack([i.V for i in insts])
        x = 0.7
        pi = prob.policy_action(1, x, history)
        for off in (-1.0, 0.8):
            diffs = prob.q_batch(1, x, pi + off, W, V) - prob.q_batch(1, x, pi, W, V)
            est = diffs.mean()
            se = diffs.std(ddof=1) / np.sqrt(len(diffs))
            expected = rc.M[1][0, 0] * off ** 2
            assert abs(est - expected) <= 3 * max(se, 1e-12)
