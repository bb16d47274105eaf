"""Trajectory simulation and Monte-Carlo evaluation of predictive policies.

Policies receive only the observable history (never future rows); the
History/BatchHistory accessors raise InformationLeak on any attempt to
read a disturbance or prediction that is not yet measurable.  Monte-Carlo
power estimates pair the baseline and predictive policies on identical
sampled instances (common random numbers) and difference per-instance
costs before averaging.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InformationLeak
from .lqr import LTVSystem, RiccatiSolution, optimal_feedforward, riccati_backward
from .optim import minimize_smooth_convex
from .predictors import History, InstanceDataset, ProblemInstance, sample_dataset


# ---------------------------------------------------------------------------
# Trajectories and cost reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    X: np.ndarray            # (T+1, n)
    U: np.ndarray            # (T, m)
    stage_costs: np.ndarray  # (T+1,): T stage costs then the terminal cost
    total_cost: float


@dataclass(frozen=True)
class CostReport:
    mean_cost: float
    std_error: float
    count: int
    per_trajectory: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PowerMCResult:
    estimate: float
    std_error: float
    baseline: CostReport
    predictive: CostReport


class BatchHistory:
    """Causal view over a stacked dataset at a fixed time t."""

    def __init__(self, t: int, W: np.ndarray, V: np.ndarray):
        self.t = t
        self._W = W
        self._V = V

    @property
    def count(self) -> int:
        return self._W.shape[0]

    def w_col(self, tau: int) -> np.ndarray:
        if tau >= self.t:
            raise InformationLeak(
                f"W_{tau} is not observable at time {self.t}")
        return self._W[:, tau]

    def v_col(self, tau: int) -> np.ndarray:
        if tau > self.t:
            raise InformationLeak(
                f"V_{tau} is not observable at time {self.t}")
        return self._V[:, tau]

    def obs_matrix(self, t: int) -> np.ndarray:
        if t > self.t:
            raise InformationLeak("cannot widen the observation window")
        N = self._W.shape[0]
        return np.concatenate([self._W[:, :t].reshape(N, -1),
                               self._V[:, :t + 1].reshape(N, -1)], axis=1)


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

class NoPredictionLQR:
    """Optimal policy for the uninformative baseline: u = -K_t x."""

    def __init__(self, riccati: RiccatiSolution):
        self.riccati = riccati

    def action(self, t: int, x: np.ndarray, history: History) -> np.ndarray:
        return -(self.riccati.K[t] @ x)

    def action_batch(self, t: int, X: np.ndarray, batch: BatchHistory) -> np.ndarray:
        return -(X @ self.riccati.K[t].T)


class OptimalPredictive:
    """Optimal predictive policy -K_t x + feedforward on conditional means."""

    def __init__(self, riccati: RiccatiSolution, system: LTVSystem, model):
        if model.n != system.n:
            raise DimensionMismatch(
                f"model disturbance dim {model.n} != system dim {system.n}")
        self.riccati = riccati
        self.system = system
        self.model = model
        self._ff_maps: dict[int, list[np.ndarray]] = {}

    def action(self, t: int, x: np.ndarray, history: History) -> np.ndarray:
        means = self.model.cond_means_future(history)
        ff = optimal_feedforward(self.riccati, self.system, t, means)
        return -(self.riccati.K[t] @ x) + ff

    def _maps_at(self, t: int) -> list[np.ndarray]:
        """Feedforward maps L_{t,t+j} = M^{-1}B' Phi_{t+j+1,t+1}' P_{t+j+1}."""
        maps = self._ff_maps.get(t)
        if maps is None:
            rc, sysm = self.riccati, self.system
            hi = min(t + self.model.max_lookahead, sysm.T)
            maps = []
            for tau in range(t, hi):
                phi = rc.Phi(tau + 1, t + 1)
                maps.append(rc.Minv[t] @ sysm.B[t].T @ phi.T @ rc.P[tau + 1])
            self._ff_maps[t] = maps
        return maps

    def action_batch(self, t: int, X: np.ndarray, batch: BatchHistory) -> np.ndarray:
        means_fn = getattr(self.model, "cond_means_future_batch", None)
        if means_fn is None:
            raise DimensionMismatch(
                f"{type(self.model).__name__} has no batch conditional means")
        means = means_fn(t, batch)                       # (N, L_eff, n)
        u = -(X @ self.riccati.K[t].T)
        for j, L in enumerate(self._maps_at(t)):
            if j >= means.shape[1]:
                break
            u -= means[:, j] @ L.T
        return u


class LinearPredictive:
    """u = -K_t x + Upsilon v_t with a fixed or per-step prediction map."""

    def __init__(self, riccati: RiccatiSolution, Upsilon: np.ndarray):
        self.riccati = riccati
        ups = np.asarray(Upsilon, dtype=float)
        self.Upsilon = ups

    def _ups(self, t: int) -> np.ndarray:
        return self.Upsilon[t] if self.Upsilon.ndim == 3 else self.Upsilon

    def action(self, t: int, x: np.ndarray, history: History) -> np.ndarray:
        return -(self.riccati.K[t] @ x) + self._ups(t) @ history.v(t)

    def action_batch(self, t: int, X: np.ndarray, batch: BatchHistory) -> np.ndarray:
        return -(X @ self.riccati.K[t].T) + batch.v_col(t) @ self._ups(t).T


class Planner:
    """Certainty-equivalent planner: re-plan against conditional means each
    step and commit the first planned action."""

    def __init__(self, cost_spec, system: LTVSystem, model,
                 grad_tol: float = 1e-10):
        self.cost_spec = cost_spec
        self.system = system
        self.model = model
        self.grad_tol = grad_tol

    def action(self, t: int, x: np.ndarray, history: History) -> np.ndarray:
        means = self.model.cond_means_future(history)
        plan = certainty_equivalent_plan(self.cost_spec, self.system, t, x,
                                         means, tol=self.grad_tol)
        return plan[0]


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------

def run_policy(system: LTVSystem, policy, instance: ProblemInstance) -> Trajectory:
    """Simulate one trajectory; dynamics are replayed exactly from the
    instance's disturbances, actions depend only on History views."""
    T, n, m = system.T, system.n, system.m
    if instance.W.shape != (T, n):
        raise DimensionMismatch(
            f"instance W has shape {instance.W.shape}, expected {(T, n)}")
    X = np.empty((T + 1, n))
    U = np.empty((T, m))
    stage = np.empty(T + 1)
    X[0] = system.x0
    for t in range(T):
        history = instance.history(t)
        u = np.asarray(policy.action(t, X[t], history), dtype=float).ravel()
        if u.shape != (m,):
            raise DimensionMismatch(f"policy returned shape {u.shape}, expected ({m},)")
        U[t] = u
        stage[t] = X[t] @ system.Q[t] @ X[t] + u @ system.R[t] @ u
        X[t + 1] = system.A[t] @ X[t] + system.B[t] @ u + instance.W[t]
    stage[T] = X[T] @ system.P_T @ X[T]
    return Trajectory(X=X, U=U, stage_costs=stage, total_cost=float(stage.sum()))


def rollout_costs_batch(system: LTVSystem, policy, W: np.ndarray, V: np.ndarray,
                        t_start: int = 0, x_start: Optional[np.ndarray] = None,
                        u_first: Optional[np.ndarray] = None) -> np.ndarray:
    """Total costs for a batch of instances using the policy's batch action.

    Starting mid-horizon with a forced first action evaluates the realized
    remaining cost Q_{t_start}(x_start, u_first) under the policy.
    """
    N, T, n = W.shape
    if x_start is None:
        X = np.broadcast_to(system.x0, (N, n)).copy()
    else:
        X = np.broadcast_to(np.asarray(x_start, dtype=float), (N, n)).copy()
    totals = np.zeros(N)
    for t in range(t_start, T):
        if t == t_start and u_first is not None:
            U = np.broadcast_to(np.asarray(u_first, dtype=float), (N, system.m))
        else:
            batch = BatchHistory(t, W, V)
            U = policy.action_batch(t, X, batch)
        totals += np.einsum("ni,ij,nj->n", X, system.Q[t], X)
        totals += np.einsum("ni,ij,nj->n", U, system.R[t], U)
        X = X @ system.A[t].T + U @ system.B[t].T + W[:, t]
    totals += np.einsum("ni,ij,nj->n", X, system.P_T, X)
    return totals


def _policy_costs(system: LTVSystem, policy, dataset: InstanceDataset) -> np.ndarray:
    if hasattr(policy, "action_batch"):
        return rollout_costs_batch(system, policy, dataset.W, dataset.V)
    return np.array([run_policy(system, policy, dataset.instance(i)).total_cost
                     for i in range(dataset.count)])


def monte_carlo_cost(system: LTVSystem, policy, model, count: int, seed: int,
                     keep_costs: bool = False) -> CostReport:
    """Mean/standard-error of the total cost over independent instances."""
    if count < 2:
        raise DimensionMismatch("count must be >= 2")
    dataset = sample_dataset(model, count, seed)
    costs = _policy_costs(system, policy, dataset)
    se = float(np.std(costs, ddof=1) / np.sqrt(count))
    return CostReport(mean_cost=float(costs.mean()), std_error=se, count=count,
                      per_trajectory=costs if keep_costs else None)


def prediction_power_mc(system: LTVSystem, model, count: int, seed: int,
                        riccati: Optional[RiccatiSolution] = None) -> PowerMCResult:
    """J*(0) - J*(theta) by paired rollouts on common sampled instances."""
    if count < 2:
        raise DimensionMismatch("count must be >= 2")
    rc = riccati if riccati is not None else riccati_backward(system)
    dataset = sample_dataset(model, count, seed)
    base_costs = _policy_costs(system, NoPredictionLQR(rc), dataset)
    pred_costs = _policy_costs(system, OptimalPredictive(rc, system, model), dataset)
    diffs = base_costs - pred_costs
    se = float(np.std(diffs, ddof=1) / np.sqrt(count))
    mk_report = lambda c: CostReport(mean_cost=float(c.mean()),
                                     std_error=float(np.std(c, ddof=1) / np.sqrt(count)),
                                     count=count)
    return PowerMCResult(estimate=float(diffs.mean()), std_error=se,
                         baseline=mk_report(base_costs),
                         predictive=mk_report(pred_costs))


# ---------------------------------------------------------------------------
# Certainty-equivalent planning (deterministic finite-horizon optimization)
# ---------------------------------------------------------------------------

class QuadraticCostSpec:
    """Per-step costs of an LTVSystem as differentiable value/grad pairs."""

    def __init__(self, system: LTVSystem):
        self.system = system

    def stage_x(self, t: int, x: np.ndarray):
        Qx = self.system.Q[t] @ x
        return float(x @ Qx), 2.0 * Qx

    def stage_u(self, t: int, u: np.ndarray):
        Ru = self.system.R[t] @ u
        return float(u @ Ru), 2.0 * Ru

    def terminal(self, x: np.ndarray):
        Px = self.system.P_T @ x
        return float(x @ Px), 2.0 * Px


def certainty_equivalent_plan(cost_spec, system: LTVSystem, t: int,
                              x: np.ndarray, means, tol: float = 1e-9,
                              max_iter: int = 100000) -> np.ndarray:
    """Minimize the deterministic plan-ahead objective by gradient descent.

    Plans over u_{t:T-1} against the supplied disturbance means (trailing
    zeros may be omitted); converges to gradient norm <= tol with Armijo
    backtracking, raising NoConvergence past max_iter.  Returns the full
    planned action sequence.
    """
    T, n, m = system.T, system.n, system.m
    L = T - t
    x = np.asarray(x, dtype=float).ravel()
    means_arr = np.zeros((L, n))
    given = np.asarray(means, dtype=float).reshape(-1, n) if np.size(means) else np.zeros((0, n))
    if given.shape[0] > L:
        raise DimensionMismatch(f"got {given.shape[0]} means, at most {L} allowed")
    means_arr[:given.shape[0]] = given

    def objective_and_grad(U):
        xs = np.empty((L + 1, n))
        xs[0] = x
        val = 0.0
        gx = np.empty((L, n))
        gu = np.empty((L, m))
        for j in range(L):
            vx, gvx = cost_spec.stage_x(t + j, xs[j])
            vu, gvu = cost_spec.stage_u(t + j, U[j])
            val += vx + vu
            gx[j] = gvx
            gu[j] = gvu
            xs[j + 1] = system.A[t + j] @ xs[j] + system.B[t + j] @ U[j] + means_arr[j]
        vT, lam = cost_spec.terminal(xs[L])
        val += vT
        grad = np.empty((L, m))
        for j in range(L - 1, -1, -1):
            grad[j] = gu[j] + system.B[t + j].T @ lam
            lam = gx[j] + system.A[t + j].T @ lam
        return val, grad

    def flat_val_grad(u_flat):
        val, grad = objective_and_grad(u_flat.reshape(L, m))
        return val, grad.ravel()

    _, u_flat = minimize_smooth_convex(flat_val_grad, np.zeros(L * m), tol=tol,
                                       max_iter=max_iter)
    return u_flat.reshape(L, m)


# ---------------------------------------------------------------------------
# Exact MPC suboptimality counterexample
# ---------------------------------------------------------------------------

def _min_quadratic_with_cap(a: Fraction, b: Fraction, cap: Fraction) -> Fraction:
    """argmin of a*u^2 + b*u subject to u <= cap (a > 0), exact."""
    unconstrained = -b / (2 * a)
    return unconstrained if unconstrained <= cap else cap


def mpc_counterexample(p) -> dict:
    """Exact expected costs of certainty-equivalent MPC vs a waiting policy.

    Two-step scalar problem: x1 = x0 + u0, x2 = x1 + u1 + w1 with stage
    costs x^2 + u^2 and a terminal cost that is x^2 for x <= 0 and +inf
    otherwise; w1 is 1 with probability p, else 0, and is revealed exactly
    at time 1.  MPC commits u0 from a time-0 plan whose u1 must be feasible
    for both disturbance branches (a hard x2 <= 0 constraint); the
    alternative policy plays u0 = 0 and reacts to the revealed w1.

    All arithmetic is exact over rationals.  Returns both expected costs
    and the 2/9 threshold below which MPC is certifiably suboptimal.
    """
    p = p if isinstance(p, Fraction) else Fraction(str(p))
    if not (0 < p < 1):
        raise DimensionMismatch(f"p must be inside (0, 1), got {p}")

    # Time-0 plan: minimize 2 u0^2 + u1^2 + E[h2(u0+u1+W1)] with the sum
    # s = u0 + u1 forced to satisfy s + 1 <= 0 (feasibility under w1 = 1).
    # The unconstrained stationary sum -3p/5 always violates s <= -1, so
    # the plan sits on the boundary: minimize 2 u0^2 + (-1 - u0)^2.
    s_unconstrained = Fraction(-3) * p / 5
    assert s_unconstrained > -1
    u0_plan = _min_quadratic_with_cap(Fraction(3), Fraction(2), Fraction(10 ** 9))
    # derivative of 2u0^2 + (1+u0)^2 is 6u0 + 2  ->  u0 = -1/3
    assert u0_plan == Fraction(-1, 3)

    def replan_cost(x1: Fraction, w: Fraction) -> Fraction:
        """Optimal time-1 cost x1^2 + u1^2 + (x1+u1+w)^2 with x2 <= 0."""
        cap = -x1 - w
        u1 = _min_quadratic_with_cap(Fraction(2), 2 * (x1 + w), cap)
        x2 = x1 + u1 + w
        return x1 * x1 + u1 * u1 + x2 * x2

    def expected_cost(u0: Fraction) -> Fraction:
        x1 = u0
        return (u0 * u0 + (1 - p) * replan_cost(x1, Fraction(0))
                + p * replan_cost(x1, Fraction(1)))

    mpc_cost = expected_cost(u0_plan)
    alternative_cost = expected_cost(Fraction(0))
    threshold = Fraction(2, 9)
    assert mpc_cost >= threshold
    return {
        "p": p,
        "mpc_cost": mpc_cost,
        "alternative_cost": alternative_cost,
        "optimal_threshold": threshold,
        "mpc_plan_u0": u0_plan,
        "mpc_suboptimal": alternative_cost < mpc_cost,
    }
