"""Online policy optimization over linear predictive policy classes.

The candidate class is u_t = -K x_t + Upsilon_t v_t with the LQR gain K
held fixed and the prediction map Upsilon tuned online by a
single-trajectory policy gradient: a forward sensitivity state
S_t = dx_t/dUpsilon is propagated through the closed-loop Jacobian and the
per-step stage cost is differentiated through both the action and the
state.  A no-prediction rollout on the identical disturbance sequence
provides the paired improvement series.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, Divergence, NoConvergence, UnsupportedPredictor
from .lqr import LTVSystem
from .predictors import AffineGaussian, Baseline, ShiftedAffineGaussian, derive_rng


@dataclass(frozen=True)
class PolicyClassSpec:
    """Fixed feedback gain plus a tunable prediction map of a given shape.

    The learning rate schedule is eta_t = lr_base * (1 + t/c)^(-beta).  The
    base factor tempers the raw stage-cost gradient of this sensitivity
    variant; unit scale overshoots the stability threshold of the
    average-cost curvature and diverges within a few steps.
    """

    K: np.ndarray
    d: int
    Upsilon0: Optional[np.ndarray] = None
    lr_base: float = 0.3
    lr_c: float = 1000.0
    lr_beta: float = 0.5
    update_every: int = 100
    divergence_bound: float = 1e4

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", K)
        ups0 = self.Upsilon0
        ups0 = np.zeros((K.shape[0], self.d)) if ups0 is None \
            else np.asarray(ups0, dtype=float)
        if ups0.shape != (K.shape[0], self.d):
            raise DimensionMismatch(
                f"Upsilon0 must have shape {(K.shape[0], self.d)}, got {ups0.shape}")
        object.__setattr__(self, "Upsilon0", ups0)

    @property
    def m(self) -> int:
        return self.K.shape[0]


@dataclass(frozen=True)
class OnlineRunRecord:
    times: np.ndarray
    cumulative_cost: np.ndarray
    baseline_cumulative_cost: np.ndarray
    improvement: np.ndarray          # (baseline - tuned) / (t+1) at recorded times
    upsilon_times: np.ndarray
    upsilons: np.ndarray             # (len(upsilon_times), m, d)
    final_upsilon: np.ndarray
    seed: int


def _require_time_invariant(system: LTVSystem):
    for name in ("A", "B", "Q", "R"):
        arr = getattr(system, name)
        if not (arr.base is not None and arr.strides[0] == 0) and \
                not all(np.array_equal(arr[0], arr[t]) for t in range(system.T)):
            raise DimensionMismatch(f"online optimization expects time-invariant {name}")
    return system.A[0], system.B[0], system.Q[0], system.R[0]


def _sensor_decomposition(model):
    """(C0, C1, noise_cov) with v_t = C0 w_t + C1 w_{t+1} + noise."""
    if isinstance(model, Baseline):
        return (np.zeros((0, model.n)), np.zeros((0, model.n)), np.zeros((0, 0)))
    if isinstance(model, AffineGaussian):
        C0 = model.rho * model.theta
        C1 = np.zeros_like(C0)
        noise = np.eye(model.d) - model.rho ** 2 * model.theta @ model.theta.T
        return C0, C1, noise
    if isinstance(model, ShiftedAffineGaussian):
        inner = model.inner
        C1 = inner.rho * inner.theta
        C0 = np.zeros_like(C1)
        noise = np.eye(model.d) - inner.rho ** 2 * inner.theta @ inner.theta.T
        return C0, C1, noise
    raise UnsupportedPredictor(
        f"{type(model).__name__} is not a one-step affine sensor model")


def online_optimize(system: LTVSystem, model, spec: PolicyClassSpec,
                    seed: int, record_every: int = 1,
                    snapshot_every: Optional[int] = None) -> OnlineRunRecord:
    """Run one online-tuning trajectory with the paired baseline rollout.

    Each step: act with the current Upsilon, accumulate both costs, take a
    gradient step on the instantaneous stage cost through the sensitivity
    recursion S <- F S + B (dU/dUpsilon), and decay the learning rate.
    """
    A, B, Q, R = _require_time_invariant(system)
    _sensor_decomposition(model)   # validates the model family
    T, n, m, d = system.T, system.n, spec.m, spec.d
    if model.T != T:
        raise DimensionMismatch(f"model horizon {model.T} != system horizon {T}")
    if model.d != d:
        raise DimensionMismatch(f"model prediction dim {model.d} != spec d={d}")
    K = spec.K
    F = A - B @ K
    snapshot_every = snapshot_every or max(T // 100, 1)

    inst = model.sample(derive_rng(seed, 0))
    W, V = inst.W, inst.V

    x = system.x0.copy()
    xb = system.x0.copy()
    S = np.zeros((n, m * d))          # sensitivity dx/dvec(Upsilon)
    ups = spec.Upsilon0.copy()
    grad_acc = np.zeros((m, d))
    cum = 0.0
    cumb = 0.0

    rec_idx = np.arange(record_every - 1, T, record_every)
    times = np.empty(len(rec_idx), dtype=int)
    cums = np.empty(len(rec_idx))
    cumbs = np.empty(len(rec_idx))
    improvements = np.empty(len(rec_idx))
    snap_times, snaps = [], []
    r = 0
    for t in range(T):
        v = V[t]
        u = -(K @ x) + ups @ v
        ub = -(K @ xb)
        cum += float(x @ Q @ x + u @ R @ u)
        cumb += float(xb @ Q @ xb + ub @ R @ ub)
        if r < len(rec_idx) and t == rec_idx[r]:
            times[r] = t
            cums[r] = cum
            cumbs[r] = cumb
            improvements[r] = (cumb - cum) / (t + 1)
            r += 1
        if t % snapshot_every == 0:
            snap_times.append(t)
            snaps.append(ups.copy())

        Ru = R @ u
        gx = 2.0 * (Q @ x) - 2.0 * (K.T @ Ru)
        grad_acc += (gx @ S).reshape(m, d) + 2.0 * np.outer(Ru, v)
        if (t + 1) % spec.update_every == 0:
            eta = spec.lr_base * (1.0 + t / spec.lr_c) ** (-spec.lr_beta)
            ups = ups - eta * (grad_acc / spec.update_every)
            grad_acc = np.zeros((m, d))
            if float(np.linalg.norm(ups)) > spec.divergence_bound:
                raise Divergence(
                    f"|Upsilon| = {np.linalg.norm(ups):.3e} exceeded "
                    f"{spec.divergence_bound} at t={t}")

        direct = (B[:, :, None] * v[None, None, :]).reshape(n, m * d)
        S = F @ S + direct
        w = W[t]
        x = A @ x + B @ u + w
        xb = A @ xb + B @ ub + w

    return OnlineRunRecord(times=times, cumulative_cost=cums,
                           baseline_cumulative_cost=cumbs,
                           improvement=improvements,
                           upsilon_times=np.asarray(snap_times, dtype=int),
                           upsilons=np.asarray(snaps),
                           final_upsilon=ups, seed=seed)


def replicated_online_runs(system: LTVSystem, model, spec: PolicyClassSpec,
                           replicates: int, master_seed: int,
                           record_every: int = 1, threads: int = 1) -> list:
    """Independent replicates with derived seeds; order-deterministic."""
    seeds = [master_seed + 104729 * r for r in range(replicates)]
    if threads <= 1:
        return [online_optimize(system, model, spec, seed=s,
                                record_every=record_every) for s in seeds]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(online_optimize, system, model, spec, s,
                               record_every) for s in seeds]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Best fixed prediction map (the in-class ceiling)
# ---------------------------------------------------------------------------

def steady_state_average_cost(system: LTVSystem, model, spec: PolicyClassSpec,
                              Upsilon: np.ndarray) -> float:
    """Exact long-run average stage cost of u = -K x + Upsilon v.

    The stationary covariance of the augmented state (x_t, w_t) solves a
    discrete Lyapunov equation; the average cost is then a quadratic
    function of Upsilon (the transition matrix does not depend on it).
    """
    A, B, Q, R = _require_time_invariant(system)
    C0, C1, Nv = _sensor_decomposition(model)
    K = spec.K
    F = A - B @ K
    n = system.n
    ups = np.asarray(Upsilon, dtype=float)
    BU = B @ ups

    A_aug = np.zeros((2 * n, 2 * n))
    A_aug[:n, :n] = F
    A_aug[:n, n:] = BU @ C0 + np.eye(n)
    G = np.zeros((2 * n, n + Nv.shape[0]))
    G[:n, :n] = BU @ C1
    G[:n, n:] = BU
    G[n:, :n] = np.eye(n)
    noise = np.zeros((n + Nv.shape[0], n + Nv.shape[0]))
    noise[:n, :n] = np.eye(n)
    noise[n:, n:] = Nv
    sigma = scipy.linalg.solve_discrete_lyapunov(A_aug, G @ noise @ G.T)
    sigma_x = sigma[:n, :n]
    cross_xw = sigma[:n, n:]                  # E[x w'] (= B Upsilon C1)
    cov_v = C0 @ C0.T + C1 @ C1.T + Nv
    ex_v = cross_xw @ C0.T                    # E[x v']
    uu = (K @ sigma_x @ K.T - K @ ex_v @ ups.T - ups @ ex_v.T @ K.T
          + ups @ cov_v @ ups.T)
    return float(np.trace(Q @ sigma_x) + np.trace(R @ uu))


def optimal_in_class_improvement(system: LTVSystem, model,
                                 spec: PolicyClassSpec) -> tuple[float, np.ndarray, float]:
    """Best per-step improvement attainable by any fixed Upsilon.

    The average cost is exactly quadratic in vec(Upsilon), so it is
    reconstructed from function values at canonical points and minimized in
    closed form.  Returns (improvement per step, argmin Upsilon, baseline
    average cost).
    """
    m, d = spec.m, spec.d
    p = m * d
    if p == 0:
        J0 = steady_state_average_cost(system, model, spec, np.zeros((m, d)))
        return 0.0, np.zeros((m, d)), float(J0)

    def J(vec):
        return steady_state_average_cost(system, model, spec, vec.reshape(m, d))

    e = np.eye(p)
    J0 = J(np.zeros(p))
    grad = np.empty(p)
    hess = np.empty((p, p))
    plus = np.empty(p)
    minus = np.empty(p)
    for i in range(p):
        plus[i] = J(e[i])
        minus[i] = J(-e[i])
        grad[i] = 0.5 * (plus[i] - minus[i])
        hess[i, i] = plus[i] + minus[i] - 2.0 * J0
    for i in range(p):
        for j in range(i + 1, p):
            hess[i, j] = hess[j, i] = (J(e[i] + e[j]) - plus[i] - plus[j] + J0)
    eigs = np.linalg.eigvalsh(hess)
    if eigs[0] <= 0:
        raise NoConvergence(
            f"average-cost Hessian not PD (min eigenvalue {eigs[0]:.3e})")
    vec_star = -np.linalg.solve(hess, grad)
    J_star = J(vec_star)
    return float(J0 - J_star), vec_star.reshape(m, d), float(J0)
