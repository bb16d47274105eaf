"""Lower bounds on prediction power for general convex costs.

Implements the quadratic-growth / action-covariance bound
P(theta) >= sum_t Tr{M_t Sigma_t} (or sum_t mu_min(M_t) sigma_t), the
conditioning recursion for well-conditioned costs, the per-step sigma_t
formula, nested Monte-Carlo checkers that hunt for admissible M_t and
Sigma_t on desk-scale instances, and the convex-analysis toolbox backing
them: the infimal-convolution variant, curvature probes, and the
variance pass-through bound for strongly monotone Lipschitz maps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (BudgetExceeded, CertificateMissing, DimensionMismatch,
                     ShapeMismatch)
from .lqr import LTVSystem, RiccatiSolution, optimal_action
from .optim import minimize_smooth_convex
from .predictors import History, derive_rng
from .rollout import OptimalPredictive, rollout_costs_batch
from .scalar_dp import ScalarDPProblem, ScalarDPSolution, q_values_scalar


# ---------------------------------------------------------------------------
# Conditioning parameters and the recursion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostConditioning:
    """Strong-convexity/smoothness certificates of the separable costs and
    spectral bounds mu_A I <= A'A <= ell_A I, mu_B I <= B'B <= ell_B I.
    Requires ell_A < 1 (open-loop stable)."""

    mu_x: float
    ell_x: float
    mu_u: float
    ell_u: float
    mu_A: float
    ell_A: float
    mu_B: float
    ell_B: float

    def __post_init__(self):
        for lo, hi, name in ((self.mu_x, self.ell_x, "x"), (self.mu_u, self.ell_u, "u"),
                             (self.mu_A, self.ell_A, "A"), (self.mu_B, self.ell_B, "B")):
            if lo < 0 or hi < lo:
                raise ShapeMismatch(f"need 0 <= mu_{name} <= ell_{name}")
        if self.mu_x <= 0 or self.mu_u <= 0:
            raise ShapeMismatch("cost curvatures mu_x, mu_u must be positive")
        if not self.ell_A < 1:
            raise ShapeMismatch(f"ell_A = {self.ell_A} must be < 1")


@dataclass(frozen=True)
class BoundParams:
    """Bundle of certified sequences feeding the power lower bound."""

    M: Sequence[np.ndarray]
    Sigma: Optional[Sequence[np.ndarray]] = None
    sigma: Optional[Sequence[float]] = None
    lam: Optional[Sequence[float]] = None

    def __post_init__(self):
        for M_t in self.M:
            eigs = np.linalg.eigvalsh(np.atleast_2d(np.asarray(M_t, dtype=float)))
            if eigs[0] < -1e-10:
                raise ShapeMismatch("M entries must be PSD")
        if self.Sigma is not None:
            for S in self.Sigma:
                eigs = np.linalg.eigvalsh(np.atleast_2d(np.asarray(S, dtype=float)))
                if eigs[0] < -1e-10:
                    raise ShapeMismatch("Sigma entries must be PSD")
        if self.sigma is not None and any(s < 0 for s in self.sigma):
            raise ShapeMismatch("sigma entries must be nonnegative")
        if self.lam is not None and any(l < 0 for l in self.lam):
            raise ShapeMismatch("lambda entries must be nonnegative")


def mu_ell_recursion(cond: CostConditioning, T: int,
                     b_squared: str = "ell_B") -> tuple[np.ndarray, np.ndarray]:
    """Backward curvature recursion for the expected cost-to-go.

    mu_T = mu_x, ell_T = ell_x, and going backward
        mu_t = mu_x + mu_A * mu_u mu_{t+1} / (mu_u + b^2 mu_{t+1}),
        ell_t = ell_x + ell_A * ell_{t+1}.
    The symbol b^2 is bound to ell_B by default (worst case over B_t);
    b_squared='mu_B' gives the alternative binding for sensitivity runs.
    Guaranteed envelopes: mu_x <= mu_t and ell_t <= ell_x / (1 - ell_A).
    """
    if b_squared not in ("ell_B", "mu_B"):
        raise ShapeMismatch("b_squared must be 'ell_B' or 'mu_B'")
    b2 = cond.ell_B if b_squared == "ell_B" else cond.mu_B
    mu = np.empty(T + 1)
    ell = np.empty(T + 1)
    mu[T] = cond.mu_x
    ell[T] = cond.ell_x
    for t in range(T - 1, -1, -1):
        mu[t] = cond.mu_x + cond.mu_A * (cond.mu_u * mu[t + 1]) / (cond.mu_u + b2 * mu[t + 1])
        ell[t] = cond.ell_x + cond.ell_A * ell[t + 1]
    return mu, ell


def sigma_lower(cond: CostConditioning, lam: float, mu_next: float,
                ell_next: float, n: int) -> float:
    """Per-step action-covariance floor
    sigma_t = n lambda_t mu_{t+1}^2 mu_B / (2 (ell_u + ell_{t+1} sqrt(ell_B))^2)."""
    if lam < 0 or mu_next < 0 or ell_next < 0:
        raise ShapeMismatch("inputs must be nonnegative")
    denom = 2.0 * (cond.ell_u + ell_next * np.sqrt(cond.ell_B)) ** 2
    return float(n * lam * mu_next ** 2 * cond.mu_B / denom)


def theorem43_bound(M: Sequence, Sigma: Optional[Sequence] = None,
                    sigma: Optional[Sequence[float]] = None) -> float:
    """sum_t Tr{M_t Sigma_t}, or sum_t mu_min(M_t) sigma_t with the scalar
    form of the covariance condition."""
    if (Sigma is None) == (sigma is None):
        raise ShapeMismatch("provide exactly one of Sigma or sigma")
    M_list = [np.atleast_2d(np.asarray(M_t, dtype=float)) for M_t in M]
    if Sigma is not None:
        S_list = [np.atleast_2d(np.asarray(S, dtype=float)) for S in Sigma]
        if len(S_list) != len(M_list):
            raise ShapeMismatch(f"{len(M_list)} M entries vs {len(S_list)} Sigma entries")
        return float(sum(np.trace(M_t @ S_t) for M_t, S_t in zip(M_list, S_list)))
    sig = [float(s) for s in sigma]
    if len(sig) != len(M_list):
        raise ShapeMismatch(f"{len(M_list)} M entries vs {len(sig)} sigma entries")
    return float(sum(np.linalg.eigvalsh(M_t)[0] * s for M_t, s in zip(M_list, sig)))


def theorem48_bound(cond: CostConditioning, lam: Sequence[float], n: int, T: int,
                    b_squared: str = "ell_B") -> float:
    """P(theta) >= sum_t mu_u sigma_t with sigma_t from the composed
    conditioning recursion."""
    lam = [float(l) for l in lam]
    if len(lam) != T:
        raise ShapeMismatch(f"need T={T} lambda entries, got {len(lam)}")
    mu, ell = mu_ell_recursion(cond, T, b_squared)
    total = 0.0
    for t in range(T):
        total += cond.mu_u * sigma_lower(cond, lam[t], mu[t + 1], ell[t + 1], n)
    return float(total)


# ---------------------------------------------------------------------------
# Function specs and the infimal-convolution variant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionSpec:
    """Differentiable convex function given by value/gradient callables,
    with optional strong-convexity (mu) and smoothness (ell) certificates."""

    value: Callable
    grad: Callable
    mu: Optional[float] = None
    ell: Optional[float] = None
    name: str = ""


def quadratic_spec(H: np.ndarray, lin: Optional[np.ndarray] = None,
                   name: str = "quadratic") -> FunctionSpec:
    H = np.atleast_2d(np.asarray(H, dtype=float))
    lin_vec = np.zeros(H.shape[0]) if lin is None else np.asarray(lin, dtype=float)
    eigs = np.linalg.eigvalsh(H)

    def value(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ H @ x) + float(lin_vec @ x)

    def grad(x):
        x = np.asarray(x, dtype=float)
        return H @ x + lin_vec

    return FunctionSpec(value=value, grad=grad, mu=float(eigs[0]),
                        ell=float(eigs[-1]), name=name)


def infimal_convolution(f: FunctionSpec, omega: FunctionSpec, B: np.ndarray,
                        x: np.ndarray, tol: float = 1e-10,
                        max_iter: int = 200000) -> tuple[float, np.ndarray]:
    """(f square_B omega)(x) = min_u f(u) + omega(x - B u).

    Gradient descent with Armijo backtracking to gradient norm <= tol;
    returns (value, minimizer u(x)).
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    if B.shape[0] != x.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, x has length {x.shape[0]}")
    m = B.shape[1]

    def val_grad(u):
        r = x - B @ u
        return f.value(u) + omega.value(r), f.grad(u) - B.T @ omega.grad(r)

    val, u = minimize_smooth_convex(val_grad, np.zeros(m), tol=tol,
                                    max_iter=max_iter)
    return float(val), u


def infimal_conv_curvature(mu_f: float, mu_omega: float, ell_omega: float,
                           B: np.ndarray) -> tuple[float, float]:
    """Certified conditioning of f square_B omega:
    (mu_omega mu_f / (mu_f + |B|^2 mu_omega), ell_omega)."""
    Bn = float(np.linalg.norm(np.atleast_2d(B), 2))
    return mu_omega * mu_f / (mu_f + Bn ** 2 * mu_omega), ell_omega


def infimal_conv_trace_bound(n: int, sigma0: float, mu_omega: float,
                             ell_f: float, ell_omega: float, B: np.ndarray) -> float:
    """Trace floor for the minimizer's covariance under a Gaussian input:
    n sigma0 mu_omega^2 sigma_min(B)^2 / (2 (ell_f + ell_omega |B|)^2)."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    svals = np.linalg.svd(B, compute_uv=False)
    Bn, smin = float(svals[0]), float(svals[-1])
    return n * sigma0 * mu_omega ** 2 * smin ** 2 / (2.0 * (ell_f + ell_omega * Bn) ** 2)


def curvature_probe(spec: FunctionSpec, lo, hi, n_chords: int = 4000,
                    seed: int = 0) -> tuple[float, float]:
    """Empirical secant bounds mu_hat <= curvature <= ell_hat over random
    chords in the box [lo, hi]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    rng = derive_rng(seed, 0)
    dim = lo.shape[0]
    mu_hat, ell_hat = np.inf, -np.inf
    for _ in range(n_chords):
        x = lo + (hi - lo) * rng.random(dim)
        y = lo + (hi - lo) * rng.random(dim)
        diff = y - x
        nrm2 = float(diff @ diff)
        if nrm2 < 1e-16:
            continue
        secant = float((np.asarray(spec.grad(y)) - np.asarray(spec.grad(x))) @ diff) / nrm2
        mu_hat = min(mu_hat, secant)
        ell_hat = max(ell_hat, secant)
    return float(mu_hat), float(ell_hat)


# ---------------------------------------------------------------------------
# Variance pass-through for strongly monotone Lipschitz maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorMapSpec:
    """g: R^d -> R^d applied row-wise to (N, d) batches, with certificates:
    gamma (strong monotonicity), L (Lipschitz), ell (componentwise Hessian
    bound).  All three are user-supplied, never inferred."""

    map: Callable
    gamma: Optional[float] = None
    L: Optional[float] = None
    ell: Optional[float] = None
    name: str = ""


@dataclass(frozen=True)
class PassthroughResult:
    lambda_min: float
    bound: float
    std_error: float
    passed: bool
    count: int


def variance_passthrough_bound(mu: float, gamma: float) -> float:
    return mu * gamma ** 2


def variance_passthrough_check(g: VectorMapSpec, cov: Optional[np.ndarray] = None,
                               n_samples: int = 1_000_000, seed: int = 0,
                               mean: Optional[np.ndarray] = None,
                               sampler: Optional[Callable] = None,
                               mu: Optional[float] = None,
                               probe_pairs: int = 256) -> PassthroughResult:
    """Monte-Carlo check that lambda_min(Cov(g(X))) >= mu gamma^2 - 3 se.

    X is Gaussian with the given covariance unless a custom sampler is
    supplied (then mu, the input-covariance floor, must be given too).
    The certificates are cross-checked by random secant probes before the
    covariance estimate is trusted.
    """
    if g.gamma is None or g.L is None or g.ell is None:
        raise CertificateMissing(
            f"map {g.name or '<anonymous>'} needs (gamma, L, ell) certificates")
    rng = derive_rng(seed, 0)
    if sampler is None:
        if cov is None:
            raise DimensionMismatch("provide cov for the Gaussian input")
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        d = cov.shape[0]
        chol = np.linalg.cholesky(cov)
        mean_vec = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
        draw = lambda size: rng.standard_normal((size, d)) @ chol.T + mean_vec
        mu_val = float(np.linalg.eigvalsh(cov)[0]) if mu is None else float(mu)
    else:
        if mu is None:
            raise CertificateMissing("mu (input covariance floor) required with a sampler")
        draw = lambda size: np.atleast_2d(sampler(rng, size))
        mu_val = float(mu)

    # certificate spot checks on random secants
    xs = draw(probe_pairs)
    ys = draw(probe_pairs)
    gx, gy = g.map(xs), g.map(ys)
    dx = ys - xs
    dgy = gy - gx
    nrm2 = np.einsum("ij,ij->i", dx, dx)
    ok = nrm2 > 1e-14
    inner = np.einsum("ij,ij->i", dgy, dx)
    if np.any(inner[ok] < (g.gamma - 1e-7) * nrm2[ok]):
        raise CertificateMissing(f"gamma={g.gamma} violated by a secant probe")
    if np.any(np.linalg.norm(dgy[ok], axis=1) >
              (g.L + 1e-7) * np.sqrt(nrm2[ok])):
        raise CertificateMissing(f"L={g.L} violated by a secant probe")

    X = draw(n_samples)
    Y = np.atleast_2d(g.map(X))
    Yc = Y - Y.mean(axis=0)
    C = Yc.T @ Yc / (n_samples - 1)
    eigs, vecs = np.linalg.eigh(0.5 * (C + C.T))
    lam_min = float(eigs[0])
    v = vecs[:, 0]
    proj_sq = (Yc @ v) ** 2
    se = float(np.std(proj_sq, ddof=1) / np.sqrt(n_samples))
    bound = variance_passthrough_bound(mu_val, g.gamma)
    return PassthroughResult(lambda_min=lam_min, bound=bound, std_error=se,
                             passed=lam_min >= bound - 3.0 * se,
                             count=n_samples)


# ---------------------------------------------------------------------------
# Nested Monte-Carlo condition checkers (desk scale: T <= 4, n = m = 1)
# ---------------------------------------------------------------------------

_MAX_T = 4
_MAX_INNER = 10_000
_MAX_OUTER = 1_000


class LQRCheckProblem:
    """Checker adapter for scalar LTV-quadratic instances (the binary
    example is the degenerate R = 0 member)."""

    def __init__(self, system: LTVSystem, riccati: RiccatiSolution, model):
        if system.n != 1 or system.m != 1:
            raise BudgetExceeded("checkers support n = m = 1 only")
        self.system = system
        self.riccati = riccati
        self.model = model
        self._policy = OptimalPredictive(riccati, system, model)

    @property
    def T(self) -> int:
        return self.system.T

    def sample_history(self, t: int, rng) -> History:
        return self.model.sample(rng).history(t)

    def policy_action(self, t: int, x: float, history: History) -> float:
        means = self.model.cond_means_future(history)
        u = optimal_action(self.riccati, self.system, t, np.array([x]), means)
        return float(u[0])

    def q_batch(self, t: int, x: float, u: float, W: np.ndarray,
                V: np.ndarray) -> np.ndarray:
        return rollout_costs_batch(self.system, self._policy, W, V,
                                   t_start=t, x_start=np.array([x]),
                                   u_first=np.array([u]))

    def baseline_state(self, w_prefix: np.ndarray) -> float:
        x = float(self.system.x0[0])
        for tau in range(w_prefix.shape[0]):
            u = -float(self.riccati.K[tau][0, 0]) * x
            x = float(self.system.A[tau][0, 0] * x + self.system.B[tau][0, 0] * u
                      + w_prefix[tau, 0])
        return x


class ScalarDPCheckProblem:
    """Checker adapter backed by the numerically solved DP policies."""

    def __init__(self, problem: ScalarDPProblem, solution: ScalarDPSolution):
        self.problem = problem
        self.solution = solution
        self.model = problem.predictor

    @property
    def T(self) -> int:
        return self.problem.T

    def sample_history(self, t: int, rng) -> History:
        return self.model.sample(rng).history(t)

    def policy_action(self, t: int, x: float, history: History) -> float:
        return float(self.solution.theta_action(t, x, float(history.v(t)[0])))

    def q_batch(self, t, x, u, W, V):
        return q_values_scalar(self.problem, self.solution, t, x, u, W, V)

    def baseline_state(self, w_prefix: np.ndarray) -> float:
        x = float(self.problem.x0)
        for tau in range(w_prefix.shape[0]):
            u = float(self.solution.baseline_action(tau, x))
            x = self.problem.a * x + self.problem.b * u + float(w_prefix[tau, 0])
        return x


class ConstantCostProblem:
    """All stage costs identically constant: Q - C vanishes and the only
    admissible quadratic-growth certificate is M = 0."""

    def __init__(self, T: int, model, level: float = 1.0):
        self.T = T
        self.model = model
        self.level = level

    def sample_history(self, t: int, rng) -> History:
        return self.model.sample(rng).history(t)

    def policy_action(self, t, x, history) -> float:
        return 0.0

    def q_batch(self, t, x, u, W, V):
        return np.full(W.shape[0], (self.T - t + 1) * self.level)

    def baseline_state(self, w_prefix) -> float:
        return 0.0


@dataclass(frozen=True)
class Condition1Result:
    M_candidate: float
    defect: float
    table: list


@dataclass(frozen=True)
class Condition2Result:
    Sigma_candidate: np.ndarray
    trace: float
    std_error: float


def _stack_completions(model, history: History, count: int, rng):
    insts = [model.sample_completion(history, rng) for _ in range(count)]
    W = np.stack([inst.W for inst in insts])
    V = np.stack([inst.V for inst in insts])
    return W, V


def _check_budget(T: int, inner: int, outer: int):
    if T > _MAX_T:
        raise BudgetExceeded(f"checkers are restricted to T <= {_MAX_T}, got {T}")
    if inner > _MAX_INNER:
        raise BudgetExceeded(f"inner budget capped at {_MAX_INNER}, got {inner}")
    if outer > _MAX_OUTER:
        raise BudgetExceeded(f"outer budget capped at {_MAX_OUTER}, got {outer}")


def condition1_check(problem, t: int, x_grid: Sequence[float] = (-1.0, 0.0, 1.5),
                     u_offsets: Sequence[float] = (-2.4, -1.2, 1.2, 2.4),
                     n_histories: int = 4, inner: int = 10000,
                     seed: int = 0) -> Condition1Result:
    """Largest M with E[Q_t(x,u) - C_t(x) | history] >= M (u - pi)^2 on the
    sampled grid, after a 2-sigma downward slack on each estimate.

    Inner estimates pair Q(x, u) and Q(x, pi(x)) on common instance
    completions drawn conditionally on the sampled history.
    """
    _check_budget(problem.T, inner, n_histories * len(x_grid) * len(u_offsets))
    rng = derive_rng(seed, 1)
    ratios = []
    table = []
    for h in range(n_histories):
        history = problem.sample_history(t, rng)
        W, V = _stack_completions(problem.model, history, inner, rng)
        for x in x_grid:
            pi = problem.policy_action(t, float(x), history)
            q_pi = problem.q_batch(t, float(x), pi, W, V)
            for off in u_offsets:
                u = pi + off
                diffs = problem.q_batch(t, float(x), u, W, V) - q_pi
                est = float(diffs.mean())
                se = float(diffs.std(ddof=1) / np.sqrt(inner)) if inner > 1 else 0.0
                ratio = max((est - 2.0 * se) / off ** 2, 0.0)
                ratios.append(ratio)
                table.append({"history": h, "x": float(x), "offset": float(off),
                              "estimate": est, "std_error": se, "ratio": ratio})
    M_hat = float(min(ratios))
    defect = float(max(M_hat * row["offset"] ** 2 - row["estimate"] for row in table))
    return Condition1Result(M_candidate=M_hat, defect=defect, table=table)


def condition2_check(problem, t: int, outer: int = 200, inner: int = 400,
                     seed: int = 0) -> Condition2Result:
    """E[Cov(pi_t^theta(X) | baseline history)] with X the baseline policy's
    state: outer-samples the baseline history, inner-samples the theta view
    consistent with it, and averages the inner action covariances.  The
    estimate is PSD-projected (scalar clip at zero here)."""
    _check_budget(problem.T, inner, outer)
    rng = derive_rng(seed, 2)
    per_outer = np.empty(outer)
    for i in range(outer):
        inst = problem.model.sample(rng)
        w_prefix = inst.W[:t]
        x_bar = problem.baseline_state(w_prefix)
        actions = np.empty(inner)
        for j in range(inner):
            _, V_hist = problem.model.sample_theta_view_given_w_prefix(w_prefix, rng)
            history = History(t=t, past_W=w_prefix, past_V=V_hist)
            actions[j] = problem.policy_action(t, x_bar, history)
        per_outer[i] = actions.var(ddof=1)
    trace = float(max(per_outer.mean(), 0.0))
    se = float(per_outer.std(ddof=1) / np.sqrt(outer))
    return Condition2Result(Sigma_candidate=np.array([[trace]]), trace=trace,
                            std_error=se)
