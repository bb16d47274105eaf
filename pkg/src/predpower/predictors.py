"""Predictor families with analytic joint laws of disturbances and predictions.

Every model fixes a horizon T and a disturbance dimension n, samples full
problem instances (all T disturbances plus all T prediction vectors drawn
before control starts), and exposes exact conditional moments of future
disturbances given the observable history I_t = (W_{0:t-1}, V_{0:t}).

Families:
  * Baseline          -- uninformative, V_t = () always.
  * AffineGaussian    -- V_t = rho * theta W_t + eps_t,  eps ~ N(0, I - rho^2 theta theta').
  * ShiftedAffineGaussian -- the affine prediction made available one step
                         early: V_t = V_{t+1}(inner).
  * MultiStep1D       -- W_t is a sum of three independent scalar components;
                         variant 1 reveals two components directly, variant 2
                         reveals the scalar summary the optimal action needs.
  * BinaryPerfect     -- W_t = +/-1 uniform, revealed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DimensionMismatch, InformationLeak, InvalidModel,
                     UnsupportedPredictor, UnsupportedTarget)
from .lqr import dare_fixed_point


# ---------------------------------------------------------------------------
# RNG derivation: (master seed, instance index) -> independent Philox stream.
# Sampling an instance is a pure function of the pair, so datasets are
# reproducible no matter how instances are scheduled across workers.
# ---------------------------------------------------------------------------

def derive_rng(master_seed: int, index: int = 0) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


# ---------------------------------------------------------------------------
# Histories and instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class History:
    """Observable information at time t: past disturbances and predictions
    up to and including the current one, I_t = (W_{0:t-1}, V_{0:t})."""

    t: int
    past_W: np.ndarray
    past_V: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "past_W", np.atleast_2d(np.asarray(self.past_W, dtype=float)))
        object.__setattr__(self, "past_V", np.atleast_2d(np.asarray(self.past_V, dtype=float)))
        if self.past_W.shape[0] != self.t:
            raise DimensionMismatch(
                f"past_W must have t={self.t} rows, got {self.past_W.shape[0]}")
        if self.past_V.shape[0] != self.t + 1:
            raise DimensionMismatch(
                f"past_V must have t+1={self.t + 1} rows, got {self.past_V.shape[0]}")

    def w(self, tau: int) -> np.ndarray:
        if tau >= self.t:
            raise InformationLeak(
                f"W_{tau} is not observable at time {self.t} (I_t holds W up to t-1)")
        if tau < 0:
            raise DimensionMismatch("negative time index")
        return self.past_W[tau]

    def v(self, tau: int) -> np.ndarray:
        if tau > self.t:
            raise InformationLeak(
                f"V_{tau} is not observable at time {self.t}")
        if tau < 0:
            raise DimensionMismatch("negative time index")
        return self.past_V[tau]


@dataclass(frozen=True)
class ProblemInstance:
    """One pre-drawn realization of all disturbances and predictions."""

    W: np.ndarray
    V: np.ndarray
    predictor_id: str

    def __post_init__(self):
        object.__setattr__(self, "W", np.asarray(self.W, dtype=float))
        object.__setattr__(self, "V", np.asarray(self.V, dtype=float))
        if self.W.ndim != 2 or self.V.ndim != 2:
            raise DimensionMismatch("W and V must be 2-D (T x dim) arrays")
        if self.W.shape[0] != self.V.shape[0]:
            raise DimensionMismatch(
                f"row counts differ: W has {self.W.shape[0]}, V has {self.V.shape[0]}")

    @property
    def T(self) -> int:
        return self.W.shape[0]

    def history(self, t: int) -> History:
        return History(t=t, past_W=self.W[:t], past_V=self.V[:t + 1])


@dataclass(frozen=True)
class InstanceDataset:
    """Stacked instances: W is (N, T, n), V is (N, T, d)."""

    W: np.ndarray
    V: np.ndarray
    predictor_id: str
    master_seed: int

    @property
    def count(self) -> int:
        return self.W.shape[0]

    @property
    def T(self) -> int:
        return self.W.shape[1]

    def instance(self, i: int) -> ProblemInstance:
        return ProblemInstance(W=self.W[i], V=self.V[i], predictor_id=self.predictor_id)


# ---------------------------------------------------------------------------
# Model base helpers
# ---------------------------------------------------------------------------

class _ModelBase:
    """Shared conveniences; concrete families fill in the analytic pieces."""

    #: steps beyond t-1 for which conditional means can be nonzero
    max_lookahead: int = 0

    def sample(self, rng: np.random.Generator) -> ProblemInstance:
        W, V = self._sample_arrays(rng)
        return ProblemInstance(W=W, V=V, predictor_id=self.model_id)

    def cond_means_future(self, history: History) -> np.ndarray:
        """E[W_tau | I_t] for tau = t .. min(t + lookahead, T) - 1, stacked."""
        t = history.t
        hi = min(t + self.max_lookahead, self.T)
        return np.array([self.conditional_mean_W(history, tau) for tau in range(t, hi)])

    def _check_target(self, t: int, tau: int) -> None:
        if tau >= self.T:
            raise UnsupportedTarget(f"target {tau} is outside the horizon T={self.T}")
        if tau < t:
            raise DimensionMismatch(f"target {tau} precedes current time {t}")

    # Completion hooks used by the nested Monte-Carlo condition checkers;
    # only the families those checkers are configured with implement them.
    def sample_completion(self, history: History, rng: np.random.Generator) -> ProblemInstance:
        raise UnsupportedPredictor(
            f"{type(self).__name__} does not support conditional completion sampling")

    def sample_theta_view_given_w_prefix(self, w_prefix: np.ndarray,
                                         rng: np.random.Generator):
        raise UnsupportedPredictor(
            f"{type(self).__name__} does not support theta-view resampling")


# ---------------------------------------------------------------------------
# Baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Baseline(_ModelBase):
    """The least-informative predictor: V_t = () (zero-width) always."""

    T: int
    n: int = 1

    d: int = field(init=False, default=0)
    max_lookahead = 0

    @property
    def model_id(self) -> str:
        return f"baseline(n={self.n})"

    def _sample_arrays(self, rng):
        W = rng.standard_normal((self.T, self.n))
        return W, np.zeros((self.T, 0))

    def conditional_mean_W(self, history: History, tau: int) -> np.ndarray:
        self._check_target(history.t, tau)
        return np.zeros(self.n)

    def cond_means_future_batch(self, t: int, batch) -> np.ndarray:
        return np.zeros((batch.count, 0, self.n))

    def conditional_cov_W(self, t: int, tau: int) -> np.ndarray:
        self._check_target(t, tau)
        return np.eye(self.n)

    def cov_reduction_terms(self, t: int, T: int):
        return []

    def sample_completion(self, history, rng):
        t = history.t
        W = np.vstack([history.past_W, rng.standard_normal((self.T - t, self.n))]) \
            if t < self.T else history.past_W.copy()
        return ProblemInstance(W=W, V=np.zeros((self.T, 0)), predictor_id=self.model_id)

    def sample_theta_view_given_w_prefix(self, w_prefix, rng):
        t = w_prefix.shape[0]
        return rng.standard_normal(self.n), np.zeros((t + 1, 0))


# ---------------------------------------------------------------------------
# Affine Gaussian (one-step information about the current disturbance)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineGaussian(_ModelBase):
    """V_t = rho * theta W_t + eps_t with eps_t ~ N(0, I - rho^2 theta theta').

    Requires theta theta' <= I/2 so the noise covariance stays positive
    definite over the whole admissible range rho in [0, sqrt(2)/2].
    """

    T: int
    rho: float
    theta: np.ndarray

    max_lookahead = 1

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        object.__setattr__(self, "theta", theta)
        if not (0.0 <= self.rho <= np.sqrt(2) / 2 + 1e-12):
            raise InvalidModel(f"rho={self.rho} outside [0, sqrt(2)/2]")
        gram = theta @ theta.T
        # Feasibility requires the noise covariance I - rho^2 theta theta' to
        # stay PD over the admissible rho range; rho^2 lambda_max < 1 is the
        # exact condition (theta theta' <= I/2 is a sufficient special case).
        top = float(np.linalg.eigvalsh(gram)[-1])
        if self.rho ** 2 * top > 1.0 - 1e-10:
            raise InvalidModel(
                f"rho^2 * theta theta' must stay below I; got largest "
                f"eigenvalue {self.rho ** 2 * top:.6f}")
        noise_cov = np.eye(self.d) - self.rho ** 2 * gram
        object.__setattr__(self, "_noise_chol", np.linalg.cholesky(noise_cov))

    @property
    def n(self) -> int:
        return self.theta.shape[1]

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def model_id(self) -> str:
        return f"affine-gaussian(rho={self.rho})"

    def _sample_arrays(self, rng):
        W = rng.standard_normal((self.T, self.n))
        eps = rng.standard_normal((self.T, self.d)) @ self._noise_chol.T
        V = self.rho * W @ self.theta.T + eps
        return W, V

    def conditional_mean_W(self, history: History, tau: int) -> np.ndarray:
        self._check_target(history.t, tau)
        if tau == history.t:
            return self.rho * self.theta.T @ history.v(history.t)
        return np.zeros(self.n)

    def cond_means_future_batch(self, t: int, batch) -> np.ndarray:
        """Batch form: (N, 1, n) array of E[W_t | v_t]."""
        vt = batch.v_col(t)
        return (self.rho * vt @ self.theta)[:, None, :]

    def conditional_cov_W(self, t: int, tau: int) -> np.ndarray:
        self._check_target(t, tau)
        if tau == t:
            return np.eye(self.n) - self.rho ** 2 * self.theta.T @ self.theta
        return np.eye(self.n)

    def cov_reduction_terms(self, t: int, T: int):
        return [(t, t, self.rho ** 2 * self.theta.T @ self.theta)]

    def sample_completion(self, history, rng):
        t, T = history.t, self.T
        W = np.zeros((T, self.n))
        V = np.zeros((T, self.d))
        W[:t] = history.past_W
        V[:t + 1] = history.past_V
        mean_t = self.rho * self.theta.T @ history.v(t)
        cov_t = np.eye(self.n) - self.rho ** 2 * self.theta.T @ self.theta
        W[t] = mean_t + np.linalg.cholesky(cov_t) @ rng.standard_normal(self.n)
        if t + 1 < T:
            W[t + 1:] = rng.standard_normal((T - t - 1, self.n))
            eps = rng.standard_normal((T - t - 1, self.d)) @ self._noise_chol.T
            V[t + 1:] = self.rho * W[t + 1:] @ self.theta.T + eps
        return ProblemInstance(W=W, V=V, predictor_id=self.model_id)

    def sample_theta_view_given_w_prefix(self, w_prefix, rng):
        t = w_prefix.shape[0]
        w_t = rng.standard_normal(self.n)
        stacked = np.vstack([w_prefix, w_t[None, :]])
        eps = rng.standard_normal((t + 1, self.d)) @ self._noise_chol.T
        V = self.rho * stacked @ self.theta.T + eps
        return w_t, V


# ---------------------------------------------------------------------------
# Shifted affine Gaussian (the same prediction, one step ahead)
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShiftedAffineGaussian(_ModelBase):
    """V_t = V_{t+1}(inner): at time t the agent sees the affine prediction
    about W_{t+1}; information about W_t arrived one step earlier as V_{t-1}.

    The last prediction V_{T-1} refers to a phantom disturbance W_T that is
    sampled for distributional consistency but never enters the dynamics.
    """

    inner: AffineGaussian

    max_lookahead = 2

    @property
    def T(self) -> int:
        return self.inner.T

    @property
    def n(self) -> int:
        return self.inner.n

    @property
    def d(self) -> int:
        return self.inner.d

    @property
    def model_id(self) -> str:
        return f"shifted-affine-gaussian(rho={self.inner.rho})"

    def _sample_arrays(self, rng):
        inner = self.inner
        W_ext = rng.standard_normal((self.T + 1, self.n))
        eps = rng.standard_normal((self.T + 1, self.d)) @ inner._noise_chol.T
        V1 = inner.rho * W_ext @ inner.theta.T + eps
        return W_ext[:self.T], V1[1:]

    def conditional_mean_W(self, history: History, tau: int) -> np.ndarray:
        self._check_target(history.t, tau)
        t = history.t
        rho, theta = self.inner.rho, self.inner.theta
        if tau == t:
            if t == 0:
                return np.zeros(self.n)
            return rho * theta.T @ history.v(t - 1)
        if tau == t + 1:
            return rho * theta.T @ history.v(t)
        return np.zeros(self.n)

    def cond_means_future_batch(self, t: int, batch) -> np.ndarray:
        rho, theta = self.inner.rho, self.inner.theta
        N = batch.count
        hi = min(t + 2, self.T)
        means = np.zeros((N, hi - t, self.n))
        if t >= 1:
            means[:, 0] = rho * batch.v_col(t - 1) @ theta
        if t + 1 < self.T:
            means[:, 1] = rho * batch.v_col(t) @ theta
        return means

    def conditional_cov_W(self, t: int, tau: int) -> np.ndarray:
        self._check_target(t, tau)
        reduced = np.eye(self.n) - self.inner.rho ** 2 * self.inner.theta.T @ self.inner.theta
        if tau == t and t >= 1:
            return reduced
        if tau == t + 1:
            return reduced
        return np.eye(self.n)

    def cov_reduction_terms(self, t: int, T: int):
        gram = self.inner.rho ** 2 * self.inner.theta.T @ self.inner.theta
        terms = []
        if t >= 1:
            terms.append((t, t, gram))
        if t + 1 < T:
            terms.append((t + 1, t + 1, gram))
        return terms


# ---------------------------------------------------------------------------
# One-dimensional multi-step example
# ---------------------------------------------------------------------------

def _scalar_unit_constants() -> tuple[float, float]:
    """(P, A' - A'PH) for the scalar system A = B = Q = R = 1 at the DARE
    fixed point: P is the golden ratio and the closed-loop factor is 1/(1+P)."""
    P = float(dare_fixed_point(1.0, 1.0, 1.0, 1.0)[0, 0])
    return P, 1.0 - P / (1.0 + P)


@dataclass(frozen=True, eq=False)
class MultiStep1D(_ModelBase):
    """W_t = W_t^(0) + W_t^(1) + W_t^(2), independent scalar components.

    variant 1: V_t = (W_t^(1), W_{t+1}^(0)) -- components revealed directly.
    variant 2: V_t = P (W_t^(0) + W_t^(1)) + (A'-A'PH) P W_{t+1}^(0) -- the
               exact scalar summary the optimal action uses, and nothing else.

    Conditional moments come from exact joint-Gaussian conditioning on the
    full history; the per-(t, tau) gain vectors are cached on the model.
    """

    T: int
    variances: tuple = (1.0, 1.0, 1.0)
    variant: int = 1

    n: int = field(init=False, default=1)
    max_lookahead = 2

    def __post_init__(self):
        var = tuple(float(v) for v in self.variances)
        if len(var) != 3 or any(v <= 0 for v in var):
            raise InvalidModel("variances must be 3 positive scalars")
        if self.variant not in (1, 2):
            raise InvalidModel(f"variant must be 1 or 2, got {self.variant}")
        object.__setattr__(self, "variances", var)
        P, factor = _scalar_unit_constants()
        object.__setattr__(self, "_coefP", P)
        object.__setattr__(self, "_coef_next", factor * P)
        object.__setattr__(self, "_gain_cache", {})
        object.__setattr__(self, "_cov_cache", {})

    @property
    def d(self) -> int:
        return 2 if self.variant == 1 else 1

    @property
    def model_id(self) -> str:
        return f"multistep-1d(variant={self.variant})"

    def _sample_arrays(self, rng):
        scales = np.sqrt(np.asarray(self.variances))
        C = rng.standard_normal((self.T + 1, 3)) * scales
        W = C[:self.T].sum(axis=1, keepdims=True)
        if self.variant == 1:
            V = np.column_stack([C[:self.T, 1], C[1:self.T + 1, 0]])
        else:
            V = (self._coefP * (C[:self.T, 0] + C[:self.T, 1])
                 + self._coef_next * C[1:self.T + 1, 0])[:, None]
        return W, V

    # -- joint-Gaussian bookkeeping -------------------------------------
    # Every observable/target scalar is a linear functional of the
    # independent components C[s, i]; covariances follow from coefficient
    # inner products weighted by the component variances.

    def _component_rows(self, t: int):
        """Coefficient matrix of the observation vector at time t over the
        components C[0..t+1, 0..2], flattened as 3*s + i."""
        width = 3 * (t + 2)
        rows = []
        for s in range(t):          # observed disturbances W_0 .. W_{t-1}
            row = np.zeros(width)
            row[3 * s: 3 * s + 3] = 1.0
            rows.append(row)
        for s in range(t + 1):      # observed predictions V_0 .. V_t
            if self.variant == 1:
                r1 = np.zeros(width)
                r1[3 * s + 1] = 1.0
                r2 = np.zeros(width)
                r2[3 * (s + 1) + 0] = 1.0
                rows.extend([r1, r2])
            else:
                row = np.zeros(width)
                row[3 * s + 0] = self._coefP
                row[3 * s + 1] = self._coefP
                row[3 * (s + 1) + 0] = self._coef_next
                rows.append(row)
        return np.array(rows) if rows else np.zeros((0, width))

    def _target_row(self, tau: int, width: int) -> np.ndarray:
        row = np.zeros(width)
        row[3 * tau: 3 * tau + 3] = 1.0
        return row

    def _obs_vector(self, history: History) -> np.ndarray:
        return np.concatenate([history.past_W.ravel(), history.past_V.ravel()])

    def _gains(self, t: int) -> dict:
        """Conditioning gains and covariances for targets W_t, W_{t+1}."""
        cached = self._gain_cache.get(t)
        if cached is not None:
            return cached
        obs = self._component_rows(t)
        width = obs.shape[1]
        var = np.tile(np.asarray(self.variances), width // 3)
        taus = [tau for tau in (t, t + 1) if tau < self.T]
        targets = np.array([self._target_row(tau, width) for tau in taus])
        prior = (targets * var) @ targets.T
        if obs.shape[0] == 0:
            gains = np.zeros((len(taus), 0))
            cond = prior
        else:
            gram = (obs * var) @ obs.T
            cross = (targets * var) @ obs.T
            sol = np.linalg.solve(gram, cross.T)            # (n_obs, n_targets)
            gains = sol.T
            cond = prior - cross @ sol
        out = {"taus": taus, "gains": gains, "prior": prior, "cond": cond}
        self._gain_cache[t] = out
        return out

    def conditional_mean_W(self, history: History, tau: int) -> np.ndarray:
        self._check_target(history.t, tau)
        t = history.t
        if tau > t + 1:
            return np.zeros(1)
        g = self._gains(t)
        idx = g["taus"].index(tau)
        return np.array([float(g["gains"][idx] @ self._obs_vector(history))])

    def cond_means_future_batch(self, t: int, batch) -> np.ndarray:
        g = self._gains(t)
        obs = batch.obs_matrix(t)
        return (obs @ g["gains"].T)[:, :, None]

    def conditional_cov_W(self, t: int, tau: int) -> np.ndarray:
        self._check_target(t, tau)
        if tau > t + 1:
            return np.array([[sum(self.variances)]])
        g = self._gains(t)
        idx = g["taus"].index(tau)
        return g["cond"][idx:idx + 1, idx:idx + 1].copy()

    def cov_reduction_terms(self, t: int, T: int):
        g = self._gains(t)
        taus, prior, cond = g["taus"], g["prior"], g["cond"]
        terms = []
        for a in range(len(taus)):
            for b in range(a, len(taus)):
                D = np.array([[prior[a, b] - cond[a, b]]])
                if abs(D[0, 0]) > 1e-15:
                    terms.append((taus[a], taus[b], D))
        return terms


# ---------------------------------------------------------------------------
# Binary perfect revelation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinaryPerfect(_ModelBase):
    """W_t uniform on {-1, +1} per coordinate, revealed exactly: V_t = W_t."""

    T: int
    n: int = 1

    max_lookahead = 1

    @property
    def d(self) -> int:
        return self.n

    @property
    def model_id(self) -> str:
        return f"binary-perfect(n={self.n})"

    def _sample_arrays(self, rng):
        W = rng.integers(0, 2, size=(self.T, self.n)).astype(float) * 2.0 - 1.0
        return W, W.copy()

    def conditional_mean_W(self, history: History, tau: int) -> np.ndarray:
        self._check_target(history.t, tau)
        if tau == history.t:
            return history.v(history.t).copy()
        return np.zeros(self.n)

    def cond_means_future_batch(self, t: int, batch) -> np.ndarray:
        return batch.v_col(t)[:, None, :]

    def conditional_cov_W(self, t: int, tau: int) -> np.ndarray:
        self._check_target(t, tau)
        if tau == t:
            return np.zeros((self.n, self.n))
        return np.eye(self.n)

    def cov_reduction_terms(self, t: int, T: int):
        return [(t, t, np.eye(self.n))]

    def sample_completion(self, history, rng):
        t, T = history.t, self.T
        W = np.zeros((T, self.n))
        W[:t] = history.past_W
        W[t] = history.v(t)
        if t + 1 < T:
            W[t + 1:] = rng.integers(0, 2, size=(T - t - 1, self.n)).astype(float) * 2 - 1
        return ProblemInstance(W=W, V=W.copy(), predictor_id=self.model_id)

    def sample_theta_view_given_w_prefix(self, w_prefix, rng):
        t = w_prefix.shape[0]
        w_t = rng.integers(0, 2, size=self.n).astype(float) * 2 - 1
        V = np.vstack([w_prefix, w_t[None, :]])
        return w_t, V


# ---------------------------------------------------------------------------
# Sampling entry points
# ---------------------------------------------------------------------------

def sample_instance(model, seed: int) -> ProblemInstance:
    """Draw one problem instance; deterministic given (model, seed)."""
    return model.sample(derive_rng(seed, 0))


def sample_dataset(model, count: int, master_seed: int) -> InstanceDataset:
    """Draw `count` independent instances with per-index derived streams."""
    if count < 1:
        raise DimensionMismatch("count must be >= 1")
    W = np.empty((count, model.T, model.n))
    V = np.empty((count, model.T, model.d))
    for i in range(count):
        inst = model.sample(derive_rng(master_seed, i))
        W[i] = inst.W
        V[i] = inst.V
    return InstanceDataset(W=W, V=V, predictor_id=model.model_id,
                           master_seed=master_seed)


def conditional_mean_W(model, history: History, tau: int) -> np.ndarray:
    """E[W_tau | I_t = history] for tau >= t."""
    return model.conditional_mean_W(history, tau)


def conditional_cov_W(model, t: int, tau: int) -> np.ndarray:
    """Cov(W_tau | I_t); realization-independent for the Gaussian families."""
    return model.conditional_cov_W(t, tau)


def mse_per_entry(model, dataset: InstanceDataset,
                  split: tuple = (0.70, 0.10, 0.20)) -> np.ndarray:
    """Per-entry test MSE of a linear regression from V_t to W_t.

    Rows are pooled over instances and time steps (the affine families are
    i.i.d. across t), split contiguously, and fit with the shared ridge
    regressor.  Needs at least 100 pooled rows.
    """
    from .errors import InsufficientData
    from .estimation import mse_per_entry as _pooled_mse

    rows = dataset.count * dataset.T
    if rows < 100:
        raise InsufficientData(f"need >= 100 pooled rows, got {rows}")
    V_rows = dataset.V.reshape(rows, -1)
    W_rows = dataset.W.reshape(rows, -1)
    return _pooled_mse(V_rows, W_rows, split)
