"""Exact finite-horizon time-varying LQR machinery.

Dynamics x_{t+1} = A_t x_t + B_t u_t + w_t with stage cost
x'Q_t x + u'R_t u and terminal cost x'P_T x.  The backward recursion

    M_t = R_t + B_t' P_{t+1} B_t
    H_t = B_t M_t^{-1} B_t'
    K_t = M_t^{-1} B_t' P_{t+1} A_t
    P_t = Q_t + A_t' P_{t+1} A_t - A_t' P_{t+1} H_t P_{t+1} A_t

yields the optimal feedback gain K_t and cost-to-go matrix P_t.  The
optimal predictive action is -K_t x plus a feedforward term driven by
conditional means of future disturbances, weighted by the closed-loop
transition matrices Phi_{t2,t1} = F_{t2-1} ... F_{t1}, F_t = A_t - B_t K_t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonInvertible, UnsupportedPredictor

PD_EIG_TOL = 1e-10
COND_LIMIT = 1e12
DEFAULT_MATRIX_ATOL = 1e-8
DEFAULT_COST_RTOL = 1e-6


def symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def assert_pd(mat: np.ndarray, name: str, tol: float = PD_EIG_TOL,
              allow_semidefinite: bool = False) -> None:
    """Check symmetry and positive (semi)definiteness via smallest eigenvalue."""
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {mat.shape}")
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise DimensionMismatch(f"{name} must be symmetric")
    smallest = float(np.linalg.eigvalsh(mat)[0])
    floor = -tol if allow_semidefinite else tol
    if smallest < floor:
        kind = "positive semidefinite" if allow_semidefinite else "positive definite"
        raise DimensionMismatch(
            f"{name} must be {kind}: smallest eigenvalue {smallest:.3e}")


def _stack(mats, T: int, name: str) -> np.ndarray:
    """Accept a single matrix (broadcast over t) or a length-T sequence."""
    arr = np.asarray(mats, dtype=float)
    if arr.ndim == 2:
        return np.broadcast_to(arr, (T,) + arr.shape)
    if arr.ndim == 3:
        if arr.shape[0] != T:
            raise DimensionMismatch(f"{name} has {arr.shape[0]} entries, expected {T}")
        return arr
    raise DimensionMismatch(f"{name} must be a matrix or a sequence of matrices")


@dataclass(frozen=True)
class LTVSystem:
    """Linear time-varying system with quadratic costs.

    A, B, Q, R may be given as single matrices (time-invariant) or as
    length-T sequences.  Q_t, R_t and P_T must be symmetric positive
    definite; ``allow_semidefinite_r`` relaxes the R check to PSD for
    degenerate instances with no control cost (the Riccati recursion is
    still well posed as long as R_t + B_t'P_{t+1}B_t stays invertible).
    """

    T: int
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P_T: np.ndarray
    x0: np.ndarray
    allow_semidefinite_r: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise DimensionMismatch("horizon T must be a positive integer")
        T = self.T
        object.__setattr__(self, "A", _stack(self.A, T, "A"))
        object.__setattr__(self, "B", _stack(self.B, T, "B"))
        object.__setattr__(self, "Q", _stack(self.Q, T, "Q"))
        object.__setattr__(self, "R", _stack(self.R, T, "R"))
        object.__setattr__(self, "P_T", np.asarray(self.P_T, dtype=float))
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        n, m = self.n, self.m
        if self.A.shape[1:] != (n, n):
            raise DimensionMismatch(f"A entries must be {n}x{n}")
        if self.B.shape[1:] != (n, m):
            raise DimensionMismatch(f"B entries must be {n}x{m}")
        if self.Q.shape[1:] != (n, n):
            raise DimensionMismatch(f"Q entries must be {n}x{n}")
        if self.R.shape[1:] != (m, m):
            raise DimensionMismatch(f"R entries must be {m}x{m}")
        if self.x0.shape != (n,):
            raise DimensionMismatch(f"x0 must have length {n}")
        for t in range(T):
            assert_pd(self.Q[t], f"Q[{t}]")
            assert_pd(self.R[t], f"R[{t}]",
                      allow_semidefinite=self.allow_semidefinite_r)
        assert_pd(self.P_T, "P_T")

    @property
    def n(self) -> int:
        return self.P_T.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    def to_dict(self) -> dict:
        def compact(arr):
            first = arr[0]
            if all(np.array_equal(first, arr[t]) for t in range(self.T)):
                return first.tolist()
            return arr.tolist()

        return {
            "T": self.T,
            "A": compact(self.A),
            "B": compact(self.B),
            "Q": compact(self.Q),
            "R": compact(self.R),
            "P_T": self.P_T.tolist(),
            "x0": self.x0.tolist(),
            "allow_semidefinite_r": self.allow_semidefinite_r,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LTVSystem":
        return cls(
            T=int(doc["T"]),
            A=doc["A"], B=doc["B"], Q=doc["Q"], R=doc["R"],
            P_T=doc["P_T"], x0=doc["x0"],
            allow_semidefinite_r=bool(doc.get("allow_semidefinite_r", False)),
        )


class PhiTable:
    """Closed-loop transition matrices Phi_{t2,t1} for 0 <= t1 <= t2 <= T.

    Phi_{t,t} = I and Phi_{t2,t1} = F_{t2-1} Phi_{t2-1,t1} with
    F_t = A_t - B_t K_t.  Entries are built on demand and cached, so the
    dense O(T^2) table is only ever materialized by callers that request
    all of it (fine at small T; policy rollouts only touch a short band).
    """

    def __init__(self, F: np.ndarray):
        self._F = F
        self._n = F.shape[1]
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    @property
    def T(self) -> int:
        return self._F.shape[0]

    def __call__(self, t2: int, t1: int) -> np.ndarray:
        if not (0 <= t1 <= self.T and 0 <= t2 <= self.T):
            raise DimensionMismatch(f"Phi indices out of range: ({t2}, {t1})")
        if t2 <= t1:
            return np.eye(self._n)
        key = (t2, t1)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        mat = self._F[t2 - 1] @ self(t2 - 1, t1)
        self._cache[key] = mat
        return mat


@dataclass(frozen=True)
class RiccatiSolution:
    """Output of the backward recursion.

    P has T+1 entries (P[T] = terminal weight), K/H/Minv/M/F have T.
    Minv stores (R_t + B_t'P_{t+1}B_t)^{-1}; M its inverse's inverse,
    kept because every power formula weighs action covariances by it.
    """

    P: np.ndarray
    K: np.ndarray
    H: np.ndarray
    Minv: np.ndarray
    M: np.ndarray
    F: np.ndarray
    Phi: PhiTable = field(repr=False)

    @property
    def T(self) -> int:
        return self.K.shape[0]


def _spd_inverse(mat: np.ndarray, label: str, cond_limit: float) -> np.ndarray:
    """Invert a symmetric PD matrix via Cholesky with a condition guard."""
    eigs = np.linalg.eigvalsh(symmetrize(mat))
    if eigs[0] <= 0 or eigs[-1] / max(eigs[0], np.finfo(float).tiny) > cond_limit:
        raise NonInvertible(
            f"{label} is numerically singular (eigenvalues in "
            f"[{eigs[0]:.3e}, {eigs[-1]:.3e}])")
    try:
        chol = np.linalg.cholesky(symmetrize(mat))
    except np.linalg.LinAlgError as exc:
        raise NonInvertible(f"{label} failed Cholesky factorization") from exc
    inv = np.linalg.solve(chol.T, np.linalg.solve(chol, np.eye(mat.shape[0])))
    return symmetrize(inv)


def riccati_backward(system: LTVSystem, cond_limit: float = COND_LIMIT) -> RiccatiSolution:
    """Run the backward recursion from P_T and fill the Phi table lazily."""
    T, n, m = system.T, system.n, system.m
    P = np.empty((T + 1, n, n))
    K = np.empty((T, m, n))
    H = np.empty((T, n, n))
    Minv = np.empty((T, m, m))
    M = np.empty((T, m, m))
    F = np.empty((T, n, n))
    P[T] = symmetrize(system.P_T)
    for t in range(T - 1, -1, -1):
        A, B = system.A[t], system.B[t]
        M[t] = symmetrize(system.R[t] + B.T @ P[t + 1] @ B)
        Minv[t] = _spd_inverse(M[t], f"R[{t}] + B'P B", cond_limit)
        H[t] = symmetrize(B @ Minv[t] @ B.T)
        K[t] = Minv[t] @ (B.T @ P[t + 1] @ A)
        P[t] = symmetrize(system.Q[t] + A.T @ P[t + 1] @ A
                          - A.T @ P[t + 1] @ H[t] @ P[t + 1] @ A)
        F[t] = A - B @ K[t]
    return RiccatiSolution(P=P, K=K, H=H, Minv=Minv, M=M, F=F, Phi=PhiTable(F))


def dare_fixed_point(A, B, Q, R, tol: float = 1e-12, max_iter: int = 200000) -> np.ndarray:
    """Fixed point of the time-invariant recursion, by iteration from Q."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = Q.copy()
    for _ in range(max_iter):
        M = R + B.T @ P @ B
        K = np.linalg.solve(M, B.T @ P @ A)
        P_next = symmetrize(Q + A.T @ P @ A - A.T @ P @ B @ K)
        if np.max(np.abs(P_next - P)) < tol:
            return P_next
        P = P_next
    raise NonInvertible("DARE fixed-point iteration did not converge")


def _weighted_disturbance_sum(riccati: RiccatiSolution, t: int,
                              w_seq: np.ndarray) -> np.ndarray:
    """sum_{tau=t}^{t+L-1} Phi_{tau+1,t+1}' P_{tau+1} w_tau by backward accumulation."""
    L = w_seq.shape[0]
    n = riccati.P.shape[1]
    s = np.zeros(n)
    for j in range(L - 1, -1, -1):
        tau = t + j
        if j < L - 1:
            s = riccati.F[tau + 1].T @ s
        s = riccati.P[tau + 1] @ w_seq[j] + s
    return s


def _check_disturbance_window(system: LTVSystem, t: int, seq) -> np.ndarray:
    if not (0 <= t < system.T):
        raise DimensionMismatch(f"time index {t} outside [0, {system.T})")
    arr = np.asarray(seq, dtype=float)
    if arr.size == 0:
        return np.zeros((0, system.n))
    if arr.ndim == 1:
        arr = arr.reshape(-1, system.n) if system.n == 1 else arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != system.n:
        raise DimensionMismatch(f"disturbance entries must be length-{system.n} vectors")
    if arr.shape[0] > system.T - t:
        raise DimensionMismatch(
            f"got {arr.shape[0]} disturbance rows at t={t}, at most {system.T - t} allowed")
    return arr


def optimal_feedforward(riccati: RiccatiSolution, system: LTVSystem, t: int,
                        cond_means) -> np.ndarray:
    """Feedforward part of the optimal predictive action.

    cond_means holds E[W_tau | I_t] for tau = t, t+1, ...; trailing
    all-zero entries may be omitted (they contribute nothing to the sum).
    """
    means = _check_disturbance_window(system, t, cond_means)
    s = _weighted_disturbance_sum(riccati, t, means)
    return -(riccati.Minv[t] @ (system.B[t].T @ s))


def optimal_action(riccati: RiccatiSolution, system: LTVSystem, t: int,
                   x: np.ndarray, cond_means) -> np.ndarray:
    """Optimal predictive action -K_t x + feedforward(cond_means)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape != (system.n,):
        raise DimensionMismatch(f"state must have length {system.n}")
    return -(riccati.K[t] @ x) + optimal_feedforward(riccati, system, t, cond_means)


def surrogate_optimal_action(riccati: RiccatiSolution, system: LTVSystem, t: int,
                             w_realized) -> np.ndarray:
    """Action optimal under oracle knowledge of the realized w_{t:T-1}.

    Same formula as the feedforward with conditional means replaced by
    realized disturbances; this is the regression target used by the
    data-driven power estimator.
    """
    w = _check_disturbance_window(system, t, w_realized)
    s = _weighted_disturbance_sum(riccati, t, w)
    return -(riccati.Minv[t] @ (system.B[t].T @ s))


def surrogate_actions_batch(riccati: RiccatiSolution, system: LTVSystem,
                            W: np.ndarray) -> np.ndarray:
    """Surrogate-optimal actions for a batch of disturbance sequences.

    W has shape (N, T, n); the result has shape (N, T, m).  Uses the
    backward accumulation s_t = P_{t+1} w_t + F_{t+1}' s_{t+1}, vectorized
    over instances.
    """
    W = np.asarray(W, dtype=float)
    single = W.ndim == 2
    if single:
        W = W[None]
    N, T, n = W.shape
    if T != system.T or n != system.n:
        raise DimensionMismatch(f"W must have shape (N, {system.T}, {system.n})")
    U = np.empty((N, T, system.m))
    s = np.zeros((N, n))
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            s = s @ riccati.F[t + 1]
        s = W[:, t] @ riccati.P[t + 1].T + s
        U[:, t] = -(s @ (system.B[t] @ riccati.Minv[t]))
    return U[0] if single else U


def action_disturbance_map(riccati: RiccatiSolution, system: LTVSystem,
                           t: int, tau: int) -> np.ndarray:
    """L_{t,tau} = M_t^{-1} B_t' Phi_{tau+1,t+1}' P_{tau+1}.

    The surrogate-optimal action is u_t = -sum_tau L_{t,tau} w_tau.
    """
    if not (0 <= t <= tau < system.T):
        raise DimensionMismatch(f"need 0 <= t <= tau < T, got t={t}, tau={tau}")
    phi = riccati.Phi(tau + 1, t + 1)
    return riccati.Minv[t] @ system.B[t].T @ phi.T @ riccati.P[tau + 1]


def prediction_power_closed_form(system: LTVSystem, riccati: RiccatiSolution,
                                 predictor) -> float:
    """P(theta) = sum_t Tr{M_t E[Cov(u_t^theta | F_t(0))]} for analytic models.

    The expected conditional covariance is assembled from the predictor's
    per-step conditional-covariance reductions of the disturbance stack
    (the difference Cov(W | baseline history) - Cov(W | theta history)),
    following the total-covariance decomposition of the surrogate action.
    """
    terms_fn = getattr(predictor, "cov_reduction_terms", None)
    if terms_fn is None:
        raise UnsupportedPredictor(
            f"{type(predictor).__name__} does not expose analytic conditional "
            "second moments")
    T, m = system.T, system.m
    total = 0.0
    for t in range(T):
        C = np.zeros((m, m))
        for tau, tau2, D in terms_fn(t, T):
            if not (t <= tau <= tau2 < T):
                raise DimensionMismatch(
                    f"reduction term ({tau},{tau2}) outside [t={t}, T={T})")
            L1 = action_disturbance_map(riccati, system, t, tau)
            L2 = L1 if tau2 == tau else action_disturbance_map(riccati, system, t, tau2)
            block = L1 @ D @ L2.T
            C += block if tau == tau2 else block + block.T
        total += float(np.trace(riccati.M[t] @ C))
    return max(total, 0.0)
