"""Data-driven prediction-power evaluation.

The pipeline regresses surrogate-optimal actions on history features with
a ridge-regularized linear model, averages test-split residual outer
products (the expected-conditional-covariance estimator), and differences
the baseline-view and theta-view covariances weighted by M_t.  The
total-covariance identity that justifies the difference is checkable on
labeled samples via within-group moments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (EmptyCell, HistoryFeatureOverflow, InsufficientData,
                     RankDeficient, ShapeMismatch)
from .lqr import LTVSystem, RiccatiSolution, riccati_backward, surrogate_actions_batch


# ---------------------------------------------------------------------------
# Datasets and regressors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegressionDataset:
    """Supervised pairs with a contiguous train/val/test split.

    The split is by position, so results are deterministic given the row
    order; shuffle upstream if rows are not already exchangeable.
    """

    inputs: np.ndarray
    targets: np.ndarray
    split: tuple = (0.70, 0.10, 0.20)

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        Y = np.asarray(self.targets, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "targets", Y)
        if X.shape[0] != Y.shape[0]:
            raise ShapeMismatch("inputs and targets must have equal row counts")
        fr = tuple(float(f) for f in self.split)
        if len(fr) != 3 or any(f <= 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ShapeMismatch("split fractions must be positive and sum to 1")
        object.__setattr__(self, "split", fr)
        if int(X.shape[0] * fr[2]) < 30:
            raise InsufficientData(
                f"test split would hold {int(X.shape[0] * fr[2])} rows; need >= 30")

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def _bounds(self) -> tuple[int, int]:
        n_train = int(round(self.count * self.split[0]))
        n_val = int(round(self.count * self.split[1]))
        return n_train, n_train + n_val

    def train(self):
        k, _ = self._bounds()
        return self.inputs[:k], self.targets[:k]

    def val(self):
        k, j = self._bounds()
        return self.inputs[k:j], self.targets[k:j]

    def test(self):
        _, j = self._bounds()
        return self.inputs[j:], self.targets[j:]


@dataclass(frozen=True)
class LinearRegressor:
    weights: np.ndarray   # (p, q)
    intercept: np.ndarray  # (q,)
    ridge: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.intercept))):
            raise ShapeMismatch("regressor coefficients must be finite")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return X @ self.weights + self.intercept


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    count: int

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if not np.allclose(M, M.T, atol=1e-10):
            raise ShapeMismatch("covariance estimate must be symmetric within 1e-10")
        eigs, vecs = np.linalg.eigh(0.5 * (M + M.T))
        if eigs.min() < -1e-8:
            raise ShapeMismatch(
                f"covariance estimate has eigenvalue {eigs.min():.3e} < -1e-8")
        clipped = (vecs * np.clip(eigs, 0.0, None)) @ vecs.T
        object.__setattr__(self, "matrix", 0.5 * (clipped + clipped.T))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))


RIDGE_GRID = (0.0, 1e-6, 1e-4, 1e-2)


def _solve_normal(Xc: np.ndarray, Yc: np.ndarray, lam: float) -> Optional[np.ndarray]:
    p = Xc.shape[1]
    gram = Xc.T @ Xc + lam * np.eye(p)
    eigs = np.linalg.eigvalsh(gram)
    # numerically singular: collinear features survive Cholesky via roundoff
    if eigs[0] <= p * np.finfo(float).eps * max(eigs[-1], 1.0):
        return None
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        return None
    return np.linalg.solve(chol.T, np.linalg.solve(chol, Xc.T @ Yc))


def fit_linear(dataset: RegressionDataset,
               ridge_grid: Sequence[float] = RIDGE_GRID) -> LinearRegressor:
    """Least squares with the ridge weight picked by validation MSE.

    Ties resolve to the earlier grid entry, so the fit is deterministic
    given the dataset order.  RankDeficient is raised only when the
    unregularized normal system is singular and no ridge candidate does
    better on validation than predicting the train mean.
    """
    X_tr, Y_tr = dataset.train()
    X_val, Y_val = dataset.val()
    n_tr, p = X_tr.shape
    q = Y_tr.shape[1]
    if n_tr < p + 1:
        raise InsufficientData(f"need at least p+1={p + 1} train rows, got {n_tr}")

    y_mean = Y_tr.mean(axis=0)
    if p == 0:
        return LinearRegressor(weights=np.zeros((0, q)), intercept=y_mean, ridge=0.0)
    x_mean = X_tr.mean(axis=0)
    Xc, Yc = X_tr - x_mean, Y_tr - y_mean

    mean_val_mse = float(np.mean((Y_val - y_mean) ** 2)) if len(Y_val) else np.inf
    singular_at_zero = False
    best = None
    for lam in ridge_grid:
        W = _solve_normal(Xc, Yc, lam)
        if W is None:
            if lam == 0.0:
                singular_at_zero = True
            continue
        pred = (X_val - x_mean) @ W + y_mean
        val_mse = float(np.mean((Y_val - pred) ** 2)) if len(Y_val) else 0.0
        if best is None or val_mse < best[0]:
            best = (val_mse, lam, W)
    if best is None or (singular_at_zero and best[0] >= mean_val_mse):
        raise RankDeficient(
            "normal equations singular at lambda=0 and no ridge candidate "
            "improves on the mean predictor")
    _, lam, W = best
    return LinearRegressor(weights=W, intercept=y_mean - x_mean @ W, ridge=lam)


def ecce(dataset: RegressionDataset,
         ridge_grid: Sequence[float] = RIDGE_GRID) -> CovarianceEstimate:
    """Expected conditional covariance: fit on train (validated on val),
    then average residual outer products over the held-out test split."""
    reg = fit_linear(dataset, ridge_grid)
    X_te, Y_te = dataset.test()
    resid = Y_te - reg.predict(X_te)
    sigma = resid.T @ resid / resid.shape[0]
    return CovarianceEstimate(matrix=0.5 * (sigma + sigma.T), count=resid.shape[0])


# ---------------------------------------------------------------------------
# History featurization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HistoryFeatureConfig:
    """Window of recent observations used as regression features.

    The implemented predictor families have one-step-local dependence, so
    a short window (current + previous prediction, previous disturbance)
    is sufficient; full-history featurization is available for audit runs
    at small T.
    """

    n_predictions: int = 2
    n_disturbances: int = 1
    full_history: bool = False
    max_features: int = 4096


def history_features(W: np.ndarray, V: np.ndarray, t: int,
                     config: HistoryFeatureConfig, view: str) -> np.ndarray:
    """Feature matrix (N, p) built from rows observable at time t.

    view='theta' uses predictions V_{t}, V_{t-1}, ... plus past disturbances;
    view='baseline' uses past disturbances only (the baseline's predictions
    are identically zero and carry no information).
    """
    if view not in ("theta", "baseline"):
        raise ShapeMismatch(f"unknown view {view!r}")
    N = W.shape[0]
    cols = []
    if config.full_history:
        if view == "theta":
            cols.append(V[:, :t + 1].reshape(N, -1))
        cols.append(W[:, :t].reshape(N, -1))
    else:
        if view == "theta":
            lo = max(t - config.n_predictions + 1, 0)
            for tau in range(t, lo - 1, -1):
                cols.append(V[:, tau])
        lo = max(t - config.n_disturbances, 0)
        for tau in range(t - 1, lo - 1, -1):
            cols.append(W[:, tau])
    feats = np.concatenate(cols, axis=1) if cols else np.zeros((N, 0))
    if feats.shape[1] > config.max_features:
        raise HistoryFeatureOverflow(
            f"{feats.shape[1]} features exceed the budget {config.max_features}")
    return feats


# ---------------------------------------------------------------------------
# Algorithm: prediction power from historical instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerEvaluation:
    estimate: float
    per_step: list  # dicts: t, trace_term_baseline, trace_term_theta, m_min_eig
    count: int

    @property
    def baseline_total(self) -> float:
        return sum(row["trace_term_baseline"] for row in self.per_step)

    @property
    def theta_total(self) -> float:
        return sum(row["trace_term_theta"] for row in self.per_step)


def prediction_power_evaluate(system: LTVSystem, W: np.ndarray, V: np.ndarray,
                              split: tuple = (0.70, 0.10, 0.20),
                              features: HistoryFeatureConfig = HistoryFeatureConfig(),
                              riccati: Optional[RiccatiSolution] = None,
                              min_instances: int = 1000) -> PowerEvaluation:
    """Backward pass over t: regress surrogate-optimal actions on the
    baseline-view and theta-view history features, difference the ECCE
    covariances under the M_t = R_t + B_t'P_{t+1}B_t weights, and sum."""
    W = np.asarray(W, dtype=float)
    V = np.asarray(V, dtype=float)
    if W.ndim != 3 or V.ndim != 3 or W.shape[:2] != V.shape[:2]:
        raise ShapeMismatch("W and V must be (N, T, dim) arrays over the same instances")
    N, T = W.shape[:2]
    if N < min_instances:
        raise InsufficientData(f"need >= {min_instances} instances, got {N}")
    if T != system.T:
        raise ShapeMismatch(f"instances have horizon {T}, system expects {system.T}")
    rc = riccati if riccati is not None else riccati_backward(system)
    U_star = surrogate_actions_batch(rc, system, W)
    per_step = []
    total = 0.0
    for t in range(T - 1, -1, -1):
        targets = U_star[:, t]
        M_t = rc.M[t]
        m_min = float(np.linalg.eigvalsh(M_t)[0])
        feats0 = history_features(W, V, t, features, view="baseline")
        featsq = history_features(W, V, t, features, view="theta")
        sigma0 = ecce(RegressionDataset(feats0, targets, split))
        sigmaq = ecce(RegressionDataset(featsq, targets, split))
        term0 = float(np.trace(M_t @ sigma0.matrix))
        termq = float(np.trace(M_t @ sigmaq.matrix))
        per_step.append({"t": t, "trace_term_baseline": term0,
                         "trace_term_theta": termq, "m_min_eig": m_min})
        total += term0 - termq
    per_step.reverse()
    return PowerEvaluation(estimate=total, per_step=per_step, count=N)


def prediction_power_evaluate_from_files(system: LTVSystem, prefix: str,
                                         **kwargs) -> PowerEvaluation:
    """Evaluate from a persisted instance dataset (binary payload + sidecar)."""
    from .reporting import load_dataset
    ds = load_dataset(prefix)
    return prediction_power_evaluate(system, ds.W, ds.V, **kwargs)


def prediction_power_evaluate_replicated(system: LTVSystem, model, count: int,
                                         replicates: int, master_seed: int,
                                         **kwargs) -> tuple[float, float, list]:
    """Mean and standard error of the power estimate over independently
    sampled replicate datasets (each a fresh draw of `count` instances)."""
    from .predictors import sample_dataset
    if replicates < 2:
        raise InsufficientData("need >= 2 replicates for a standard error")
    estimates = []
    for r in range(replicates):
        ds = sample_dataset(model, count, master_seed + 7919 * r)
        ev = prediction_power_evaluate(system, ds.W, ds.V, **kwargs)
        estimates.append(ev.estimate)
    arr = np.asarray(estimates)
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(replicates)), estimates


def per_step_history_mse(W: np.ndarray, V: np.ndarray,
                         split: tuple = (0.70, 0.10, 0.20),
                         features: HistoryFeatureConfig = HistoryFeatureConfig(),
                         horizon_offsets: tuple = (0, 1)) -> dict:
    """Test MSE of predicting W_{t+k} from the time-t history features, per t.

    Returns {offset: array over valid t} -- the per-step accuracy series
    used to contrast predictors whose prediction powers coincide.
    """
    N, T = W.shape[:2]
    out = {}
    for k in horizon_offsets:
        series = np.full(T - k if k else T, np.nan)
        for t in range(0, T - k):
            feats = history_features(W, V, t, features, view="theta")
            reg_ds = RegressionDataset(feats, W[:, t + k], split)
            reg = fit_linear(reg_ds)
            X_te, Y_te = reg_ds.test()
            series[t] = float(np.mean((Y_te - reg.predict(X_te)) ** 2))
        out[k] = series
    return out


def mse_per_entry(V_rows: np.ndarray, W_rows: np.ndarray,
                  split: tuple = (0.70, 0.10, 0.20)) -> np.ndarray:
    """Per-entry test MSE of the linear regression V -> W on pooled rows."""
    ds = RegressionDataset(V_rows, W_rows, split)
    reg = fit_linear(ds)
    X_te, Y_te = ds.test()
    return np.mean((Y_te - reg.predict(X_te)) ** 2, axis=0)


# ---------------------------------------------------------------------------
# Law of total covariance on labeled samples
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TotalCovarianceCheck:
    cov_of_means: np.ndarray     # E[Cov(E[X|F'] | F)]
    cov_given_coarse: np.ndarray  # E[Cov(X|F)]
    cov_given_fine: np.ndarray    # E[Cov(X|F')]
    defect: float


def _within_group_cov(X: np.ndarray, labels: np.ndarray):
    """Population (ddof=0) within-cell covariance, cell means and weights."""
    cells = {}
    for lab in np.unique(labels):
        rows = X[labels == lab]
        if rows.shape[0] == 0:
            raise EmptyCell(f"cell {lab!r} is empty")
        cells[lab] = rows
    q = X.shape[1]
    total = np.zeros((q, q))
    means, weights = {}, {}
    for lab, rows in cells.items():
        mu = rows.mean(axis=0)
        centered = rows - mu
        weight = rows.shape[0] / X.shape[0]
        total += weight * (centered.T @ centered) / rows.shape[0]
        means[lab] = mu
        weights[lab] = weight
    return total, means, weights


def total_covariance_check(X: np.ndarray, coarse_labels, fine_labels) -> TotalCovarianceCheck:
    """Estimate the three terms of the total-covariance identity
    E[Cov(E[X|F']|F)] = E[Cov(X|F)] - E[Cov(X|F')] by within-group
    population moments and return the norm of the defect.

    Requires nesting: every fine cell must sit inside one coarse cell.
    With population (ddof=0) moments the identity is exact arithmetic on
    the empirical distribution, so the defect reflects only accumulation
    error.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    coarse = np.asarray(coarse_labels)
    fine = np.asarray(fine_labels)
    if X.shape[0] == 0:
        raise EmptyCell("no samples")
    if coarse.shape[0] != X.shape[0] or fine.shape[0] != X.shape[0]:
        raise ShapeMismatch("labels must align with rows")
    for lab in np.unique(fine):
        owners = np.unique(coarse[fine == lab])
        if owners.shape[0] > 1:
            raise ShapeMismatch(
                f"fine cell {lab!r} spans coarse cells {owners.tolist()}; not nested")

    cov_coarse, _, _ = _within_group_cov(X, coarse)
    cov_fine, fine_means, _ = _within_group_cov(X, fine)

    # E[Cov(E[X|F'] | F)]: covariance of fine-cell means within each coarse cell
    q = X.shape[1]
    mean_rows = np.empty((X.shape[0], q))
    for lab, mu in fine_means.items():
        mean_rows[fine == lab] = mu
    cov_of_means, _, _ = _within_group_cov(mean_rows, coarse)

    defect = float(np.linalg.norm(cov_of_means - (cov_coarse - cov_fine), ord="fro"))
    return TotalCovarianceCheck(cov_of_means=cov_of_means,
                                cov_given_coarse=cov_coarse,
                                cov_given_fine=cov_fine,
                                defect=defect)
