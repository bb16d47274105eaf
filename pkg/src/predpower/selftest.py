"""Quick invariant battery runnable from the CLI.

Each check is a fast, deterministic distillation of a property the test
suite covers in depth; the CLI prints one pass/fail line per check.
"""

from __future__ import annotations

import numpy as np

from . import estimation, lqr, predictors, rollout
from .errors import InformationLeak
from .presets import double_integrator, scalar_unit


def _random_ltv(T: int = 12, seed: int = 0) -> lqr.LTVSystem:
    rng = np.random.default_rng(seed)
    n, m = 2, 1
    A = np.stack([0.9 * rng.standard_normal((n, n)) / np.sqrt(n) + 0.3 * np.eye(n)
                  for _ in range(T)])
    B = np.stack([rng.standard_normal((n, m)) for _ in range(T)])
    mk_pd = lambda: (lambda M: M @ M.T + 0.5 * np.eye(n))(rng.standard_normal((n, n)) * 0.3)
    Q = np.stack([mk_pd() for _ in range(T)])
    R = np.stack([np.eye(m) * (0.5 + rng.random()) for _ in range(T)])
    return lqr.LTVSystem(T=T, A=A, B=B, Q=Q, R=R, P_T=mk_pd(),
                         x0=rng.standard_normal(n))


def check_riccati_fixed_point():
    sysm = scalar_unit(T=6)
    rc = lqr.riccati_backward(sysm)
    gold = (1 + np.sqrt(5)) / 2
    err = float(np.max(np.abs(rc.P[:, 0, 0] - gold)))
    return err < 1e-12, f"max |P_t - golden ratio| = {err:.2e}"


def check_phi_semigroup():
    rc = lqr.riccati_backward(_random_ltv())
    worst = 0.0
    for t1 in range(0, 13, 3):
        for t2 in range(t1, 13, 3):
            for t3 in range(t2, 13, 3):
                gap = np.max(np.abs(rc.Phi(t3, t1) - rc.Phi(t3, t2) @ rc.Phi(t2, t1)))
                worst = max(worst, float(gap))
    return worst < 1e-10, f"max semigroup defect = {worst:.2e}"


def check_mpc_equivalence():
    sysm = double_integrator(T=10)
    rc = lqr.riccati_backward(sysm)
    rng = np.random.default_rng(3)
    x = rng.standard_normal(2)
    means = 0.5 * rng.standard_normal((8, 2))
    ua = lqr.optimal_action(rc, sysm, 2, x, means)
    plan = rollout.certainty_equivalent_plan(rollout.QuadraticCostSpec(sysm),
                                             sysm, 2, x, means, tol=1e-10)
    gap = float(np.max(np.abs(ua - plan[0])))
    return gap < 1e-8, f"|action - first plan entry| = {gap:.2e}"


def check_power_nonnegative():
    sysm = double_integrator(T=20)
    rc = lqr.riccati_backward(sysm)
    vals = []
    for model in (predictors.Baseline(T=20, n=2),
                  predictors.AffineGaussian(T=20, rho=0.0, theta=np.eye(2)),
                  predictors.AffineGaussian(T=20, rho=0.5, theta=np.eye(2)),
                  predictors.ShiftedAffineGaussian(
                      inner=predictors.AffineGaussian(T=20, rho=0.3, theta=np.eye(2)))):
        vals.append(lqr.prediction_power_closed_form(sysm, rc, model))
    ok = all(v >= 0.0 for v in vals)
    return ok, f"powers = {[round(v, 6) for v in vals]}"


def check_replay_determinism():
    sysm = double_integrator(T=30)
    rc = lqr.riccati_backward(sysm)
    model = predictors.AffineGaussian(T=30, rho=0.5, theta=np.eye(2))
    inst = predictors.sample_instance(model, seed=11)
    pol = rollout.OptimalPredictive(rc, sysm, model)
    tr1 = rollout.run_policy(sysm, pol, inst)
    tr2 = rollout.run_policy(sysm, pol, inst)
    same = (np.array_equal(tr1.X, tr2.X) and np.array_equal(tr1.U, tr2.U)
            and tr1.total_cost == tr2.total_cost)
    return same, "bit-identical replay"


def check_information_causality():
    sysm = double_integrator(T=5)
    rc = lqr.riccati_backward(sysm)
    model = predictors.AffineGaussian(T=5, rho=0.5, theta=np.eye(2))
    inst = predictors.sample_instance(model, seed=1)

    class Probe:
        def action(self, t, x, history):
            history.w(t)            # not observable: W_t arrives at t+1
            return np.zeros(1)

    try:
        rollout.run_policy(sysm, Probe(), inst)
        return False, "probe policy read future data without an error"
    except InformationLeak:
        return True, "InformationLeak raised"


def check_batch_matches_loop():
    sysm = double_integrator(T=15)
    rc = lqr.riccati_backward(sysm)
    model = predictors.ShiftedAffineGaussian(
        inner=predictors.AffineGaussian(T=15, rho=0.4, theta=np.eye(2)))
    ds = predictors.sample_dataset(model, 8, master_seed=5)
    pol = rollout.OptimalPredictive(rc, sysm, model)
    batch = rollout.rollout_costs_batch(sysm, pol, ds.W, ds.V)
    loop = np.array([rollout.run_policy(sysm, pol, ds.instance(i)).total_cost
                     for i in range(8)])
    gap = float(np.max(np.abs(batch - loop)))
    return gap < 1e-9, f"max |batch - loop| = {gap:.2e}"


def check_counterexample():
    from fractions import Fraction
    r = rollout.mpc_counterexample(Fraction(1, 10))
    ok = (r["mpc_cost"] == Fraction(19, 60)
          and r["alternative_cost"] == Fraction(1, 10)
          and r["optimal_threshold"] == Fraction(2, 9)
          and r["mpc_suboptimal"])
    return ok, f"mpc={r['mpc_cost']}, alternative={r['alternative_cost']}"


def check_total_covariance_identity():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((4000, 2))
    fine = (X[:, 0] > 0).astype(int) + 2 * (X[:, 1] > 0).astype(int)
    coarse = (X[:, 0] > 0).astype(int)
    res = estimation.total_covariance_check(X, coarse, fine)
    return res.defect < 1e-12, f"defect = {res.defect:.2e}"


def check_paired_variance_reduction():
    sysm = double_integrator(T=40)
    rc = lqr.riccati_backward(sysm)
    model = predictors.AffineGaussian(T=40, rho=0.5, theta=np.eye(2))
    ds = predictors.sample_dataset(model, 400, master_seed=9)
    base = rollout.rollout_costs_batch(sysm, rollout.NoPredictionLQR(rc), ds.W, ds.V)
    pred = rollout.rollout_costs_batch(sysm, rollout.OptimalPredictive(rc, sysm, model),
                                       ds.W, ds.V)
    paired_var = np.var(base - pred, ddof=1)
    unpaired_var = np.var(base, ddof=1) + np.var(pred, ddof=1)
    return paired_var < unpaired_var, (
        f"paired var {paired_var:.1f} < unpaired {unpaired_var:.1f}")


def check_ecce_psd():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((2000, 3))
    Y = X @ rng.standard_normal((3, 2)) + 0.1 * rng.standard_normal((2000, 2))
    est = estimation.ecce(estimation.RegressionDataset(X, Y))
    lam = float(np.linalg.eigvalsh(est.matrix)[0])
    return lam >= 0.0, f"min eigenvalue = {lam:.2e}"


ALL_CHECKS = [
    ("riccati-fixed-point", check_riccati_fixed_point),
    ("phi-semigroup", check_phi_semigroup),
    ("mpc-equivalence", check_mpc_equivalence),
    ("power-nonnegative", check_power_nonnegative),
    ("replay-determinism", check_replay_determinism),
    ("information-causality", check_information_causality),
    ("batch-matches-loop", check_batch_matches_loop),
    ("counterexample-exact", check_counterexample),
    ("total-covariance-identity", check_total_covariance_identity),
    ("paired-variance-reduction", check_paired_variance_reduction),
    ("ecce-psd", check_ecce_psd),
]


def run_selftest() -> list[dict]:
    results = []
    for name, fn in ALL_CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:          # a crash is a failure, not an abort
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append({"name": name, "passed": bool(ok), "detail": detail})
    return results
