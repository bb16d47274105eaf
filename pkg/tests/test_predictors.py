import numpy as np
import pytest

from predpower.errors import (DimensionMismatch, InformationLeak, InsufficientData,
                              InvalidModel, UnsupportedTarget)
from predpower.predictors import (AffineGaussian, Baseline, BinaryPerfect, History,
                                  MultiStep1D, ProblemInstance,
                                  ShiftedAffineGaussian, conditional_cov_W,
                                  conditional_mean_W, derive_rng, mse_per_entry,
                                  sample_dataset, sample_instance)
from predpower.presets import THETA_MIXED


class TestHistoryCausality:
    def make(self, t=3):
        rng = np.random.default_rng(0)
        return History(t=t, past_W=rng.standard_normal((t, 2)),
                       past_V=rng.standard_normal((t + 1, 2)))

    def test_allowed_reads(self):
        h = self.make()
        h.w(2)
        h.v(3)

    def test_current_disturbance_leaks(self):
        h = self.make()
        with pytest.raises(InformationLeak):
            h.w(3)

    def test_future_prediction_leaks(self):
        h = self.make()
        with pytest.raises(InformationLeak):
            h.v(4)

    def test_row_count_validation(self):
        with pytest.raises(DimensionMismatch):
            History(t=2, past_W=np.zeros((3, 1)), past_V=np.zeros((3, 1)))
        with pytest.raises(DimensionMismatch):
            ProblemInstance(W=np.zeros((4, 1)), V=np.zeros((3, 1)), predictor_id="x")


class TestModelValidation:
    def test_rho_range(self):
        with pytest.raises(InvalidModel):
            AffineGaussian(T=5, rho=0.9, theta=np.eye(2))
        with pytest.raises(InvalidModel):
            AffineGaussian(T=5, rho=-0.1, theta=np.eye(2))

    def test_noise_feasibility(self):
        # rho^2 * lambda_max(theta theta') must stay below 1
        with pytest.raises(InvalidModel):
            AffineGaussian(T=5, rho=0.6, theta=2.0 * np.eye(2))
        AffineGaussian(T=5, rho=0.7, theta=THETA_MIXED)   # feasible

    def test_multistep_variant(self):
        with pytest.raises(InvalidModel):
            MultiStep1D(T=5, variant=3)
        with pytest.raises(InvalidModel):
            MultiStep1D(T=5, variances=(1.0, -1.0, 1.0))


class TestSamplingLaws:
    def test_baseline_zero_width(self):
        inst = sample_instance(Baseline(T=7, n=2), seed=1)
        assert inst.V.shape == (7, 0)
        assert inst.W.shape == (7, 2)

    def test_determinism_and_stream_independence(self):
        model = AffineGaussian(T=10, rho=0.5, theta=np.eye(2))
        a = model.sample(derive_rng(42, 3))
        b = model.sample(derive_rng(42, 3))
        c = model.sample(derive_rng(42, 4))
        assert np.array_equal(a.W, b.W) and np.array_equal(a.V, b.V)
        assert not np.array_equal(a.W, c.W)

    def test_affine_prediction_covariance_is_identity(self):
        # Cov(V) = rho^2 theta theta' + (I - rho^2 theta theta') = I
        model = AffineGaussian(T=100, rho=0.6, theta=THETA_MIXED)
        ds = sample_dataset(model, 1000, master_seed=5)
        rows = ds.V.reshape(-1, 2)
        cov = np.cov(rows.T)
        assert np.max(np.abs(cov - np.eye(2))) < 5e-3

    def test_rho_zero_independent(self):
        model = AffineGaussian(T=100, rho=0.0, theta=np.eye(2))
        ds = sample_dataset(model, 500, master_seed=6)
        W = ds.W.reshape(-1, 2)
        V = ds.V.reshape(-1, 2)
        cross = W.T @ V / W.shape[0]
        assert np.max(np.abs(cross)) < 0.02

    def test_binary_exact_revelation(self):
        model = BinaryPerfect(T=20, n=1)
        inst = sample_instance(model, seed=3)
        assert np.array_equal(inst.V, inst.W)
        assert set(np.unique(inst.W)) <= {-1.0, 1.0}

    def test_shifted_is_next_step_prediction(self):
        # V_t(shifted) must correlate with W_{t+1}, not W_t
        inner = AffineGaussian(T=200, rho=0.7, theta=np.eye(1))
        model = ShiftedAffineGaussian(inner=inner)
        ds = sample_dataset(model, 500, master_seed=7)
        v = ds.V[:, :-1, 0].ravel()
        w_next = ds.W[:, 1:, 0].ravel()
        w_same = ds.W[:, :-1, 0].ravel()
        assert np.corrcoef(v, w_next)[0, 1] > 0.6
        assert abs(np.corrcoef(v, w_same)[0, 1]) < 0.02

    def test_multistep_variant2_moments(self):
        model = MultiStep1D(T=100, variant=2)
        P, c = model._coefP, model._coef_next / model._coefP
        ds = sample_dataset(model, 2000, master_seed=8)
        v = ds.V[:, :-1, 0].ravel()
        w = ds.W[:, :-1, 0].ravel()
        w_next = ds.W[:, 1:, 0].ravel()
        var_expected = P ** 2 * 2.0 + (c * P) ** 2
        assert abs(v.var() - var_expected) / var_expected < 0.02
        assert abs(np.mean(v * w) - 2.0 * P) / (2.0 * P) < 0.03
        assert abs(np.mean(v * w_next) - c * P) / (c * P) < 0.08


class TestConditionalMoments:
    def test_baseline_zero(self):
        model = Baseline(T=5, n=2)
        h = sample_instance(model, 0).history(2)
        assert np.allclose(conditional_mean_W(model, h, 3), 0.0)
        assert np.allclose(conditional_cov_W(model, 2, 4), np.eye(2))

    def test_affine_mean_and_cov(self):
        model = AffineGaussian(T=5, rho=0.5, theta=THETA_MIXED)
        inst = sample_instance(model, 11)
        h = inst.history(2)
        mean = conditional_mean_W(model, h, 2)
        assert np.allclose(mean, 0.5 * THETA_MIXED.T @ inst.V[2])
        assert np.allclose(conditional_mean_W(model, h, 3), 0.0)
        cov = conditional_cov_W(model, 2, 2)
        assert np.allclose(cov, np.eye(2) - 0.25 * THETA_MIXED.T @ THETA_MIXED)
        assert np.allclose(conditional_cov_W(model, 2, 4), np.eye(2))

    def test_binary_moments(self):
        model = BinaryPerfect(T=5)
        inst = sample_instance(model, 2)
        h = inst.history(1)
        assert conditional_mean_W(model, h, 1)[0] == inst.W[1, 0]
        assert conditional_cov_W(model, 1, 1)[0, 0] == 0.0

    def test_unsupported_target(self):
        model = AffineGaussian(T=5, rho=0.5, theta=np.eye(2))
        h = sample_instance(model, 1).history(2)
        with pytest.raises(UnsupportedTarget):
            conditional_mean_W(model, h, 5)
        with pytest.raises(UnsupportedTarget):
            conditional_cov_W(model, 2, 7)

    def test_shifted_mean_regression(self):
        # E[W_{t+1} | I_t] = rho theta' v_t, verified against a large-sample
        # least-squares fit of W_{t+1} on v_t
        rho = 0.6
        inner = AffineGaussian(T=50, rho=rho, theta=np.eye(1))
        model = ShiftedAffineGaussian(inner=inner)
        ds = sample_dataset(model, 2000, master_seed=9)
        v = ds.V[:, :-1, 0].ravel()
        w_next = ds.W[:, 1:, 0].ravel()
        slope = np.dot(v, w_next) / np.dot(v, v)
        assert abs(slope - rho) < 0.02
        inst = ds.instance(0)
        h = inst.history(3)
        assert np.allclose(model.conditional_mean_W(h, 4), rho * inst.V[3])
        assert np.allclose(model.conditional_mean_W(h, 3), rho * inst.V[2])
        h0 = inst.history(0)
        assert np.allclose(model.conditional_mean_W(h0, 0), 0.0)

    def test_multistep_variant1_exact(self):
        model = MultiStep1D(T=30, variant=1)
        inst = sample_instance(model, 21)
        h = inst.history(7)
        # components are directly revealed: W_t^(0) from V_{t-1}[1],
        # W_t^(1) from V_t[0], W_{t+1}^(0) from V_t[1]
        assert np.isclose(model.conditional_mean_W(h, 7)[0],
                          inst.V[6, 1] + inst.V[7, 0])
        assert np.isclose(model.conditional_mean_W(h, 8)[0], inst.V[7, 1])
        assert np.isclose(model.conditional_mean_W(h, 9)[0], 0.0)

    def test_multistep_conditional_cov_values(self):
        model = MultiStep1D(T=30, variant=1)
        # interior: W_t components 0,1 known -> residual var = var of comp 2
        cov = model.conditional_cov_W(7, 7)
        assert abs(cov[0, 0] - 1.0) < 1e-10
        cov_next = model.conditional_cov_W(7, 8)
        assert abs(cov_next[0, 0] - 2.0) < 1e-10
        far = model.conditional_cov_W(7, 12)
        assert abs(far[0, 0] - 3.0) < 1e-10

    def test_tower_property_multistep(self):
        # innovations m2 - m1 with m_k = E[W_tau | I_{t+k}] have zero mean
        # and are uncorrelated with the earlier estimate m1
        for variant in (1, 2):
            model = MultiStep1D(T=12, variant=variant)
            t, tau = 4, 5
            N = 4000
            m1 = np.empty(N)
            m2 = np.empty(N)
            for i in range(N):
                inst = model.sample(derive_rng(77, i))
                m1[i] = model.conditional_mean_W(inst.history(t), tau)[0]
                m2[i] = model.conditional_mean_W(inst.history(t + 1), tau)[0]
            diff = m2 - m1
            se_mean = diff.std(ddof=1) / np.sqrt(N)
            assert abs(diff.mean()) < 3 * se_mean + 1e-12
            corr = np.mean(diff * (m1 - m1.mean()))
            se_corr = np.std(diff * (m1 - m1.mean()), ddof=1) / np.sqrt(N)
            assert abs(corr) < 3 * se_corr + 1e-12


class TestThetaGeometry:
    def test_mixed_theta_column_norms_match_identity(self):
        # direct arithmetic: 1^2 = 1 and 0.99^2 + 0.141^2 = 0.999981
        gram = THETA_MIXED.T @ THETA_MIXED
        assert abs(gram[0, 0] - 1.0) == 0.0
        assert abs(gram[1, 1] - (0.99 ** 2 + 0.141 ** 2)) < 1e-15
        assert np.max(np.abs(np.diag(gram) - 1.0)) < 2e-5


class TestMsePerEntry:
    def test_baseline_constant_predictor(self):
        model = Baseline(T=50, n=2)
        ds = sample_dataset(model, 1000, master_seed=3)
        mses = mse_per_entry(model, ds)
        assert np.max(np.abs(mses - 1.0)) < 0.06

    def test_affine_residual_variance(self):
        model = AffineGaussian(T=50, rho=0.6, theta=THETA_MIXED)
        ds = sample_dataset(model, 1000, master_seed=4)
        mses = mse_per_entry(model, ds)
        expected = 1.0 - 0.36 * np.diag(THETA_MIXED.T @ THETA_MIXED)
        assert np.max(np.abs(mses - expected)) < 0.02

    def test_insufficient_data(self):
        model = AffineGaussian(T=5, rho=0.5, theta=np.eye(2))
        ds = sample_dataset(model, 10, master_seed=1)
        with pytest.raises(InsufficientData):
            mse_per_entry(model, ds)
