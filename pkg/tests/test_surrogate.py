import math

import numpy as np
import pytest
from sklearn.base import clone

from conftest import dense_posterior
from xisampler.blackbox import GFunction
from xisampler.data import stream_rng
from xisampler.surrogate import (
    DEFAULT_GRID,
    GaussianProcessSurrogate,
    HyperparameterGrid,
    SquaredExponentialKernel,
    _factorize,
    default_kernel,
    dense_gp_oracle,
    fit_kernel,
    random_gp_problem,
)


class TestKernel:
    def test_diagonal_is_signal_variance(self):
        kern = SquaredExponentialKernel(2.5, 0.3)
        Z = np.random.default_rng(0).uniform(size=(6, 3))
        assert np.allclose(np.diag(kern(Z, Z)), 2.5)

    def test_symmetric_psd(self):
        rng = np.random.default_rng(1)
        Z = rng.uniform(size=(12, 2))
        K = SquaredExponentialKernel(1.0, 0.5)(Z, Z)
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > -1e-10

    def test_positive_parameters_required(self):
        with pytest.raises(ValueError):
            SquaredExponentialKernel(-1.0, 0.5)
        with pytest.raises(ValueError):
            SquaredExponentialKernel(1.0, 0.0)

    def test_per_dimension_lengthscales(self):
        kern = SquaredExponentialKernel(1.0, np.array([0.1, 10.0]))
        a = np.array([[0.0, 0.0]])
        b = np.array([[0.1, 0.0]])
        c = np.array([[0.0, 0.1]])
        assert kern(a, b)[0, 0] < kern(a, c)[0, 0]


class TestFitBasics:
    def test_single_point_model(self):
        gp = GaussianProcessSurrogate(kernel=SquaredExponentialKernel()).fit(
            [[0.3]], [2.0]
        )
        mean, var = gp.predict([[0.3]], return_var=True)
        assert mean[0] == pytest.approx(2.0, abs=1e-9)
        assert var[0] <= 1e-8

    def test_duplicate_rows_fit_succeeds(self):
        X = np.array([[0.2, 0.4], [0.2, 0.4], [0.7, 0.1]])
        y = np.array([1.0, 1.0, 3.0])
        gp = GaussianProcessSurrogate(kernel=SquaredExponentialKernel()).fit(X, y)
        mean = gp.predict([[0.2, 0.4]])
        assert np.isfinite(mean).all()
        assert mean[0] == pytest.approx(1.0, abs=1e-4)

    def test_cholesky_reconstructs_kernel_matrix(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(size=(15, 3))
        kern = SquaredExponentialKernel(1.7, 0.4)
        gp = GaussianProcessSurrogate(kernel=kern).fit(X, rng.normal(size=15))
        K = kern(X, X) + gp.jitter_ * np.eye(15)
        rebuilt = gp.L_ @ gp.L_.T
        rel = np.linalg.norm(rebuilt - K) / np.linalg.norm(K)
        assert rel < 1e-8

    def test_escalation_raises_on_non_psd_matrix(self):
        bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite
        with pytest.raises(np.linalg.LinAlgError, match="maximum jitter"):
            _factorize(bad, 1.0)

    def test_dimension_mismatch(self):
        gp = GaussianProcessSurrogate(kernel=SquaredExponentialKernel()).fit(
            [[0.0, 1.0]], [1.0]
        )
        with pytest.raises(ValueError):
            gp.predict([[0.0]])

    def test_sklearn_protocol(self):
        gp = GaussianProcessSurrogate(optimize=False)
        assert "optimize" in gp.get_params()
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(10, 2))
        clone(gp).fit(X, rng.normal(size=10))


class TestPosteriorIdentities:
    def test_interpolation_identity(self):
        # at a training point the posterior mean is the observation and the
        # variance vanishes
        rng = stream_rng(0, "interp")
        for _ in range(10):
            X, y, kern = random_gp_problem(rng)
            gp = GaussianProcessSurrogate(kernel=kern).fit(X, y)
            mean, var = gp.predict(X, return_var=True)
            scale = max(float(np.sqrt(np.mean(y**2))), 1e-12)
            rel = np.abs(mean - y) / np.maximum(np.abs(y), scale)
            assert rel.max() < 1e-6
            assert var.max() <= 1e-6

    def test_prior_recovery_far_from_data(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(12, 2))
        y = rng.normal(size=12) * 3 + 5
        kern = SquaredExponentialKernel(2.0, 0.3)
        gp = GaussianProcessSurrogate(kernel=kern).fit(X, y)
        far = np.array([[50.0, -50.0]])  # >= 20 lengthscales away
        mean, var = gp.predict(far, return_var=True)
        assert mean[0] == pytest.approx(y.mean(), abs=1e-6)
        assert var[0] == pytest.approx(2.0, abs=1e-6)

    def test_two_point_model_solved_by_hand(self):
        sv, ls = 2.0, 0.7
        x1, x2, z = 0.0, 1.0, 0.3
        y = np.array([1.0, 3.0])
        kern = SquaredExponentialKernel(sv, ls)
        gp = GaussianProcessSurrogate(kernel=kern).fit([[x1], [x2]], y)

        # explicit 2x2 inverse on normalized outputs
        jitter = gp.jitter_
        y_norm = (y - y.mean()) / y.std()
        a = sv + jitter
        b = sv * math.exp(-0.5 * (x1 - x2) ** 2 / ls**2)
        det = a * a - b * b
        k1 = sv * math.exp(-0.5 * (z - x1) ** 2 / ls**2)
        k2 = sv * math.exp(-0.5 * (z - x2) ** 2 / ls**2)
        w1 = (a * y_norm[0] - b * y_norm[1]) / det
        w2 = (-b * y_norm[0] + a * y_norm[1]) / det
        mean_hand = y.mean() + y.std() * (k1 * w1 + k2 * w2)
        q1 = (a * k1 - b * k2) / det
        q2 = (-b * k1 + a * k2) / det
        var_hand = sv - (k1 * q1 + k2 * q2)

        mean, var = gp.predict([[z]], return_var=True)
        assert mean[0] == pytest.approx(mean_hand, abs=1e-10)
        assert var[0] == pytest.approx(var_hand, abs=1e-10)

    def test_dense_inverse_oracle_equivalence(self):
        rng = stream_rng(1, "oracle")
        for _ in range(15):
            X, y, kern = random_gp_problem(rng)
            gp = GaussianProcessSurrogate(kernel=kern).fit(X, y)
            Z = rng.uniform(size=(6, X.shape[1]))
            mean, var = gp.predict(Z, return_var=True)
            mean_ref, var_ref = dense_posterior(kern, gp.jitter_, X, y, Z)
            assert np.max(np.abs(mean - mean_ref)) < 1e-8
            assert np.max(np.abs(var - np.maximum(var_ref, 0.0))) < 1e-8
            # the packaged diagnostic oracle agrees too
            mean_pkg, var_pkg = dense_gp_oracle(gp, Z)
            assert np.max(np.abs(mean_pkg - mean_ref)) < 1e-10

    def test_variance_never_exceeds_prior(self):
        rng = stream_rng(2, "bound")
        for _ in range(10):
            X, y, kern = random_gp_problem(rng)
            gp = GaussianProcessSurrogate(kernel=kern).fit(X, y)
            Z = rng.uniform(-1, 2, size=(50, X.shape[1]))
            _, var = gp.predict(Z, return_var=True)
            assert var.max() <= kern.signal_variance + 1e-8

    def test_more_data_never_raises_variance(self):
        rng = stream_rng(3, "mono")
        for _ in range(8):
            X, y, kern = random_gp_problem(rng, max_n=15)
            gp_small = GaussianProcessSurrogate(kernel=kern).fit(X, y)
            x_extra = rng.uniform(size=(1, X.shape[1]))
            y_extra = rng.normal()
            X2 = np.vstack([X, x_extra])
            y2 = np.append(y, y_extra)
            gp_big = GaussianProcessSurrogate(kernel=kern).fit(X2, y2)
            Z = rng.uniform(size=(20, X.shape[1]))
            _, v_small = gp_small.predict(Z, return_var=True)
            _, v_big = gp_big.predict(Z, return_var=True)
            assert np.all(v_big <= v_small + 1e-8)


class TestLogMarginalLikelihood:
    def test_single_point_closed_form(self):
        gp = GaussianProcessSurrogate(kernel=SquaredExponentialKernel(1.0, 1.0)).fit(
            [[0.0]], [5.0]
        )
        expected = -0.5 * math.log(1.0 + gp.jitter_) - 0.5 * math.log(2 * math.pi)
        assert gp.log_marginal_likelihood() == pytest.approx(expected, abs=1e-12)

    def test_matches_dense_evaluation(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            X = rng.uniform(size=(10, 2))
            kern = SquaredExponentialKernel(1.3, 0.5)
            L_prior, _ = _factorize(kern(X, X), kern.signal_variance)
            y = 2.0 + L_prior @ rng.standard_normal(10)
            gp = GaussianProcessSurrogate(kernel=kern).fit(X, y)
            y_norm = (y - y.mean()) / y.std()
            K = kern(X, X) + gp.jitter_ * np.eye(10)
            sign, logdet = np.linalg.slogdet(K)
            dense = (
                -0.5 * y_norm @ np.linalg.inv(K) @ y_norm
                - 0.5 * logdet
                - 5.0 * math.log(2 * math.pi)
            )
            assert gp.log_marginal_likelihood() == pytest.approx(dense, abs=1e-8)

    def test_duplicate_observation_effects(self):
        # an exact duplicate concentrates density along the degenerate
        # direction, so the joint likelihood rises; a contradictory duplicate
        # (same input, different output) collapses it
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(8, 2))
        y = rng.normal(size=8)
        kern = SquaredExponentialKernel(1.5, 0.4)
        base = GaussianProcessSurrogate(kernel=kern).fit(X, y)
        X2 = np.vstack([X, X[0]])
        dup = GaussianProcessSurrogate(kernel=kern).fit(X2, np.append(y, y[0]))
        clash = GaussianProcessSurrogate(kernel=kern).fit(X2, np.append(y, y[0] + 1))
        assert dup.log_marginal_likelihood() > base.log_marginal_likelihood()
        assert clash.log_marginal_likelihood() < base.log_marginal_likelihood() - 100


class TestHyperparameterFit:
    def test_recovers_known_lengthscale(self):
        rng = np.random.default_rng(6)
        X = np.sort(rng.uniform(size=(100, 1)), axis=0)
        true = SquaredExponentialKernel(1.0, 0.3)
        L, _ = _factorize(true(X, X), 1.0)
        y = L @ rng.standard_normal(100)
        kern = fit_kernel(X, y)
        assert 0.15 <= float(kern.lengthscale) <= 0.6

    def test_constant_y_returns_mid_grid(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(size=(20, 2))
        kern = fit_kernel(X, np.ones(20))
        mid = default_kernel(X)
        assert kern == mid

    def test_grid_optimum_beats_corners(self):
        box = GFunction(4, 4)
        s = box.draw_initial(200, stream_rng(4, "grid"))
        X, y = s.features, s.outputs
        best = fit_kernel(X, y)
        best_lml = GaussianProcessSurrogate(kernel=best).fit(X, y).log_marginal_likelihood()
        span = float(np.max(X.max(axis=0) - X.min(axis=0)))
        for sv in DEFAULT_GRID.variance_span:
            for ls in DEFAULT_GRID.lengthscale_span:
                corner = SquaredExponentialKernel(sv, ls * span)
                lml = GaussianProcessSurrogate(kernel=corner).fit(X, y).log_marginal_likelihood()
                assert best_lml > lml

    def test_needs_three_samples(self):
        with pytest.raises(ValueError):
            fit_kernel(np.zeros((2, 1)), np.array([1.0, 2.0]))

    def test_estimator_optimizes_by_default(self):
        rng = np.random.default_rng(8)
        X = rng.uniform(size=(50, 1))
        y = np.sin(6 * X[:, 0])
        gp = GaussianProcessSurrogate().fit(X, y)
        fixed = GaussianProcessSurrogate(optimize=False).fit(X, y)
        assert gp.log_marginal_likelihood() >= fixed.log_marginal_likelihood()

    def test_degenerate_flag(self):
        rng = np.random.default_rng(9)
        gp = GaussianProcessSurrogate().fit(rng.uniform(size=(10, 2)), np.zeros(10))
        assert gp.degenerate_

    def test_custom_grid(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(size=(30, 1))
        y = np.sin(6 * X[:, 0])
        grid = HyperparameterGrid(n_variance=3, n_lengthscale=4, refinements=1)
        kern = fit_kernel(X, y, grid)
        assert kern.signal_variance > 0


class TestEndToEnd:
    def test_active_design_reaches_high_score(self):
        # 200 actively collected samples on the 4 significant coordinates
        # support a surrogate above 0.9 R^2 on held-out points
        from xisampler.harness import r2_score
        from xisampler.sampler import FlowConfig, run_flow

        box = GFunction(4, 4)
        config = FlowConfig(
            n_initial=10, n_final=200, n_candidates=2000, n_selected=4,
            selection="oracle", oracle_indices=(0, 1, 2, 3),
            acquisition="maxvar", refit_period=10,
        )
        result = run_flow(config, box, seed=2)
        gp = GaussianProcessSurrogate().fit(result.samples.features,
                                            result.samples.outputs)
        test = box.draw_initial(2000, stream_rng(5, "end"))
        score = r2_score(test.outputs, gp.predict(test.features))
        assert score > 0.9
