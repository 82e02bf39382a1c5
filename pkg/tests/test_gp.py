"""Gaussian process core: kernel, factorization, fitting, posterior.

The posterior and marginal-likelihood paths are checked against direct
dense-inverse implementations of the textbook formulas.
"""

import math

import numpy as np
import pytest

from composite_bo.gp import (
    BASE_JITTER_SCALE,
    DegenerateKernelError,
    FitConfig,
    GaussianProcess,
    KernelHyperparams,
    _chol_with_jitter,
    build_gp,
    build_kernel_matrix,
    fit,
    kernel_eval,
    log_marginal_likelihood,
    posterior,
    posterior_batch,
)


def dense_posterior(points, targets, hp, prior_mean, x):
    """Textbook posterior via explicit matrix inverse (oracle)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x = np.asarray(x, dtype=float).ravel()
    n = points.shape[0]
    k_mat = np.array(
        [[kernel_eval(points[i], points[j], hp) for j in range(n)] for i in range(n)]
    )
    k_mat += (hp.noise_stddev**2 + BASE_JITTER_SCALE * hp.signal_variance) * np.eye(n)
    k_inv = np.linalg.inv(k_mat)
    k_vec = np.array([kernel_eval(x, points[i], hp) for i in range(n)])
    resid = np.asarray(targets, dtype=float) - prior_mean
    mean = prior_mean + k_vec @ k_inv @ resid
    var = kernel_eval(x, x, hp) - k_vec @ k_inv @ k_vec
    return mean, max(var, 0.0)


def dense_lml(gp: GaussianProcess) -> float:
    """Log marginal likelihood via explicit inverse and slogdet (oracle)."""
    k_reg = gp.chol_factor @ gp.chol_factor.T
    resid = gp.train_targets - gp.prior_mean
    _, logdet = np.linalg.slogdet(k_reg)
    return float(
        -0.5 * resid @ np.linalg.inv(k_reg) @ resid
        - 0.5 * logdet
        - 0.5 * len(resid) * math.log(2.0 * math.pi)
    )


class TestKernel:
    def test_zero_distance_returns_signal_variance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            hp = KernelHyperparams(rng.uniform(0.1, 10), rng.uniform(0.1, 10))
            x = rng.normal(size=3)
            assert kernel_eval(x, x, hp) == pytest.approx(hp.signal_variance)

    def test_unit_case(self):
        # squared distance 2 with unit hyperparameters gives exp(-1)
        hp = KernelHyperparams(signal_variance=1.0, lengthscale=1.0)
        value = kernel_eval([1.0, 0.0], [0.0, 1.0], hp)
        assert value == pytest.approx(math.exp(-1.0), rel=1e-12)
        assert value == pytest.approx(0.367879, abs=1e-6)

    def test_symmetry_random_pairs(self):
        rng = np.random.default_rng(1)
        hp = KernelHyperparams(2.5, 0.7)
        for _ in range(100):
            a, b = rng.normal(size=(2, 4))
            assert kernel_eval(a, b, hp) == kernel_eval(b, a, hp)

    def test_bounded_and_maximized_at_equality(self):
        rng = np.random.default_rng(2)
        hp = KernelHyperparams(3.0, 1.3)
        for _ in range(50):
            a, b = rng.normal(size=(2, 3))
            v = kernel_eval(a, b, hp)
            assert 0.0 < v <= hp.signal_variance
            assert v <= kernel_eval(a, a, hp)

    def test_dimension_mismatch_raises(self):
        hp = KernelHyperparams(1.0, 1.0)
        with pytest.raises(ValueError):
            kernel_eval([1.0, 2.0], [1.0, 2.0, 3.0], hp)

    def test_per_dimension_lengthscales(self):
        hp = KernelHyperparams(1.0, (1.0, 2.0))
        expected = math.exp(-0.5 * (1.0 + 0.25))
        assert kernel_eval([0.0, 0.0], [1.0, 1.0], hp) == pytest.approx(expected)

    def test_invalid_hyperparams_raise(self):
        with pytest.raises(ValueError):
            KernelHyperparams(-1.0, 1.0)
        with pytest.raises(ValueError):
            KernelHyperparams(1.0, 0.0)
        with pytest.raises(ValueError):
            KernelHyperparams(1.0, 1.0, noise_stddev=-0.1)


class TestKernelMatrix:
    def test_single_point(self):
        hp = KernelHyperparams(1.0, 1.0)
        mat = build_kernel_matrix([[0.5]], hp)
        assert mat.shape == (1, 1)
        assert mat[0, 0] == pytest.approx(1.0 + BASE_JITTER_SCALE)

    def test_duplicate_points_with_noise(self):
        hp = KernelHyperparams(1.0, 1.0, noise_stddev=0.1)
        mat = build_kernel_matrix([[1.0, 2.0], [1.0, 2.0]], hp)
        jitter = BASE_JITTER_SCALE
        np.testing.assert_allclose(
            mat, [[1.01 + jitter, 1.0], [1.0, 1.01 + jitter]], atol=1e-12
        )

    def test_exactly_symmetric(self):
        rng = np.random.default_rng(3)
        hp = KernelHyperparams(2.0, 0.5)
        pts = rng.normal(size=(12, 3))
        mat = build_kernel_matrix(pts, hp)
        assert np.array_equal(mat, mat.T)

    def test_positive_definite(self):
        rng = np.random.default_rng(4)
        hp = KernelHyperparams(1.0, 0.3)
        mat = build_kernel_matrix(rng.normal(size=(20, 2)), hp)
        assert np.all(np.linalg.eigvalsh(mat) > 0)

    def test_jitter_ladder_rescues_mildly_indefinite_matrix(self):
        # eigenvalue -1e-5 fails at base jitter 1e-6 but passes at 1e-4
        q, _ = np.linalg.qr(np.random.default_rng(5).normal(size=(4, 4)))
        mat = q @ np.diag([1.0, 0.5, 0.2, -1e-5]) @ q.T
        mat = 0.5 * (mat + mat.T)
        _, jitter = _chol_with_jitter(mat, 1.0)
        assert jitter > BASE_JITTER_SCALE

    def test_degenerate_matrix_raises_after_escalation(self):
        mat = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
        with pytest.raises(DegenerateKernelError):
            _chol_with_jitter(mat, 1.0)


class TestBuildGp:
    def test_chol_factor_reconstructs_regularized_matrix(self):
        rng = np.random.default_rng(6)
        hp = KernelHyperparams(1.5, 0.8)
        pts = rng.uniform(size=(15, 2))
        gp = build_gp(pts, rng.normal(size=15), hp)
        reconstructed = gp.chol_factor @ gp.chol_factor.T
        expected = build_kernel_matrix(pts, hp)
        rel = np.linalg.norm(reconstructed - expected) / np.linalg.norm(expected)
        assert rel < 1e-8

    def test_prior_mean_defaults_to_target_mean(self):
        gp = build_gp([[0.0], [1.0]], [2.0, 4.0], KernelHyperparams(1.0, 1.0))
        assert gp.prior_mean == pytest.approx(3.0)

    def test_rejects_nonfinite_targets(self):
        with pytest.raises(ValueError):
            build_gp([[0.0], [1.0]], [1.0, np.nan], KernelHyperparams(1.0, 1.0))


class TestLogMarginalLikelihood:
    def test_single_point_at_prior_mean(self):
        # unit kernel, zero residual: -log(2*pi)/2
        gp = build_gp([[0.0]], [5.0], KernelHyperparams(1.0, 1.0), prior_mean=5.0)
        assert log_marginal_likelihood(gp) == pytest.approx(-0.918939, abs=1e-5)

    def test_scaling_residuals_strictly_decreases_lml(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(size=(8, 2))
        base = rng.normal(size=8)
        hp = KernelHyperparams(1.0, 0.5)
        values = [
            log_marginal_likelihood(build_gp(pts, 10.0 + c * base, hp, prior_mean=10.0))
            for c in (1.0, 2.0, 4.0)
        ]
        assert values[0] > values[1] > values[2]

    def test_matches_dense_inverse_oracle(self):
        # lengthscales kept moderate so the dense inverse stays well posed
        rng = np.random.default_rng(8)
        for _ in range(10):
            pts = rng.uniform(size=(10, 3))
            targets = rng.normal(size=10)
            hp = KernelHyperparams(rng.uniform(0.5, 2), rng.uniform(0.2, 0.5))
            gp = build_gp(pts, targets, hp)
            assert log_marginal_likelihood(gp) == pytest.approx(dense_lml(gp), abs=1e-8)


class TestPosterior:
    def test_noiseless_interpolation(self):
        # separated points and a short lengthscale keep the system well
        # conditioned, so the jittered solve reproduces the data
        rng = np.random.default_rng(9)
        pts = np.arange(12, dtype=float).reshape(-1, 1) + rng.uniform(0, 0.2, size=(12, 1))
        targets = rng.uniform(-0.5, 0.5, size=12)
        gp = build_gp(pts, targets, KernelHyperparams(1.0, 0.3))
        means, variances = posterior_batch(gp, pts)
        np.testing.assert_allclose(means, targets, atol=1e-6)
        assert np.all(variances <= 1e-6)

    def test_prior_reversion_far_from_data(self):
        rng = np.random.default_rng(10)
        pts = rng.uniform(size=(10, 2))
        gp = build_gp(pts, rng.normal(size=10), KernelHyperparams(2.0, 0.3))
        far = posterior(gp, [50.0, -50.0])
        assert far.mean == pytest.approx(gp.prior_mean, abs=1e-3)
        assert far.variance == pytest.approx(2.0, abs=1e-3)

    def test_matches_dense_inverse_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            pts = rng.uniform(size=(5, 2))
            targets = rng.normal(size=5)
            hp = KernelHyperparams(rng.uniform(0.5, 2), rng.uniform(0.3, 1.5))
            gp = build_gp(pts, targets, hp)
            x = rng.uniform(size=2)
            got = posterior(gp, x)
            want_mean, want_var = dense_posterior(pts, targets, hp, gp.prior_mean, x)
            assert got.mean == pytest.approx(want_mean, abs=1e-8)
            assert got.variance == pytest.approx(want_var, abs=1e-8)

    def test_variance_within_prior_bounds(self):
        rng = np.random.default_rng(12)
        hp = KernelHyperparams(3.0, 0.5)
        gp = build_gp(rng.uniform(size=(20, 2)), rng.normal(size=20), hp)
        _, variances = posterior_batch(gp, rng.uniform(-2, 3, size=(500, 2)))
        assert np.all(variances >= 0.0)
        assert np.all(variances <= hp.signal_variance + 1e-6)

    def test_added_observation_never_increases_variance(self):
        rng = np.random.default_rng(13)
        hp = KernelHyperparams(1.0, 0.5)
        pts = rng.uniform(size=(10, 2))
        targets = rng.normal(size=10)
        queries = rng.uniform(size=(50, 2))
        _, var_before = posterior_batch(build_gp(pts, targets, hp), queries)
        grown = np.vstack([pts, rng.uniform(size=(1, 2))])
        _, var_after = posterior_batch(
            build_gp(grown, np.append(targets, rng.normal()), hp), queries
        )
        assert np.all(var_after <= var_before + 1e-8)

    def test_dimension_mismatch_raises(self):
        gp = build_gp([[0.0, 1.0], [1.0, 0.0]], [1.0, 2.0], KernelHyperparams(1.0, 1.0))
        with pytest.raises(ValueError):
            posterior(gp, [1.0, 2.0, 3.0])

    def test_batch_matches_scalar_path(self):
        rng = np.random.default_rng(14)
        gp = build_gp(rng.uniform(size=(8, 3)), rng.normal(size=8), KernelHyperparams(1.0, 0.6))
        queries = rng.uniform(size=(6, 3))
        means, variances = posterior_batch(gp, queries)
        for i, q in enumerate(queries):
            one = posterior(gp, q)
            assert one.mean == pytest.approx(means[i], rel=1e-12, abs=1e-12)
            assert one.variance == pytest.approx(variances[i], rel=1e-9, abs=1e-12)


class TestFit:
    def test_constant_targets(self):
        rng = np.random.default_rng(15)
        pts = rng.uniform(size=(10, 2))
        gp = fit(pts, np.full(10, 3.7), FitConfig(seed=0))
        assert gp.prior_mean == pytest.approx(3.7)
        means, _ = posterior_batch(gp, rng.uniform(size=(20, 2)))
        np.testing.assert_allclose(means, 3.7, atol=1e-6)

    def test_lml_at_least_every_grid_candidate(self):
        # coarse grid search over the same hyperparameter box as oracle
        rng = np.random.default_rng(16)
        pts = np.sort(rng.uniform(0, 4, size=20)).reshape(-1, 1)
        targets = np.sin(1.5 * pts[:, 0]) + 0.2 * pts[:, 0]
        gp = fit(pts, targets, FitConfig(seed=1))
        fitted_lml = log_marginal_likelihood(gp)

        extent = float(pts.max() - pts.min())
        target_var = float(np.var(targets))
        best_grid = -math.inf
        for ls in np.geomspace(1e-3 * extent, 1e3 * extent, 7):
            for sv in np.geomspace(1e-4 * target_var, 1e4 * target_var, 7):
                cand = build_gp(
                    pts, targets, KernelHyperparams(sv, ls), prior_mean=float(targets.mean())
                )
                best_grid = max(best_grid, log_marginal_likelihood(cand))
        assert fitted_lml >= best_grid - 1e-6

    def test_fitted_lengthscale_within_bounds(self):
        rng = np.random.default_rng(17)
        pts = rng.uniform(0, 1, size=(20, 1))
        targets = np.cos(3 * pts[:, 0])
        gp = fit(pts, targets, FitConfig(seed=2))
        extent = float(pts.max() - pts.min())
        assert 1e-3 * extent <= gp.hyperparams.lengthscale <= 1e3 * extent

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(18)
        pts = rng.uniform(size=(15, 2))
        targets = rng.normal(size=15)
        config = FitConfig(seed=42)
        first = fit(pts, targets, config)
        second = fit(pts, targets, config)
        assert first.hyperparams == second.hyperparams

    def test_domain_scaling_keeps_interpolation(self):
        rng = np.random.default_rng(19)
        pts = rng.uniform(-30, 30, size=(15, 2))
        targets = np.sin(pts[:, 0] / 10) + pts[:, 1] / 30
        config = FitConfig(domain_lower=[-32.0, -32.0], domain_upper=[32.0, 32.0], seed=3)
        gp = fit(pts, targets, config)
        means, _ = posterior_batch(gp, pts)
        np.testing.assert_allclose(means, targets, atol=1e-3)

    def test_ard_fit_recovers_relevant_dimension(self):
        rng = np.random.default_rng(20)
        pts = rng.uniform(size=(40, 3))
        targets = np.sin(6 * pts[:, 0])  # only the first coordinate matters
        gp = fit(pts, targets, FitConfig(seed=4, ard=True))
        scales = np.asarray(gp.hyperparams.lengthscale)
        assert scales.shape == (3,)
        assert scales[0] < scales[1] and scales[0] < scales[2]

    def test_too_few_points_raises(self):
        with pytest.raises(ValueError):
            fit([[0.0]], [1.0], FitConfig())

    def test_nonfinite_targets_raise(self):
        with pytest.raises(ValueError):
            fit([[0.0], [1.0]], [1.0, math.inf], FitConfig())
