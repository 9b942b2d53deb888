import numpy as np
import pytest
from scipy import integrate, stats

from morphoscope.exceptions import InsufficientData, InvalidInput
from morphoscope.giw import (
    GIWHyperparams,
    SufficientStats,
    default_hyperparams,
    iw_log_density,
    map_estimate,
    posterior_update,
)

from conftest import random_pd


def two_pass_variance(data):
    n, d = data.shape
    out = []
    for j in range(d):
        m = sum(data[:, j]) / n
        out.append(sum((x - m) ** 2 for x in data[:, j]) / n)
    return np.array(out)


class TestDefaultHyperparams:
    def test_symmetric_two_points(self):
        h = default_hyperparams(np.array([[-1.0], [1.0]]))
        np.testing.assert_array_equal(h.mu0, [0.0])
        np.testing.assert_array_equal(h.lambda0, [[1.0]])
        assert h.nu0 == 3
        assert h.k0 == 0.01

    def test_degenerate_variance_is_floored(self):
        v = np.array([1.5, -2.0])
        h = default_hyperparams(np.tile(v, (5, 1)))
        np.testing.assert_array_equal(h.mu0, v)
        np.testing.assert_array_equal(h.lambda0, np.diag([1e-12, 1e-12]))

    def test_partial_zero_variance_uses_relative_floor(self):
        data = np.array([[0.0, 1.0], [0.0, 3.0], [0.0, 5.0]])
        h = default_hyperparams(data)
        var = 8.0 / 3.0
        assert h.lambda0[1, 1] == pytest.approx(var)
        assert h.lambda0[0, 0] == pytest.approx(1e-6 * var / 2)

    def test_population_variance_oracle(self):
        data = np.random.default_rng(5).standard_normal((50, 4))
        h = default_hyperparams(data)
        np.testing.assert_allclose(np.diag(h.lambda0), two_pass_variance(data), rtol=1e-12)
        assert np.count_nonzero(h.lambda0 - np.diag(np.diag(h.lambda0))) == 0

    def test_single_row_rejected(self):
        with pytest.raises(InsufficientData):
            default_hyperparams(np.zeros((1, 3)))


class TestPosteriorUpdate:
    def test_no_data_is_identity(self):
        prior = GIWHyperparams([1.0, 2.0], 0.5, np.eye(2), 4.0)
        post = posterior_update(prior, SufficientStats.from_data(np.zeros((0, 2))))
        assert post is prior

    def test_mean_prior_at_sample_mean(self, rng):
        data = rng.standard_normal((30, 3))
        prior = default_hyperparams(data)
        stats_ = SufficientStats.from_data(data)
        post = posterior_update(prior, stats_)
        np.testing.assert_allclose(post.lambda0, prior.lambda0 + stats_.scatter, rtol=1e-14)
        np.testing.assert_allclose(post.mu0, stats_.mean_hat, rtol=1e-14)

    def test_hand_example(self):
        data = np.array([[-1.0], [1.0]])
        post = posterior_update(default_hyperparams(data), SufficientStats.from_data(data))
        assert post.mu0[0] == pytest.approx(0.0, abs=1e-15)
        assert post.k0 == pytest.approx(2.01, rel=1e-12)
        assert post.nu0 == 5
        assert post.lambda0[0, 0] == pytest.approx(3.0, rel=1e-12)

    def test_rank_one_term(self):
        prior = GIWHyperparams([0.0], 1.0, [[1.0]], 3.0)
        data = np.array([[1.0], [3.0]])  # mean 2, scatter 2
        post = posterior_update(prior, SufficientStats.from_data(data))
        # lambda_n = 1 + 2 + (2 * 1 / 3) * 4
        assert post.lambda0[0, 0] == pytest.approx(3.0 + 8.0 / 3.0, rel=1e-14)
        assert post.mu0[0] == pytest.approx(4.0 / 3.0, rel=1e-14)

    def test_dimension_mismatch(self):
        prior = GIWHyperparams([0.0], 1.0, [[1.0]], 3.0)
        with pytest.raises(InvalidInput):
            posterior_update(prior, SufficientStats.from_data(np.zeros((3, 2))))

    @pytest.mark.parametrize("seed", range(50))
    def test_sequential_conjugacy(self, seed):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(1, 6))
        data = rng.standard_normal((int(rng.integers(4, 40)), d)) * rng.uniform(0.5, 3) + rng.standard_normal(d)
        cut = int(rng.integers(1, data.shape[0]))
        prior = GIWHyperparams(rng.standard_normal(d), rng.uniform(0.01, 2), random_pd(rng, d), d + rng.uniform(0, 5))
        seq = posterior_update(posterior_update(prior, SufficientStats.from_data(data[:cut])),
                               SufficientStats.from_data(data[cut:]))
        joint = posterior_update(prior, SufficientStats.from_data(data))
        np.testing.assert_allclose(seq.mu0, joint.mu0, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(seq.lambda0, joint.lambda0, rtol=1e-10, atol=1e-12)
        assert seq.k0 == pytest.approx(joint.k0, rel=1e-12)
        assert seq.nu0 == pytest.approx(joint.nu0, rel=1e-12)

    def test_counts_grow_by_n_and_scale_grows_psd(self, rng):
        data = rng.standard_normal((25, 4))
        prior = default_hyperparams(data)
        post = posterior_update(prior, SufficientStats.from_data(data))
        assert post.k0 - prior.k0 == pytest.approx(25)
        assert post.nu0 - prior.nu0 == 25
        assert np.min(np.linalg.eigvalsh(post.lambda0 - prior.lambda0)) >= -1e-10


class TestMapEstimate:
    def test_hand_example(self):
        data = np.array([[-1.0], [1.0]])
        g = map_estimate(posterior_update(default_hyperparams(data), SufficientStats.from_data(data)))
        assert g.mean[0] == pytest.approx(0.0, abs=1e-15)
        assert g.cov[0, 0] == pytest.approx(0.375, rel=1e-12)

    def test_mle_reduction(self, rng):
        d = 3
        data = rng.standard_normal((20, d))
        prior = GIWHyperparams(np.zeros(d), 0.0, np.zeros((d, d)), -(d + 2.0))
        g = map_estimate(posterior_update(prior, SufficientStats.from_data(data)))
        np.testing.assert_allclose(g.mean, data.mean(axis=0), rtol=1e-12)
        np.testing.assert_allclose(g.cov, np.cov(data.T, bias=True), rtol=1e-10)

    def test_prior_mode_without_data(self, rng):
        data = rng.standard_normal((10, 2))
        prior = default_hyperparams(data)
        g = map_estimate(posterior_update(prior, SufficientStats.from_data(np.zeros((0, 2)))))
        np.testing.assert_allclose(g.cov, prior.lambda0 / (2 * 2 + 4))
        np.testing.assert_array_equal(g.mean, prior.mu0)

    def test_default_fit_is_valid_gaussian_even_when_d_exceeds_n(self, rng):
        data = rng.standard_normal((5, 20))
        g = map_estimate(posterior_update(default_hyperparams(data), SufficientStats.from_data(data)))
        assert not g.jitter_applied
        assert np.min(np.linalg.eigvalsh(g.cov)) > 0


class TestInverseWishart:
    def test_matches_inverse_gamma(self):
        expected = stats.invgamma(a=1.5, scale=0.5).logpdf(1.0)
        assert iw_log_density([[1.0]], [[1.0]], 3.0) == pytest.approx(expected, rel=1e-12)

    def test_matches_scipy_multivariate(self, rng):
        lam, sigma = random_pd(rng, 3), random_pd(rng, 3)
        expected = stats.invwishart(df=6.5, scale=lam).logpdf(sigma)
        assert iw_log_density(sigma, lam, 6.5) == pytest.approx(expected, rel=1e-10)

    def test_integrates_to_one_1d(self):
        f = lambda s: np.exp(iw_log_density([[s]], [[1.0]], 3.0))  # noqa: E731
        total = integrate.quad(f, 0, 1)[0] + integrate.quad(f, 1, np.inf)[0]
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_mode(self):
        grid = np.linspace(0.01, 2.0, 19901)
        vals = [iw_log_density([[s]], [[1.0]], 3.0) for s in grid]
        assert grid[int(np.argmax(vals))] == pytest.approx(1.0 / 5.0, abs=1e-3)

    def test_nu_too_small(self):
        with pytest.raises(InvalidInput):
            iw_log_density(np.eye(2), np.eye(2), 1.0)
