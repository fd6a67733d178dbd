import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dpmnig.distributions import (
    ComponentParams,
    GigParams,
    NotPositiveDefiniteError,
    gig_expectations,
    mnig_logpdf,
    mnig_logpdf_batch,
    mnig_mean_cov,
    sample_ig,
    sample_mnig,
    sample_mvn_precision,
    sample_truncated_normal_positive,
    sample_wishart,
    sample_wishart_batch,
)
from oracles import DENSITY_CASES, GIG_GRID, gig_moment, mixture_density, total_mass


class TestComponentParams:
    def test_rejects_nonpositive_gamma(self):
        with pytest.raises(ValueError):
            ComponentParams([0.0], [0.0], 0.0, [[1.0]])

    def test_rejects_indefinite_sigma(self):
        with pytest.raises(NotPositiveDefiniteError):
            ComponentParams([0, 0], [0, 0], 1.0, [[1.0, 2.0], [2.0, 1.0]])

    def test_rejects_dimension_mismatch(self):
        with pytest.raises(ValueError):
            ComponentParams([0, 0], [0], 1.0, np.eye(2))

    def test_derived_quantities(self):
        p = ComponentParams([1.0, 2.0], [0.3, -0.1], 0.8, [[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(p.sigma_inv, np.linalg.inv(p.sigma), rtol=1e-12)
        np.testing.assert_allclose(p.logdet, np.log(np.linalg.det(p.sigma)), rtol=1e-12)
        want = np.sqrt(0.8**2 + p.beta @ np.linalg.solve(p.sigma, p.beta))
        np.testing.assert_allclose(p.alpha_star, want, rtol=1e-12)

    def test_from_precision_roundtrip(self):
        prec = np.array([[3.0, -1.0], [-1.0, 2.0]])
        p = ComponentParams.from_precision([0, 1], [1, 0], 2.0, prec)
        np.testing.assert_allclose(p.sigma @ prec, np.eye(2), atol=1e-12)


class TestDensity:
    @pytest.mark.parametrize("p", DENSITY_CASES[:3] + DENSITY_CASES[4:5])
    def test_integrates_to_one(self, p):
        assert abs(total_mass(p) - 1.0) < 1e-4

    @pytest.mark.parametrize("k", range(len(DENSITY_CASES)))
    def test_matches_mixture_representation(self, k, rng):
        p = DENSITY_CASES[k]
        x, _ = sample_mnig(p, rng, size=4)
        for row in x:
            want = mixture_density(row, p)
            np.testing.assert_allclose(np.exp(mnig_logpdf(row, p)), want, rtol=1e-6)

    def test_one_dimensional_nig_agrees_with_scipy(self):
        # scipy's norminvgauss(a, b, loc, scale) with a = alpha delta, b = beta delta;
        # here delta = sqrt(sigma) and alpha = sqrt(gamma^2 + beta^2 / sigma) / delta
        mu, beta, gamma, s2 = 0.4, -0.6, 1.3, 2.0
        p = ComponentParams([mu], [beta], gamma, [[s2]])
        delta = np.sqrt(s2)
        a = p.alpha_star
        b = beta / delta
        x = np.linspace(-6, 6, 25)
        want = stats.norminvgauss(a, b, loc=mu, scale=delta).logpdf(x)
        np.testing.assert_allclose(mnig_logpdf(x[:, None], p), want, rtol=1e-10)

    def test_far_tail_is_finite(self):
        p = DENSITY_CASES[4]
        v = mnig_logpdf(np.array([1e4, -1e4]), p)
        assert np.isfinite(v) and v < -1e3

    def test_batch_agrees_with_single(self, rng):
        params = DENSITY_CASES[3:]
        x = rng.normal(scale=5.0, size=(7, 2))
        mu = np.array([p.mu for p in params])
        beta = np.array([p.beta for p in params])
        gamma = np.array([p.gamma for p in params])
        prec = np.array([p.sigma_inv for p in params])
        got = mnig_logpdf_batch(x[:, None, :], mu[None], beta[None], gamma[None], prec[None])
        want = np.column_stack([mnig_logpdf(x, p) for p in params])
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            mnig_logpdf(np.zeros(3), DENSITY_CASES[3])


class TestGig:
    @pytest.mark.parametrize("lam,chi,psi", GIG_GRID)
    def test_expectations_match_quadrature(self, lam, chi, psi):
        e_u, e_inv = gig_expectations(GigParams(lam, chi, psi))
        np.testing.assert_allclose(e_u, gig_moment(lam, chi, psi, 1), rtol=1e-8)
        np.testing.assert_allclose(e_inv, gig_moment(lam, chi, psi, -1), rtol=1e-8)

    def test_vectorized(self):
        chi = np.array([1.0, 2.0, 5.0])
        e_u, e_inv = gig_expectations(GigParams(-1.5, chi, 0.7))
        for k, c in enumerate(chi):
            s_u, s_inv = gig_expectations(GigParams(-1.5, c, 0.7))
            assert e_u[k] == pytest.approx(s_u, rel=1e-14)
            assert e_inv[k] == pytest.approx(s_inv, rel=1e-14)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            GigParams(-1.0, 0.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(lam=st.sampled_from([-1.0, -1.5, -2.5]), chi=st.floats(1.0, 100.0), psi=st.floats(0.01, 50.0))
    def test_jensen(self, lam, chi, psi):
        e_u, e_inv = gig_expectations(GigParams(lam, chi, psi))
        assert e_u > 0 and e_inv > 0
        assert e_u * e_inv >= 1.0 - 1e-12


class TestSamplers:
    def test_ig_moments(self, rng):
        u = sample_ig(0.8, rng, size=200_000)
        # IG(1, gamma): mean 1/gamma, variance 1/gamma^3
        assert abs(u.mean() - 1.25) < 4 * np.sqrt(1 / 0.8**3 / u.size)
        assert u.var() == pytest.approx(1 / 0.8**3, rel=0.05)

    def test_ig_distribution(self, rng):
        u = sample_ig(1.7, rng, size=20_000)
        # scipy invgauss(mu, scale) has mean mu*scale and shape scale
        ref = stats.invgauss(mu=1 / 1.7, scale=1.0)
        assert stats.kstest(u, ref.cdf).pvalue > 1e-3

    @pytest.mark.parametrize("mean,var", [(1.0, 1.0), (-2.0, 0.5), (-30.0, 1.0), (0.0, 4.0)])
    def test_truncated_normal(self, mean, var, rng):
        x = sample_truncated_normal_positive(mean, var, rng, size=20_000)
        assert np.all(x > 0)
        sd = np.sqrt(var)
        ref = stats.truncnorm(-mean / sd, np.inf, loc=mean, scale=sd)
        assert stats.kstest(x, ref.cdf).pvalue > 1e-3

    def test_wishart_mean_and_variance(self, rng):
        scale = np.array([[2.0, 0.3], [0.3, 0.5]])
        df = 5.5
        w = np.array([sample_wishart(df, scale, rng) for _ in range(20_000)])
        np.testing.assert_allclose(w.mean(axis=0), df * scale, rtol=0.03, atol=0.03)
        var = df * (scale**2 + np.outer(np.diag(scale), np.diag(scale)))
        np.testing.assert_allclose(w.var(axis=0), var, rtol=0.08)

    def test_wishart_batch_matches_scipy_mean(self, rng):
        scale = np.array([[1.0, -0.4], [-0.4, 2.0]])
        w = sample_wishart_batch(np.full(20_000, 3.2), np.linalg.cholesky(scale), rng)
        np.testing.assert_allclose(w.mean(axis=0), stats.wishart(3.2, scale).mean(), rtol=0.05, atol=0.05)

    def test_wishart_rejects_low_df(self, rng):
        with pytest.raises(ValueError):
            sample_wishart(0.5, np.eye(2), rng)

    def test_mvn_precision(self, rng):
        prec = np.array([[4.0, 1.0], [1.0, 2.0]])
        x = np.array([sample_mvn_precision([1.0, -1.0], prec, rng) for _ in range(20_000)])
        np.testing.assert_allclose(np.cov(x, rowvar=False), np.linalg.inv(prec), atol=0.01)

    @pytest.mark.parametrize("k", [1, 4, 5])
    def test_mnig_sample_moments(self, k, rng):
        p = DENSITY_CASES[k]
        x, u = sample_mnig(p, rng, size=100_000)
        mean, cov = mnig_mean_cov(p)
        se = np.sqrt(np.diag(cov) / x.shape[0])
        assert np.all(np.abs(x.mean(axis=0) - mean) < 5 * se)
        np.testing.assert_allclose(np.cov(x, rowvar=False), cov, rtol=0.1, atol=0.05 * np.abs(cov).max())
        assert u.shape == (100_000,)

    def test_mnig_single_draw_shapes(self, rng):
        x, u = sample_mnig(DENSITY_CASES[4], rng)
        assert x.shape == (2,) and isinstance(u, float)

    def test_mean_cov_table_values(self):
        # the mean and variance rows of the first simulation design
        p = ComponentParams([-12, 2], [0.2, -0.25], 0.6, [[2, 1], [1, 1]])
        mean, cov = mnig_mean_cov(p)
        np.testing.assert_allclose(mean, [-11.67, 1.58], atol=0.005)
        np.testing.assert_allclose(cov, [[3.52, 1.44], [1.44, 1.96]], atol=0.005)
