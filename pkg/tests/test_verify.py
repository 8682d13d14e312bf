import math

import numpy as np
import pytest
from scipy.stats import norm

from diffpnp.benchmarks import bimodal_linear, sharp_linear
from diffpnp.errors import ConfigurationError, DomainCoverageError, ResolutionError
from diffpnp.forward import FlatModel, LinearGaussianModel, QuantizedSensingModel
from diffpnp.prior import GaussianMixturePrior
from diffpnp.verify import (
    GridDensity,
    KernelMatrix,
    analytic_gm_linear_posterior,
    binned_tv,
    build_kernel,
    detailed_balance_residual,
    grid_denoising_posterior,
    grid_pi_eta,
    grid_posterior,
    grid_prior,
    grid_q_eta,
    kernel_spectrum,
    ks_statistic,
    make_grid,
    spectral_analysis,
    stationarity_tv,
    trapezoid_weights,
    tv_distance,
    wasserstein1_1d,
)

STD = GaussianMixturePrior.standard_normal(1)


@pytest.fixture(scope="module")
def bench():
    b = bimodal_linear()
    grid = make_grid(b.prior, 401)
    return b, grid


def density_on(grid, pdf):
    dens = pdf(grid)
    w = trapezoid_weights(grid) * dens
    return GridDensity(grid, w / w.sum(), grid[1] - grid[0], dens / w.sum())


class TestGridDensities:
    def test_normalized(self, bench):
        b, grid = bench
        post = grid_posterior(b.prior, b.model, b.y, grid)
        assert abs(post.weights.sum() - 1) < 1e-10
        assert np.all(np.diff(post.points) > 0) and np.all(post.weights >= 0)
        np.testing.assert_allclose(post.cdf()[-1], 1.0, atol=1e-12)

    def test_conjugate_gaussian(self):
        s2, y = 0.3, np.array([1.2])
        grid = make_grid(STD, 401)
        post = grid_posterior(STD, LinearGaussianModel([[1.0]], s2), y, grid)
        exact = norm(y[0] / (1 + s2), math.sqrt(s2 / (1 + s2))).pdf(grid)
        np.testing.assert_allclose(post.density, exact, atol=1e-6)

    def test_flat_likelihood_gives_prior(self, bench):
        b, grid = bench
        post = grid_posterior(b.prior, FlatModel(1, 3.0), None, grid)
        np.testing.assert_allclose(post.weights, grid_prior(b.prior, grid).weights, atol=1e-15)

    def test_quantized_fine_grid_self_oracle(self):
        prior = GaussianMixturePrior([0.5, 0.5], [-0.8, 0.8], [0.25, 0.25])
        model, y = QuantizedSensingModel(1, 0.4), np.array([1.0])
        coarse = make_grid(prior, 401)
        fine = np.linspace(coarse[0], coarse[-1], 400 * 2500 + 1)
        pc = grid_posterior(prior, model, y, coarse)
        pf = grid_posterior(prior, model, y, fine)
        tv = 0.5 * np.sum(trapezoid_weights(fine) * np.abs(np.interp(fine, coarse, pc.density) - pf.density))
        assert tv < 1e-4

    def test_domain_coverage(self):
        far = GaussianMixturePrior([1.0], [50.0], [0.0])
        with pytest.raises(DomainCoverageError):
            grid_posterior(far, FlatModel(1), None, np.linspace(-1, 1, 11))

    def test_grid_must_be_uniform(self):
        with pytest.raises(ConfigurationError):
            grid_prior(STD, np.array([0.0, 0.1, 0.3, 0.4]))


class TestQEta:
    def test_zero_eta_is_likelihood(self, bench):
        b, grid = bench
        q = grid_q_eta(b.model, b.y, 0.0, grid)
        np.testing.assert_array_equal(q.unnormalized, np.exp(b.model.log_likelihood(grid[:, None], b.y)))

    @pytest.mark.parametrize("eta", [0.1, 0.5])
    def test_constant_likelihood(self, eta):
        q = grid_q_eta(FlatModel(1, -0.7), None, eta, np.linspace(-3, 3, 401))
        np.testing.assert_allclose(q.unnormalized, math.exp(-0.7), rtol=1e-12)

    def test_gaussian_widening(self):
        s2, eta, y = 0.2, 0.3, np.array([0.4])
        grid = np.linspace(-4, 4, 801)
        q = grid_q_eta(LinearGaussianModel([[1.0]], s2), y, eta, grid)
        np.testing.assert_allclose(q.unnormalized, norm(y[0], math.sqrt(s2 + eta**2)).pdf(grid), atol=1e-6)

    def test_resolution_guard(self):
        with pytest.raises(ResolutionError):
            grid_q_eta(FlatModel(1), None, 0.1, np.linspace(-3, 3, 101))


class TestPiEta:
    def test_zero_eta_is_posterior(self, bench):
        b, grid = bench
        np.testing.assert_allclose(
            grid_pi_eta(b.prior, b.model, b.y, 0.0, grid).density,
            grid_posterior(b.prior, b.model, b.y, grid).density,
            rtol=1e-14,
        )

    def test_flat_likelihood_gives_prior(self, bench):
        b, grid = bench
        pi = grid_pi_eta(b.prior, FlatModel(1), None, 0.3, grid)
        np.testing.assert_allclose(pi.weights, grid_prior(b.prior, grid).weights, atol=1e-12)

    def test_fixed_point_of_kernel(self, bench):
        b, grid = bench
        pi = grid_pi_eta(b.prior, b.model, b.y, 0.3, grid)
        assert stationarity_tv(build_kernel(b.prior, b.model, b.y, 0.3, grid), pi) <= 1e-6

    def test_grid_refinement(self, bench):
        b, grid = bench
        fine = np.linspace(grid[0], grid[-1], 801)
        a = grid_pi_eta(b.prior, b.model, b.y, 0.3, grid)
        c = grid_pi_eta(b.prior, b.model, b.y, 0.3, fine)
        # compare on the shared nodes so interpolation error does not enter
        tv = 0.5 * np.sum(trapezoid_weights(grid) * np.abs(a.density - c.density[::2]))
        assert tv < 1e-4

    def test_denoising_posterior_gaussian(self):
        grid = make_grid(STD, 401, eta=1.0)
        ref = grid_denoising_posterior(STD, 2.0, 1.0, grid)
        np.testing.assert_allclose(ref.density, norm(1.0, math.sqrt(0.5)).pdf(grid), atol=1e-6)


class TestAnalyticPosterior:
    def test_standard_case(self):
        post = analytic_gm_linear_posterior(STD, LinearGaussianModel([[1.0]], 1.0), np.array([2.0]))
        np.testing.assert_allclose(post.means, [[1.0]], rtol=1e-15)
        np.testing.assert_allclose(post.variances, [[0.5]], rtol=1e-15)

    def test_zero_weight_component(self):
        prior = GaussianMixturePrior([1.0, 0.0], [0.0, 3.0], [1.0, 1.0])
        post = analytic_gm_linear_posterior(prior, LinearGaussianModel([[1.0]], 1.0), np.array([3.0]))
        np.testing.assert_array_equal(post.weights, [1.0, 0.0])

    def test_matches_grid(self):
        b = sharp_linear()
        grid = make_grid(b.prior, 4001)
        exact = analytic_gm_linear_posterior(b.prior, b.model, b.y)
        post = grid_posterior(b.prior, b.model, b.y, grid)
        np.testing.assert_allclose(post.density, np.exp(exact.log_density(grid[:, None])), atol=1e-6)

    def test_non_diagonal_rejected(self):
        prior = GaussianMixturePrior.standard_normal(2)
        with pytest.raises(ConfigurationError):
            analytic_gm_linear_posterior(prior, LinearGaussianModel([[1.0, 1.0]], 1.0), np.array([0.5]))


class TestKernels:
    @pytest.mark.parametrize("which", ["PCS", "DDS", "DPnP", "AUX"])
    def test_row_stochastic(self, bench, which):
        b, grid = bench
        K = build_kernel(b.prior, b.model, b.y, 0.3, grid, which)
        assert K.label == which and K.eta == 0.3
        assert np.all(K.matrix >= 0)
        np.testing.assert_allclose(K.matrix.sum(axis=1), 1.0, atol=1e-8)
        assert detailed_balance_residual(K, K.stationary) <= 1e-8

    def test_flat_likelihood_pcs_is_gaussian(self, bench):
        b, grid = bench
        K = build_kernel(b.prior, FlatModel(1), None, 0.3, grid, "PCS").matrix
        G = np.exp(-0.5 * (grid[:, None] - grid[None, :]) ** 2 / 0.09) * trapezoid_weights(grid)
        np.testing.assert_allclose(K, G / G.sum(axis=1, keepdims=True), atol=1e-14)

    def test_flat_prior_dds_is_gaussian(self):
        grid = np.linspace(-2, 2, 201)
        wide = GaussianMixturePrior([1.0], [0.0], [1e8])
        K = build_kernel(wide, FlatModel(1), None, 0.2, grid, "DDS").matrix
        G = np.exp(-0.5 * (grid[:, None] - grid[None, :]) ** 2 / 0.04) * trapezoid_weights(grid)
        np.testing.assert_allclose(K, G / G.sum(axis=1, keepdims=True), atol=1e-7)

    def test_bad_label_and_resolution(self, bench):
        b, grid = bench
        with pytest.raises(ConfigurationError):
            build_kernel(b.prior, b.model, b.y, 0.3, grid, "XYZ")
        with pytest.raises(ResolutionError):
            build_kernel(b.prior, b.model, b.y, 0.05, grid)

    def test_detailed_balance_benchmark(self, bench):
        b, grid = bench
        pi = grid_pi_eta(b.prior, b.model, b.y, 0.3, grid)
        assert detailed_balance_residual(build_kernel(b.prior, b.model, b.y, 0.3, grid), pi) <= 1e-8

    def test_detailed_balance_negative_control(self, bench):
        b, grid = bench
        pi = grid_pi_eta(b.prior, b.model, b.y, 0.3, grid)
        aux = build_kernel(b.prior, b.model, b.y, 0.3, grid, "AUX")
        assert detailed_balance_residual(aux, pi) > 1e-3

    def test_symmetric_toy(self):
        M = np.array([[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.2, 0.3, 0.5]])
        assert detailed_balance_residual(M, np.full(3, 1 / 3)) == 0.0


class TestSpectral:
    def test_rank_one(self):
        pi = np.array([0.2, 0.5, 0.3])
        lam, chi2 = spectral_analysis(np.tile(pi, (3, 1)), pi=pi, p0=np.array([0.6, 0.2, 0.2]), n_steps=3)
        assert lam < 1e-12 and chi2[0] > 0.1 and np.all(chi2[1:] < 1e-28)

    @pytest.mark.parametrize("a", [0.8, 0.95])
    def test_two_state(self, a):
        M = np.array([[a, 1 - a], [1 - a, a]])
        lam, _ = spectral_analysis(M, pi=np.array([0.5, 0.5]), p0=np.array([1.0, 0.0]))
        np.testing.assert_allclose(lam, 2 * a - 1, rtol=1e-12)

    def test_chi2_contraction(self, bench):
        b, grid = bench
        K = build_kernel(b.prior, b.model, b.y, 0.3, grid)
        pi = grid_pi_eta(b.prior, b.model, b.y, 0.3, grid)
        lam, chi2 = spectral_analysis(K, pi=pi)
        n = np.arange(11)
        assert np.all(chi2 <= lam ** (2 * n) * chi2[0] * (1 + 1e-6))

    def test_simple_top_eigenvalue_and_shared_spectrum(self, bench):
        b, grid = bench
        ev = kernel_spectrum(build_kernel(b.prior, b.model, b.y, 0.3, grid))
        ev_aux = kernel_spectrum(build_kernel(b.prior, b.model, b.y, 0.3, grid, "AUX"))
        np.testing.assert_allclose(ev[0], 1.0, atol=1e-12)
        assert ev[0] - ev[1] > 1e-6
        np.testing.assert_allclose(ev, ev_aux, atol=1e-8)

    def test_bare_matrix_needs_pi(self):
        with pytest.raises(ValueError):
            kernel_spectrum(np.eye(2))


class TestSampleMetrics:
    def test_self_consistency(self, bench, rng):
        b, grid = bench
        ref = grid_posterior(b.prior, b.model, b.y, grid)
        n = 100_000
        s = ref.sample(n, rng)
        sd = math.sqrt(ref.var())
        assert wasserstein1_1d(s, ref) < 3 * sd / math.sqrt(n)
        assert ks_statistic(s, ref) < 1.63 / math.sqrt(n)
        assert binned_tv(s, ref, 40) < math.sqrt(2 * 40 / (math.pi * n))

    def test_point_mass(self):
        h = 1e-9
        ref = GridDensity(np.array([1 - h, 1.0, 1 + h]), np.array([0.0, 1.0, 0.0]), h, np.array([0.0, 1 / h, 0.0]))
        s = np.ones(50)
        assert wasserstein1_1d(s, ref) <= h
        assert binned_tv(s, ref, 1) < 1e-15
        # all mass at c against a continuous F gives max(F(c), 1 - F(c))
        np.testing.assert_allclose(ks_statistic(s, norm(0.5).cdf), norm(0.5).cdf(1.0), rtol=1e-14)

    def test_mean_shift(self, rng):
        grid = np.linspace(-7, 9, 3201)
        ref = density_on(grid, norm(1.0, 1.0).pdf)
        np.testing.assert_allclose(wasserstein1_1d(rng.standard_normal(100_000), ref), 1.0, atol=0.02)

    def test_w1_matches_scipy_for_discrete_reference(self, rng):
        # the exact integral agrees with a brute-force quantile integral
        grid = np.linspace(-5, 5, 1001)
        ref = density_on(grid, norm(0.3, 0.8).pdf)
        s = rng.normal(size=500)
        u = (np.arange(200_000) + 0.5) / 200_000
        q_ref = np.interp(u, ref.cdf(), grid)
        q_s = np.sort(s)[np.minimum((u * s.size).astype(int), s.size - 1)]
        np.testing.assert_allclose(wasserstein1_1d(s, ref), np.mean(np.abs(q_ref - q_s)), rtol=1e-3)

    def test_samples_outside_grid_count(self):
        ref = density_on(np.linspace(-1, 1, 101), lambda x: np.ones_like(x))
        np.testing.assert_allclose(binned_tv(np.full(10, 5.0), ref, 4), 1.0, rtol=1e-12)

    def test_empty(self):
        ref = density_on(np.linspace(-1, 1, 11), lambda x: np.ones_like(x))
        for fn in (wasserstein1_1d, binned_tv, ks_statistic):
            with pytest.raises(ValueError):
                fn([], ref)

    def test_tv_between_grids(self, bench):
        b, grid = bench
        a = grid_prior(b.prior, grid)
        assert tv_distance(a, a) == 0.0
        with pytest.raises(ValueError):
            tv_distance(a, grid_prior(b.prior, grid[::2]))
