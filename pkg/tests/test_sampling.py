import numpy as np
import pytest

from landau.analytic import BkwSolution, PreSingularTimeError
from landau.core import ensemble_moments
from landau.sampling import Rng, sample_bkw, sample_gaussian

from reference import bkw_radial_cdf, rejection_sample_bkw

B_BKW = 1.0 / 24.0


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(42).standard_normal((1000, 3))
        b = Rng(42).standard_normal((1000, 3))
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(
            Rng(1).standard_normal(100), Rng(2).standard_normal(100)
        )

    def test_substreams_independent_and_reproducible(self):
        r = Rng(7)
        s0 = r.substream(0).standard_normal(50)
        s1 = r.substream(1).standard_normal(50)
        assert not np.array_equal(s0, s1)
        assert np.array_equal(s0, Rng(7).substream(0).standard_normal(50))

    def test_polar_normals_distribution(self):
        z = Rng(3).standard_normal(400_000)
        assert abs(z.mean()) < 3.0 / np.sqrt(z.size)
        assert abs(z.std() - 1.0) < 3.0 / np.sqrt(z.size)
        assert abs(np.mean(z**3)) < 3.0 * np.sqrt(15.0 / z.size)
        assert np.mean(z**4) == pytest.approx(3.0, abs=3.0 * np.sqrt(96.0 / z.size))


class TestSampleGaussian:
    def test_covariance_close(self):
        n = 100_000
        var = np.array([1.8, 0.2, 1.0])
        e = sample_gaussian(Rng(5), n, np.zeros(3), var)
        cov = ensemble_moments(e).second_moment
        assert np.abs(np.diag(cov) - var).max() < 5.0 / np.sqrt(n) * var.max()
        off = cov - np.diag(np.diag(cov))
        assert np.abs(off).max() < 5.0 / np.sqrt(n)

    def test_two_particles_distinct(self):
        e = sample_gaussian(Rng(0), 2, np.zeros(2), np.ones(2))
        assert np.isfinite(e.positions).all()
        assert not np.array_equal(e.positions[0], e.positions[1])

    def test_deterministic(self):
        a = sample_gaussian(Rng(42), 100, np.zeros(3), np.ones(3))
        b = sample_gaussian(Rng(42), 100, np.zeros(3), np.ones(3))
        assert np.array_equal(a.positions, b.positions)

    def test_mean_shift(self):
        mean = np.array([5.0, -3.0])
        e = sample_gaussian(Rng(1), 50_000, mean, np.array([0.5, 0.1]))
        assert np.allclose(ensemble_moments(e).momentum, mean, atol=0.05)


class TestSampleBkw:
    def test_large_time_reduces_to_standard_normal(self):
        n = 50_000
        e = sample_bkw(Rng(6), n, BkwSolution(3, B_BKW, 1e9))
        m = ensemble_moments(e)
        assert np.abs(m.momentum).max() < 4.0 / np.sqrt(n)
        assert np.allclose(m.second_moment, np.eye(3), atol=5.0 / np.sqrt(n))

    def test_energy_matches_analytic(self):
        # trace of the second moment is d at every valid time
        n = 100_000
        sol = BkwSolution(3, B_BKW, 5.5)
        e = sample_bkw(Rng(7), n, sol)
        m = ensemble_moments(e)
        assert m.two_energy == pytest.approx(3.0, abs=5.0 * np.sqrt(15.0 / n))

    def test_pre_singular_rejected(self):
        with pytest.raises(PreSingularTimeError):
            sample_bkw(Rng(0), 100, BkwSolution(3, B_BKW, 5.0))

    def test_deterministic(self):
        sol = BkwSolution(3, B_BKW, 6.0)
        a = sample_bkw(Rng(9), 500, sol)
        b = sample_bkw(Rng(9), 500, sol)
        assert np.array_equal(a.positions, b.positions)

    def test_against_rejection_sampler(self):
        # acceptance 7d: mixture vs rejection second moments within 5/sqrt(n)
        n = 100_000
        sol = BkwSolution(3, B_BKW, 5.5)
        mix = ensemble_moments(sample_bkw(Rng(10), n, sol)).second_moment
        rej = rejection_sample_bkw(sol, n, seed=11)
        rej_sigma = rej.T @ rej / n
        assert np.abs(mix - rej_sigma).max() < 5.0 / np.sqrt(n)

    def test_radius_cdf_kolmogorov_smirnov(self):
        n = 100_000
        sol = BkwSolution(3, B_BKW, 5.5)
        e = sample_bkw(Rng(12), n, sol)
        r = np.sort(np.linalg.norm(e.positions, axis=1))
        cdf = bkw_radial_cdf(sol, r)
        empirical_hi = np.arange(1, n + 1) / n
        empirical_lo = np.arange(0, n) / n
        ks = max(
            np.abs(empirical_hi - cdf).max(), np.abs(cdf - empirical_lo).max()
        )
        assert ks < 1.63 / np.sqrt(n)

    def test_isotropy(self):
        n = 50_000
        e = sample_bkw(Rng(13), n, BkwSolution(3, B_BKW, 6.0))
        sigma = ensemble_moments(e).second_moment
        off = sigma - np.diag(np.diag(sigma))
        assert np.abs(off).max() < 5.0 / np.sqrt(n)
        assert np.std(np.diag(sigma)) < 5.0 / np.sqrt(n)
