import math

import numpy as np
import pytest
from scipy import stats

from cmlsync.errors import (
    DomainError,
    FitError,
    HorizonError,
    InsufficientVisitsError,
)
from cmlsync.evt import (
    compound_poisson_pmf,
    count_visits,
    extract_clusters,
    fit_gev_mle,
    fit_gpd_mle,
    gev_cdf,
    poisson_pmf,
    qk_return_estimator,
    strip_indicator,
    suveges_ei,
    waiting_time_epdf,
)


class TestGevCdf:
    def test_gumbel_branch_continuity(self):
        y = np.linspace(-3, 6, 20)
        near_zero = gev_cdf(y, 0.0, 1.0, 1e-8)
        gumbel = np.exp(-np.exp(-y))
        assert np.allclose(near_zero, gumbel, atol=1e-6)

    def test_support_saturation(self):
        # xi > 0: lower endpoint mu - sigma/xi
        assert gev_cdf(-10.0, 0.0, 1.0, 0.5) == 0.0
        # xi < 0: upper endpoint
        assert gev_cdf(10.0, 0.0, 1.0, -0.5) == 1.0


class TestGevFit:
    def test_recovers_gumbel_sample(self):
        y = stats.gumbel_r.rvs(loc=2.0, scale=0.5, size=4000,
                               random_state=101)
        fit = fit_gev_mle(y)
        assert abs(fit.xi) < 0.05
        assert fit.mu == pytest.approx(2.0, abs=0.05)
        assert fit.sigma == pytest.approx(0.5, abs=0.05)
        assert fit.sigma > 0

    def test_location_scale_equivariance(self):
        y = stats.genextreme.rvs(c=-0.2, size=3000, random_state=7)
        base = fit_gev_mle(y)
        shifted = fit_gev_mle(3.0 * y + 1.0)
        assert shifted.xi == pytest.approx(base.xi, abs=1e-3)
        assert shifted.mu == pytest.approx(3.0 * base.mu + 1.0, abs=1e-2)
        assert shifted.sigma == pytest.approx(3.0 * base.sigma, abs=1e-2)

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_gev_mle(np.arange(10.0))


class TestGpdFit:
    def test_exponential_excesses_have_zero_shape(self):
        z = stats.expon.rvs(scale=2.0, size=5000, random_state=11)
        fit = fit_gpd_mle(z)
        assert abs(fit.xi) < 0.05
        assert fit.sigma == pytest.approx(2.0, abs=0.1)

    def test_threshold_is_location(self):
        z = stats.expon.rvs(scale=1.0, size=2000, random_state=3) + 5.0
        fit = fit_gpd_mle(z, threshold=5.0)
        assert fit.mu == 5.0

    def test_below_threshold_rejected(self):
        with pytest.raises(DomainError):
            fit_gpd_mle(np.array([1.0, -0.5] * 30))


class TestClusters:
    def test_hand_case(self):
        ind = np.array([0, 1, 1, 0, 1, 0, 1, 1, 1, 0], dtype=bool)
        stats_ = extract_clusters(ind)
        assert stats_.exceedance_count == 6
        assert stats_.cluster_count == 2
        assert sorted(stats_.cluster_sizes) == [2, 3]
        assert list(stats_.waiting_times) == [1, 2, 2, 1, 1]

    def test_epdf_normalization_hand_value(self):
        class S:
            waiting_times = np.array([1, 1, 2])

        epdf = waiting_time_epdf(S())
        assert epdf == {1: pytest.approx(2 / 3), 2: pytest.approx(1 / 3)}

    def test_epdf_single_value(self):
        class S:
            waiting_times = np.array([4])

        assert waiting_time_epdf(S()) == {4: 1.0}

    def test_geometric_epdf_log_linear(self):
        rng = np.random.default_rng(17)
        w = rng.geometric(0.2, size=200_000)

        class S:
            waiting_times = w

        epdf = waiting_time_epdf(S())
        ks = np.array(sorted(k for k in epdf if k <= 20))
        slope = np.polyfit(ks, np.log([epdf[k] for k in ks]), 1)[0]
        assert slope == pytest.approx(math.log(1 - 0.2), abs=0.01)


class TestSuveges:
    def test_isolated_bernoulli_exceedances(self):
        rng = np.random.default_rng(23)
        ind = rng.uniform(size=100_000) < 0.02
        est = suveges_ei(ind, 0.98)
        assert est.theta >= 0.95

    def test_every_step_exceeds(self):
        est = suveges_ei(np.ones(1000, dtype=bool), 0.98)
        assert est.theta == 0.0
        assert est.flag == "saturated"

    def test_no_exceedances(self):
        est = suveges_ei(np.zeros(1000, dtype=bool), 0.98)
        assert est.theta == 1.0
        assert est.flag == "no_clusters"

    def test_clustered_series_lower_theta(self):
        rng = np.random.default_rng(5)
        # geometric clusters of mean size 2: theta ~ 0.5
        ind = np.zeros(200_000, dtype=bool)
        t = 0
        while t < ind.size:
            if rng.uniform() < 0.01:
                size = rng.geometric(0.5)
                ind[t:t + size] = True
                t += size + 1
            else:
                t += 1
        est = suveges_ei(ind, 1.0 - ind.mean())
        assert est.theta == pytest.approx(0.5, abs=0.05)


class TestQkEstimator:
    def test_no_quick_return_gives_one(self, spec2):
        # visits spaced far beyond k_max
        traj = np.full((20_000, 2), 0.5)
        traj[:, 1] = 0.9
        for t in range(0, 20_000, 200):
            traj[t, 1] = 0.5 + 1e-6
        q, est = qk_return_estimator(traj, accuracy=1e-4, k_max=50,
                                     min_visits=50)
        assert np.all(q == 0.0)
        assert est.theta == 1.0

    def test_always_inside_gives_zero(self):
        traj = np.full((5000, 2), 0.25)
        q, est = qk_return_estimator(traj, accuracy=1e-3, min_visits=50)
        assert q[0] == 1.0
        assert est.theta == 0.0

    def test_insufficient_visits(self):
        traj = np.column_stack([np.linspace(0, 0.999, 500),
                                np.linspace(0.5, 0.9, 500)])
        with pytest.raises(InsufficientVisitsError):
            qk_return_estimator(traj, accuracy=1e-9)

    def test_strip_indicator_matches_gap(self, rng):
        traj = rng.uniform(0, 1, (100, 3))
        ind = strip_indicator(traj, 0.2)
        gaps = traj.max(axis=1) - traj.min(axis=1)
        assert np.array_equal(ind, gaps <= 0.2)


class TestPmfs:
    def test_poisson_example(self):
        assert poisson_pmf(5.0, 5) == pytest.approx(0.17547, abs=1e-5)

    def test_poisson_normalizes(self):
        total = sum(poisson_pmf(7.0, k) for k in range(200))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_compound_reduces_to_poisson(self):
        for k in range(100):
            assert abs(compound_poisson_pmf(4.0, 0.0, k)
                       - poisson_pmf(4.0, k)) <= 1e-14

    def test_compound_k1_closed_form(self):
        t, p = 2.0, 0.3
        expected = math.exp(-t * (1 - p)) * (1 - p) ** 2 * t
        assert compound_poisson_pmf(t, p, 1) == pytest.approx(expected,
                                                              rel=1e-12)

    def test_compound_normalizes_on_grid(self):
        for t in (0.5, 1.0, 5.0, 20.0):
            for p in np.arange(0.0, 0.95, 0.1):
                total = sum(compound_poisson_pmf(t, p, k) for k in range(3000))
                assert total == pytest.approx(1.0, abs=1e-10)

    def test_compound_mean_is_rescaled_time(self):
        # cluster sizes are geometric(1-p) with mean 1/(1-p); the Poisson
        # cluster-count intensity t(1-p) gives total mean t
        t, p = 3.0, 0.4
        mean = sum(k * compound_poisson_pmf(t, p, k) for k in range(2000))
        assert mean == pytest.approx(t, rel=1e-9)


class TestCountVisits:
    def test_counts_first_window(self, rng):
        traj = rng.uniform(0, 1, (5000, 2))
        c = count_visits(traj, accuracy=0.1, t=0.5)
        ind = strip_indicator(traj, 0.1)
        horizon = int(0.5 / ind.mean())
        assert c == int(ind[1:horizon + 1].sum())

    def test_horizon_error(self, rng):
        traj = rng.uniform(0, 1, (100, 2))
        with pytest.raises(HorizonError):
            count_visits(traj, accuracy=0.01, t=50.0)
