import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from refflow import oracles
from refflow.bridge import coefficients, interpolate, LINEAR
from refflow.errors import InputError
from refflow.posterior import (
    DataSet,
    EmpiricalPosterior,
    empirical_score,
    empirical_velocity,
    endpoint_mean,
    log_marginal_density,
    posterior,
    posterior_weights,
)

coord = st.floats(-5, 5, allow_nan=False)


@st.composite
def cloud(draw, max_n=8, d=2):
    n = draw(st.integers(1, max_n))
    pts = draw(arrays(np.float64, (n, d), elements=coord))
    x = draw(arrays(np.float64, d, elements=coord))
    t = draw(st.floats(0, 0.95))
    return DataSet(pts), x, t


class TestDataSet:
    def test_one_dim_points_become_column(self):
        assert DataSet([1.0, 2.0, 3.0]).points.shape == (3, 1)

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            DataSet(np.zeros((0, 2)))

    def test_rejects_nonfinite(self):
        with pytest.raises(InputError):
            DataSet([[0.0, np.nan]])

    def test_label_length(self):
        with pytest.raises(InputError):
            DataSet([[0.0], [1.0]], labels=[0])

    @pytest.mark.parametrize("w", [[1.0, -1.0], [0.0, 0.0], [1.0, np.inf]])
    def test_bad_weights(self, w):
        with pytest.raises(InputError):
            DataSet([[0.0], [1.0]], weights=w)

    def test_prior_normalized_on_access(self):
        np.testing.assert_allclose(DataSet([[0.0], [1.0]], weights=[1, 3]).prior, [0.25, 0.75])

    def test_immutable(self):
        ds = DataSet([[0.0, 1.0]])
        with pytest.raises(ValueError):
            ds.points[0, 0] = 5.0


class TestWeights:
    def test_uniform_at_t0(self, rng):
        w = posterior_weights(rng.normal(size=2), 0.0, DataSet(rng.normal(size=(4, 2))))
        np.testing.assert_allclose(w, 0.25, rtol=0, atol=1e-15)

    def test_single_point(self):
        assert posterior_weights([3.0, 1.0], 0.7, DataSet([[0.5, 0.5]])).tolist() == [1.0]

    def test_symmetric_pair(self):
        np.testing.assert_allclose(posterior_weights([0, 0], 0.5, DataSet([[1, 0], [-1, 0]])), [0.5, 0.5])

    def test_matches_direct_bayes_3d(self, rng):
        for _ in range(20):
            data = DataSet(rng.normal(size=(10, 3)), weights=rng.uniform(0.1, 1, 10))
            x, t = rng.normal(size=3), rng.uniform(0.05, 0.95)
            co = coefficients(LINEAR, t)
            ref = oracles.gaussian_bayes_weights(x, data.points, data.prior, co.alpha, co.beta)
            assert oracles.rel_err(posterior_weights(x, t, data), ref) <= 1e-9

    @given(cloud(), st.floats(0.05, 20))
    def test_normalized(self, case, tau):
        data, x, t = case
        w = posterior_weights(x, t, data, temperature=tau)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1) <= 1e-10

    def test_batch_matches_rows(self, rng):
        data = DataSet(rng.normal(size=(6, 2)))
        X = rng.normal(size=(5, 2))
        W = posterior_weights(X, 0.4, data)
        for i in range(5):
            np.testing.assert_allclose(W[i], posterior_weights(X[i], 0.4, data), rtol=0, atol=1e-15)

    def test_cold_limit_is_nearest_neighbor(self, rng):
        hits = 0
        for _ in range(50):
            data = DataSet(rng.normal(size=(8, 2)))
            x, t = rng.normal(size=2), rng.uniform(0.1, 0.9)
            _, beta = LINEAR.alpha_beta(t)
            dist = np.linalg.norm(x - beta * data.points, axis=1)
            order = np.sort(dist)
            if order[1] - order[0] < 1e-3:
                continue
            hits += 1
            w = posterior_weights(x, t, data, temperature=1e-6)
            assert w.argmax() == dist.argmin()
            assert w.max() >= 1 - 1e-6
        assert hits > 40

    def test_temperature_only_changes_weights_not_density(self, rng):
        data = DataSet(rng.normal(size=(5, 2)))
        x = rng.normal(size=2)
        a = posterior_weights(x, 0.5, data, temperature=1.0)
        b = posterior_weights(x, 0.5, data, temperature=3.0)
        assert not np.allclose(a, b)
        assert posterior(x, 0.5, data, temperature=3.0).log_marginal == log_marginal_density(x, 0.5, data)

    def test_sqrt_d_temperature(self, rng):
        data = DataSet(rng.normal(size=(5, 4)))
        x = rng.normal(size=4)
        np.testing.assert_allclose(posterior_weights(x, 0.5, data, temperature="sqrt_d"),
                                   posterior_weights(x, 0.5, data, temperature=2.0))

    @pytest.mark.parametrize("tau", [0.0, -1.0, "hot"])
    def test_bad_temperature(self, tau):
        with pytest.raises(InputError):
            posterior_weights([0.0], 0.5, DataSet([[1.0]]), temperature=tau)

    def test_query_dim_mismatch(self):
        with pytest.raises(InputError):
            posterior_weights([0.0, 1.0, 2.0], 0.5, DataSet([[1.0, 0.0]]))

    def test_extreme_distance_stays_finite(self):
        w = posterior_weights([1e4, 0.0], 0.999, DataSet([[0.0, 0.0], [1.0, 0.0]]))
        assert np.all(np.isfinite(w)) and abs(w.sum() - 1) < 1e-12

    @given(cloud(), arrays(np.float64, 2, elements=coord))
    def test_shift_equivariance(self, case, v):
        data, x, t = case
        _, beta = LINEAR.alpha_beta(t)
        moved = DataSet(data.points + v)
        np.testing.assert_allclose(posterior_weights(x + beta * v, t, moved), posterior_weights(x, t, data),
                                   rtol=0, atol=1e-10)
        np.testing.assert_allclose(endpoint_mean(x + beta * v, t, moved), endpoint_mean(x, t, data) + v,
                                   rtol=0, atol=1e-9)

    def test_concentration_in_t(self, rng):
        grid = np.round(np.arange(0.1, 1.0, 0.1), 1)
        data = DataSet(rng.normal(size=(10, 2)))
        k = 3
        avg = np.zeros(grid.size)
        for _ in range(100):
            x0 = rng.normal(size=2)
            avg += [posterior_weights(interpolate(x0, data.points[k], t), t, data)[k] for t in grid]
        avg /= 100
        assert np.all(np.diff(avg) >= -1e-12)


class TestMean:
    def test_t0_is_prior_mean(self, rng):
        data = DataSet(rng.normal(size=(7, 2)), weights=rng.uniform(0.1, 1, 7))
        for x in rng.normal(size=(3, 2)):
            np.testing.assert_allclose(endpoint_mean(x, 0.0, data), data.prior @ data.points, atol=1e-14)

    def test_single_point(self):
        np.testing.assert_array_equal(endpoint_mean([5.0, -3.0], 0.8, DataSet([[1.0, 2.0]])), [1.0, 2.0])

    def test_symmetric_pair(self):
        np.testing.assert_allclose(endpoint_mean([0, 0], 0.5, DataSet([[1, 0], [-1, 0]])), [0, 0], atol=1e-15)

    @given(cloud())
    def test_in_convex_hull(self, case):
        data, x, t = case
        m = endpoint_mean(x, t, data)
        lo, hi = data.points.min(axis=0), data.points.max(axis=0)
        assert np.all(m >= lo - 1e-9) and np.all(m <= hi + 1e-9)


class TestVelocity:
    def test_single_point(self, rng):
        p = rng.normal(size=2)
        x, t = rng.normal(size=2), 0.3
        np.testing.assert_allclose(empirical_velocity(x, t, DataSet([p])), (p - x) / (1 - t))

    def test_at_data_mean_t0(self, rng):
        data = DataSet(rng.normal(size=(6, 2)))
        np.testing.assert_allclose(empirical_velocity(data.points.mean(axis=0), 0.0, data), 0, atol=1e-14)

    def test_two_point_1d_oracle(self):
        data = DataSet([[-1.0], [1.0]])
        w = oracles.gaussian_bayes_weights(np.array([0.3]), data.points, data.prior, 0.5, 0.5)
        mu = oracles.weighted_average(w, data.points)
        np.testing.assert_allclose(empirical_velocity([0.3], 0.5, data), (mu - 0.3) / 0.5, rtol=1e-12)

    def test_provider(self, rng):
        data = DataSet(rng.normal(size=(6, 2)))
        p = EmpiricalPosterior(data, temperature=2.0)
        x = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(p(x, 0.3), empirical_velocity(x, 0.3, data, temperature=2.0))
        np.testing.assert_array_equal(p.mean(x, 0.3), endpoint_mean(x, 0.3, data, temperature=2.0))


class TestDensityAndScore:
    def test_mode_value(self):
        t = 0.6
        al, be = LINEAR.alpha_beta(t)
        p = np.array([0.4, -1.2])
        assert log_marginal_density(be * p, t, DataSet([p])) == pytest.approx(-np.log(2 * np.pi * al ** 2))

    def test_t0_standard_normal(self, rng):
        x = rng.normal(size=3)
        want = -0.5 * x @ x - 1.5 * np.log(2 * np.pi)
        assert log_marginal_density(x, 0.0, DataSet(rng.normal(size=(5, 3)))) == pytest.approx(want, abs=1e-12)

    def test_naive_sum(self, rng):
        data = DataSet(rng.normal(size=(5, 2)))
        for _ in range(10):
            x, t = rng.normal(size=2), rng.uniform(0.05, 0.9)
            al, be = LINEAR.alpha_beta(t)
            ref = oracles.gaussian_mixture_log_density(x, data.points, data.prior, al, be)
            assert oracles.rel_err(log_marginal_density(x, t, data), ref) <= 1e-10

    def test_no_underflow_far_away(self):
        val = log_marginal_density([1e3, 0.0], 0.99, DataSet([[0.0, 0.0]]))
        assert np.isfinite(val)

    def test_score_single_point(self, rng):
        p, x, t = rng.normal(size=2), rng.normal(size=2), 0.4
        al, be = LINEAR.alpha_beta(t)
        np.testing.assert_allclose(empirical_score(x, t, DataSet([p])), (be * p - x) / al ** 2, rtol=1e-13)

    def test_score_zero_at_symmetric_center(self):
        np.testing.assert_allclose(empirical_score([0.0, 0.0], 0.5, DataSet([[1, 0], [-1, 0]])), 0, atol=1e-15)

    def test_score_matches_fd_step_1e4(self, rng):
        for _ in range(50):
            data = DataSet(rng.normal(size=(6, 2)))
            x, t = rng.normal(size=2), rng.uniform(0.05, 0.95)
            fd = oracles.central_gradient(lambda z: log_marginal_density(z, t, data), x, h=1e-4)
            assert oracles.rel_err(empirical_score(x, t, data), fd, floor=1e-8) <= 1e-5
