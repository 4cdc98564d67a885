import math

import numpy as np
import pytest
from scipy.special import expit

from refflow import oracles, verify


class TestOraclesAgainstHandValues:
    def test_two_point_weights(self):
        # log ratio of the two Gaussian likelihoods is 2 beta x / alpha^2 = 1.2
        w = oracles.gaussian_bayes_weights([0.3], [[-1.0], [1.0]], [0.5, 0.5], 0.5, 0.5)
        np.testing.assert_allclose(w, [expit(-1.2), expit(1.2)], rtol=1e-15)

    def test_temperature_widens(self):
        w = oracles.gaussian_bayes_weights([0.3], [[-1.0], [1.0]], [0.5, 0.5], 0.5, 0.5, tau=2.0)
        np.testing.assert_allclose(w[1], expit(0.6), rtol=1e-15)

    def test_log_density_single_point(self):
        assert oracles.gaussian_mixture_log_density([0.0, 0.0], [[0.0, 0.0]], [1.0], 1.0, 0.0) == pytest.approx(
            -math.log(2 * math.pi), rel=1e-15)

    def test_softmax(self):
        np.testing.assert_allclose(oracles.direct_softmax([0.0, math.log(3.0)]), [0.25, 0.75], rtol=1e-15)

    def test_rmg_1d(self):
        # single data point 2, single ref 4: mu = 2, mu_ref = 4
        assert oracles.rmg_velocity_1d(0.0, 0.5, [2.0], [4.0], 0.5) == pytest.approx(6.0, rel=1e-15)

    def test_central_gradient(self):
        np.testing.assert_allclose(oracles.central_gradient(lambda z: float(z @ z), [1.0, 2.0]), [2.0, 4.0],
                                   rtol=1e-9)

    def test_param_gradients_restore(self):
        arr = np.array([1.0, -2.0])
        g = oracles.param_gradients(lambda: float(np.sum(arr ** 3)), {"a": arr})
        np.testing.assert_allclose(g["a"], [3.0, 12.0], rtol=1e-8)
        np.testing.assert_array_equal(arr, [1.0, -2.0])

    def test_grad_rel_err_floor(self):
        # a true zero entry is judged on absolute difference
        assert oracles.grad_rel_err({"a": np.array([1.0, 1e-12])}, {"a": np.array([1.0, 0.0])}) < 1e-5

    def test_richardson_and_nearest(self):
        assert oracles.richardson(np.array(1.0), np.array(2.0)) == 3.0
        np.testing.assert_array_equal(oracles.nearest_label([[0.1], [0.9]], [[0.0], [1.0]], [5, 7]), [5, 7])

    def test_fine_euler_linear(self):
        end = oracles.fine_euler(lambda x, t: np.ones_like(x), [0.0], 0.5, 10)
        np.testing.assert_allclose(end, [0.5])

    def test_pooled_mean_single_set(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0]])
        # at t = 0 the kernel ignores x, so the mean is the plain average
        np.testing.assert_allclose(oracles.pooled_kernel_mean([5.0, 5.0], 0.0, [pts]), [1.0, 0.0])


class TestRegistry:
    def test_every_criterion_registered(self):
        assert {c.criterion for c in verify.REGISTRY if c.criterion} == set(range(1, 16))

    def test_names_unique(self):
        names = [c.name for c in verify.REGISTRY]
        assert len(names) == len(set(names))

    def test_quick_checks_pass(self):
        results = verify.run_checks(include_slow=False)
        assert results and not any(c.slow for c in verify.REGISTRY if c.name in {r.name for r in results})
        failed = [r.line() for r in results if not r.passed]
        assert not failed, failed

    @pytest.mark.parametrize("relation, value, ok", [("<=", 1.0, True), ("<", 1.0, False), (">=", 1.0, True),
                                                     (">", 1.0, False), ("<=", math.nan, False)])
    def test_relations(self, relation, value, ok):
        r = verify.run_check(verify.Check("x", lambda: value, 1.0, relation))
        assert r.passed is ok

    def test_skip_and_crash(self):
        def skipper():
            raise verify.Skip("no data")

        s = verify.run_check(verify.Check("s", skipper, 1.0))
        assert s.skipped and s.passed and s.line().startswith("SKIP")
        c = verify.run_check(verify.Check("c", lambda: 1 / 0, 1.0))
        assert not c.passed and "ZeroDivisionError" in c.note and c.line().startswith("FAIL")

    def test_note_tuple(self):
        r = verify.run_check(verify.Check("n", lambda: (0.5, "hello"), 1.0))
        assert r.passed and r.note == "hello" and r.value == 0.5

    def test_name_filter(self):
        got = verify.run_checks(include_slow=False, names=["duality"])
        assert [r.criterion for r in got] == [4]
