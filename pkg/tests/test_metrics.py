import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from refflow import oracles
from refflow.data import two_moons
from refflow.errors import InputError
from refflow.experiments import stratified_refs
from refflow.guidance import GuidanceSpec
from refflow.metrics import (
    CompositionCurve,
    LabeledPrototypes,
    class_frequency,
    classify,
    composition_sweep,
    default_bandwidth,
    hard_filter,
    mixed_reference,
    pairwise_diversity,
    soft_class_probs,
    soft_composition,
    soft_reweight,
    spread_class_probs,
)
from refflow.posterior import DataSet, posterior_weights
from refflow.sampler import SamplerConfig

PROTOS_1D = LabeledPrototypes(np.array([[-1.0], [1.0]]), np.array([0, 1]))


class TestClassify:
    def test_point_on_centroid(self):
        assert classify([[1.0]], PROTOS_1D).tolist() == [1]

    def test_closer_to_plus_one(self):
        assert classify([[0.2]], PROTOS_1D).tolist() == [1]

    def test_tie_goes_to_lowest_id(self):
        assert classify([[0.0]], PROTOS_1D).tolist() == [0]
        flipped = LabeledPrototypes(np.array([[-1.0], [1.0]]), np.array([5, 2]))
        assert classify([[0.0]], flipped).tolist() == [2]

    @given(arrays(np.float64, (12, 2), elements=st.floats(-4, 4, allow_nan=False)), st.randoms())
    def test_permutation_invariant(self, pts, rnd):
        protos = LabeledPrototypes(np.array([[0.0, 0.0], [1.0, 1.0], [-2.0, 1.0]]), np.array([0, 1, 1]))
        perm = list(range(12))
        rnd.shuffle(perm)
        np.testing.assert_array_equal(classify(pts[perm], protos), classify(pts, protos)[perm])

    def test_multi_prototype_matches_brute_force(self, rng):
        data = two_moons(300, 0.1, 1)
        protos = LabeledPrototypes.from_dataset(data, 8)
        pts = rng.uniform(-1.5, 2.5, size=(200, 2))
        want = oracles.nearest_label(pts, protos.centroids, protos.classes)
        np.testing.assert_array_equal(classify(pts, protos), want)

    def test_one_per_class_is_centroid(self, rng):
        data = DataSet(rng.normal(size=(10, 2)), np.repeat([0, 1], 5))
        protos = LabeledPrototypes.from_dataset(data, 1)
        np.testing.assert_allclose(protos.centroids[0], data.points[:5].mean(axis=0))

    def test_needs_two_classes(self):
        with pytest.raises(InputError):
            LabeledPrototypes(np.zeros((2, 1)), np.array([0, 0]))


class TestCounts:
    def test_frequency(self):
        np.testing.assert_array_equal(class_frequency([1, 1, 1], classes=[1, 0]), [1.0, 0.0])
        np.testing.assert_array_equal(class_frequency([0, 1] * 5), [0.5, 0.5])
        assert class_frequency([0] * 3 + [1] * 7, classes=[0])[0] == pytest.approx(0.3)

    def test_diversity(self):
        assert pairwise_diversity([[1.0, 1.0], [1.0, 1.0]]) == 0.0
        assert pairwise_diversity([0.0, 2.0]) == 2.0
        assert pairwise_diversity([0.0, 1.0, 2.0]) == pytest.approx(4 / 3)

    def test_diversity_needs_two(self):
        with pytest.raises(InputError):
            pairwise_diversity([[0.0]])


class TestSoft:
    def test_all_target_refs_uniform(self, rng):
        data = DataSet(rng.normal(size=(30, 2)))
        refs = DataSet(rng.normal(size=(4, 2)), [1, 1, 1, 1])
        for method in ("kernel", "spread"):
            np.testing.assert_allclose(soft_reweight(data, refs, 1, method=method).prior, 1 / 30, atol=1e-15)

    def test_symmetric_refs_give_half(self):
        refs = DataSet([[-1.0], [1.0]], [0, 1])
        probs, ids = soft_class_probs([[0.0]], refs, 0.7)
        np.testing.assert_allclose(probs[0], [0.5, 0.5])

    @given(arrays(np.float64, (15, 2), elements=st.floats(-3, 3, allow_nan=False)), st.floats(0.05, 10))
    def test_valid_prior(self, pts, h):
        data = DataSet(pts)
        refs = DataSet([[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0]], [0, 1, 0])
        w = soft_reweight(data, refs, 1, bandwidth=h).prior
        assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-12
        assert abs(posterior_weights(np.zeros(2), 0.5, soft_reweight(data, refs, 1, bandwidth=h)).sum() - 1) < 1e-10

    def test_wide_bandwidth_uniform(self, rng):
        data = DataSet(rng.normal(size=(40, 2)))
        refs = DataSet(rng.normal(size=(6, 2)), [0, 1, 0, 1, 1, 0])
        w = soft_reweight(data, refs, 1, bandwidth=1e6).prior
        assert np.max(np.abs(w - 1 / 40)) <= 1e-6

    def test_narrow_bandwidth_nearest_ref(self):
        data = two_moons(500, 0.1, 0)
        rng = np.random.default_rng(3)
        idx = rng.choice(500, 60, replace=False)
        refs = data.subset(idx)
        w = soft_reweight(data, refs, 1, bandwidth=1e-6).weights
        nn = oracles.nearest_label(data.points, refs.points, refs.labels)
        np.testing.assert_allclose(w > 1e-12, nn == 1)
        # restricted to points whose nearest ref is class 1, this is the hard filter of that subset
        sub = DataSet(data.points[nn == 1], nn[nn == 1])
        np.testing.assert_allclose(np.sort(data.points[w > 1e-12], axis=0),
                                   np.sort(hard_filter(sub, 1).points, axis=0))

    def test_default_bandwidth_median(self):
        refs = DataSet([[0.0], [1.0], [3.0]], [0, 1, 0])
        assert default_bandwidth(refs) == 2.0

    def test_spread_ranks_target_class(self):
        # reweighting only needs p(target | x) to be much larger on the target moon
        data = two_moons(500, 0.1, 0)
        for seed in range(5):
            refs = stratified_refs(data, {1: 3, 0: 2}, np.random.default_rng(seed))
            probs, ids = spread_class_probs(data.points, refs)
            p1 = probs[:, list(ids).index(1)]
            assert p1[data.labels == 1].mean() > 10 * p1[data.labels == 0].mean()

    def test_spread_single_class(self, rng):
        refs = DataSet(rng.normal(size=(3, 2)), [4, 4, 4])
        probs, ids = spread_class_probs(rng.normal(size=(5, 2)), refs)
        assert ids.tolist() == [4] and np.all(probs == 1.0)

    def test_far_points_keep_finite_weights(self):
        data = DataSet([[-1.0, -1.0], [-1.2, -0.9]])
        refs = DataSet([[0.0, 0.0], [1.0, 1.0], [-1.0, 2.0]], [0, 1, 0])
        w = soft_reweight(data, refs, 1, bandwidth=0.0625).prior
        assert np.all(np.isfinite(w)) and abs(w.sum() - 1) < 1e-12

    def test_composition_endpoints(self, rng):
        data = DataSet(rng.normal(size=(30, 2)))
        refs = DataSet([[-1.0, 0.0], [1.0, 0.0]], [0, 1])
        pos, _ = soft_class_probs(data.points, refs, default_bandwidth(refs))
        w1 = soft_composition(data, refs, 1.0, 1).prior
        np.testing.assert_allclose(w1, pos[:, 1] / pos[:, 1].sum())
        w0 = soft_composition(data, refs, 0.0, 1).prior
        np.testing.assert_allclose(w0, pos[:, 0] / pos[:, 0].sum())

    def test_errors(self, rng):
        data = DataSet(rng.normal(size=(10, 2)))
        refs = DataSet([[0.0, 0.0], [1.0, 1.0]], [0, 1])
        with pytest.raises(InputError):
            soft_reweight(data, refs, 7)
        with pytest.raises(InputError):
            soft_reweight(data, DataSet([[0.0, 0.0]]), 0)
        with pytest.raises(InputError):
            soft_reweight(data, refs, 1, method="magic")
        with pytest.raises(InputError):
            soft_class_probs(data.points, refs, 0.0)
        with pytest.raises(InputError):
            soft_composition(data, refs, 1.5, 1)


class TestHardFilter:
    def test_identity_on_single_class(self, rng):
        data = DataSet(rng.normal(size=(5, 2)), [2] * 5)
        np.testing.assert_array_equal(hard_filter(data, 2).points, data.points)

    def test_missing_class(self, rng):
        with pytest.raises(InputError):
            hard_filter(DataSet(rng.normal(size=(5, 2)), [0] * 5), 1)

    def test_counts(self):
        data = two_moons(500, 0.1, 0)
        assert len(hard_filter(data, 1)) == int(np.sum(data.labels == 1))


class TestSweep:
    def test_mixed_reference_counts(self, rng):
        a = DataSet(rng.normal(size=(10, 2)), [1] * 10)
        b = DataSet(rng.normal(size=(10, 2)), [0] * 10)
        refs = mixed_reference(a, b, 0.3, 10, rng)
        assert np.sum(refs.labels == 1) == 3
        assert np.all(mixed_reference(a, b, 0.97, 10, rng).labels == 1)

    def test_mixed_reference_too_large(self, rng):
        a = DataSet(rng.normal(size=(3, 2)))
        with pytest.raises(InputError):
            mixed_reference(a, a, 1.0, 5, rng)

    def test_five_rows_and_csv(self, tmp_path):
        rng = np.random.default_rng(0)
        data = DataSet(np.vstack([rng.normal(-2, 0.5, (50, 2)), rng.normal(2, 0.5, (50, 2))]), np.repeat([0, 1], 50))
        protos = LabeledPrototypes.from_dataset(data, 1)
        curve = composition_sweep(data, hard_filter(data, 1), hard_filter(data, 0), [0, 0.25, 0.5, 0.75, 1],
                                  GuidanceSpec(), SamplerConfig(nfe=20), protos, n_samples=100, reference_size=10)
        assert len(curve) == 5
        g = curve.generated
        assert g[0] <= g[1:4].min() and g[-1] >= g[1:4].max()
        curve.to_csv(tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == "fraction,generated_fraction,n"
        assert CompositionCurve.from_csv(tmp_path / "c.csv").rows == curve.rows

    def test_bad_fraction(self, rng):
        data = DataSet(rng.normal(size=(10, 2)), [0, 1] * 5)
        with pytest.raises(InputError):
            composition_sweep(data, hard_filter(data, 1), hard_filter(data, 0), [1.2], GuidanceSpec(),
                              SamplerConfig(), LabeledPrototypes.from_dataset(data))
