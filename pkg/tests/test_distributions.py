import numpy as np
import pytest

from noisylabels import (
    Dataset,
    DiscreteJointDistribution,
    DistributionError,
    GaussianMixtureDistribution,
    bayes_classify,
    circle_mixture_benchmark,
    load_dataset,
    load_discrete,
    random_discrete,
    save_dataset,
    save_discrete,
)


def two_point_dist():
    return DiscreteJointDistribution(
        points=[[0.0], [1.0]],
        weights=[0.5, 0.5],
        posteriors=[[0.9, 0.1], [0.3, 0.7]],
    )


class TestDiscrete:
    def test_posterior_lookup(self):
        dist = two_point_dist()
        assert np.array_equal(dist.posterior([0.0]), [0.9, 0.1])
        assert np.array_equal(dist.posterior([1.0]), [0.3, 0.7])

    def test_non_support_point_rejected(self):
        with pytest.raises(DistributionError, match="support"):
            two_point_dist().posterior([0.5])

    def test_bayes_risk_exact_brute_force(self):
        assert two_point_dist().bayes_risk_exact() == pytest.approx(0.2, abs=1e-15)

    def test_bayes_risk_one_hot_is_zero(self):
        dist = DiscreteJointDistribution(
            [[0.0], [1.0]], [0.4, 0.6], [[1.0, 0.0], [0.0, 1.0]]
        )
        assert dist.bayes_risk_exact() == 0.0

    def test_bayes_risk_uniform_posteriors(self):
        dist = DiscreteJointDistribution(
            [[0.0]], [1.0], [[0.25, 0.25, 0.25, 0.25]]
        )
        assert dist.bayes_risk_exact() == pytest.approx(0.75, abs=1e-15)

    def test_bayes_risk_permutation_invariant(self):
        rng = np.random.default_rng(3)
        dist = random_discrete(4, 20, 5)
        perm = rng.permutation(20)
        shuffled = DiscreteJointDistribution(
            dist.points[perm], dist.weights[perm], dist.posteriors[perm]
        )
        assert shuffled.bayes_risk_exact() == pytest.approx(
            dist.bayes_risk_exact(), abs=1e-15
        )

    def test_bayes_risk_bounds(self):
        for seed in range(20):
            dist = random_discrete(5, 30, seed)
            assert 0.0 <= dist.bayes_risk_exact() <= 1.0 - 1.0 / 5

    def test_deterministic_labels(self):
        dist = DiscreteJointDistribution([[0.0]], [1.0], [[1.0, 0.0]])
        ds = dist.sample(5, np.random.default_rng(0))
        assert np.all(ds.labels == 1)

    def test_sample_point_frequencies(self):
        # multinomial oracle, 5 sigma
        dist = random_discrete(3, 8, 17)
        n = 100_000
        ds = dist.sample(n, np.random.default_rng(2))
        for m in range(dist.m):
            w = dist.weights[m]
            freq = np.mean((ds.features == dist.points[m]).all(axis=1))
            assert abs(freq - w) <= 5 * np.sqrt(w * (1 - w) / n)

    def test_conditional_label_frequencies(self):
        # law of large numbers at a fixed support point, 5 sigma binomial bounds
        dist = two_point_dist()
        n = 100_000
        rng = np.random.default_rng(4)
        ds = dist.sample(n, rng)
        at_zero = ds.labels[(ds.features == 0.0).all(axis=1)]
        freq = np.mean(at_zero == 1)
        sigma = np.sqrt(0.9 * 0.1 / at_zero.size)
        assert abs(freq - 0.9) <= 5 * sigma

    def test_rejects_duplicate_points(self):
        with pytest.raises(DistributionError, match="distinct"):
            DiscreteJointDistribution(
                [[0.0], [0.0]], [0.5, 0.5], [[1, 0], [0, 1]]
            )

    def test_rejects_off_simplex_weights(self):
        with pytest.raises(DistributionError):
            DiscreteJointDistribution([[0.0], [1.0]], [0.5, 0.6], [[1, 0], [0, 1]])


class TestMixture:
    def test_symmetric_midpoint_posterior(self):
        dist = GaussianMixtureDistribution(
            priors=[0.5, 0.5], means=[[0.0], [1.0]], variances=[[1.0], [1.0]]
        )
        assert np.allclose(dist.posterior([0.5]), [0.5, 0.5], atol=1e-12)

    def test_posterior_rows_on_simplex(self):
        bench = circle_mixture_benchmark()
        X = bench.sample_features(500, np.random.default_rng(0))
        P = bench.posterior_batch(X)
        assert np.all(P >= 0)
        assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)

    def test_posterior_far_point_no_underflow(self):
        bench = circle_mixture_benchmark()
        p = bench.posterior([1e4, 1e4])
        assert np.isfinite(p).all()
        assert p.sum() == pytest.approx(1.0)

    def test_degenerate_prior_sampling(self):
        dist = GaussianMixtureDistribution(
            priors=[1.0, 0.0], means=[[0.0], [5.0]], variances=[[1.0], [1.0]]
        )
        ds = dist.sample(100, np.random.default_rng(1))
        assert np.all(ds.labels == 1)

    def test_degenerate_prior_bayes_risk_zero(self):
        dist = GaussianMixtureDistribution(
            priors=[1.0, 0.0], means=[[0.0], [5.0]], variances=[[1.0], [1.0]]
        )
        est, se = dist.bayes_risk_mc(1000, np.random.default_rng(2))
        assert est == 0.0
        assert se == 0.0

    def test_well_separated_low_risk(self):
        dist = GaussianMixtureDistribution(
            priors=[0.5, 0.5], means=[[0.0], [100.0]], variances=[[1.0], [1.0]]
        )
        est, _ = dist.bayes_risk_mc(2000, np.random.default_rng(3))
        assert est < 0.01

    def test_identical_components_near_chance(self):
        k = 4
        dist = GaussianMixtureDistribution(
            priors=np.full(k, 0.25), means=np.zeros((k, 2)), variances=np.ones((k, 2))
        )
        est, se = dist.bayes_risk_mc(5000, np.random.default_rng(4))
        assert abs(est - 0.75) <= max(3 * se, 1e-12)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(DistributionError):
            GaussianMixtureDistribution([0.5, 0.5], [[0.0], [1.0]], [[1.0], [0.0]])


class TestBayesClassify:
    def test_argmax(self):
        dist = DiscreteJointDistribution([[0.0]], [1.0], [[0.2, 0.5, 0.3]])
        assert bayes_classify(dist, [0.0]) == 2

    def test_tie_break_lowest_index(self):
        dist = DiscreteJointDistribution([[0.0]], [1.0], [[0.5, 0.5]])
        assert bayes_classify(dist, [0.0]) == 1

    def test_one_hot(self):
        dist = DiscreteJointDistribution(
            [[0.0], [1.0]], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]]
        )
        assert bayes_classify(dist, [0.0]) == 2
        assert bayes_classify(dist, [1.0]) == 1


class TestRandomDiscrete:
    def test_one_point_valid(self):
        dist = random_discrete(2, 1, 0)
        assert dist.m == 1 and dist.k == 2

    def test_invariants_hold(self):
        for seed in range(10):
            dist = random_discrete(6, 40, seed)
            assert np.allclose(dist.weights.sum(), 1.0, atol=1e-9)
            assert np.allclose(dist.posteriors.sum(axis=1), 1.0, atol=1e-9)

    def test_same_seed_same_distribution(self):
        a = random_discrete(3, 25, 99)
        b = random_discrete(3, 25, 99)
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.posteriors, b.posteriors)

    def test_rejects_bad_arguments(self):
        with pytest.raises(DistributionError):
            random_discrete(1, 5, 0)


class TestSerialization:
    def test_discrete_round_trip(self, tmp_path):
        dist = random_discrete(3, 12, 8)
        path = tmp_path / "d.txt"
        save_discrete(dist, path)
        back = load_discrete(path)
        assert np.array_equal(back.points, dist.points)
        assert np.array_equal(back.weights, dist.weights)
        assert np.array_equal(back.posteriors, dist.posteriors)

    def test_dataset_round_trip(self, tmp_path):
        ds = circle_mixture_benchmark().sample(50, np.random.default_rng(0))
        path = tmp_path / "ds.txt"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)
        assert back.k == ds.k

    def test_load_discrete_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("2 2 1\n0 | 0.5 | 1 0\n1 | 0.5 | oops 0\n")
        with pytest.raises(DistributionError, match=":3"):
            load_discrete(path)


def test_dataset_validation():
    with pytest.raises(DistributionError):
        Dataset(np.zeros((3, 2)), np.array([1, 2]), 2)
    with pytest.raises(DistributionError):
        Dataset(np.zeros((2, 2)), np.array([1, 3]), 2)
