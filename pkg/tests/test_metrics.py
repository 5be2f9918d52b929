"""Tests for mutual information, MIG, k-NN prediction and agreement scores."""

import logging
import math

import numpy as np
import pytest

from pairdis.datasets import FactorTable
from pairdis.errors import ContractError, DimensionError
from pairdis.metrics import (
    MigConfig,
    circular_correlation,
    circular_mean,
    cohens_kappa,
    discrete_entropy,
    discrete_mutual_info,
    discretize_factor,
    equal_frequency_bins,
    evaluate_codes,
    knn_predict,
    latent_angle,
    metric_records,
    mig,
    r_squared,
)


def _brute_mi(a, b):
    a, b = list(a), list(b)
    n = len(a)
    pa = {x: a.count(x) / n for x in set(a)}
    pb = {y: b.count(y) / n for y in set(b)}
    joint = {}
    for x, y in zip(a, b):
        joint[(x, y)] = joint.get((x, y), 0) + 1
    return math.fsum(
        (c / n) * math.log((c / n) / (pa[x] * pb[y])) for (x, y), c in joint.items()
    )


class TestMutualInformation:
    def test_independent_counts(self):
        assert discrete_mutual_info([0, 0, 1, 1], [0, 1, 0, 1]) == 0.0

    def test_identical_uniform(self):
        a = np.repeat(np.arange(4), 25)
        assert discrete_mutual_info(a, a) == pytest.approx(math.log(4.0), abs=1e-12)
        assert discrete_entropy(a) == pytest.approx(math.log(4.0), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 3, size=200)
        b = (a + rng.integers(0, 2, size=200)) % 3
        assert discrete_mutual_info(a, b) == pytest.approx(_brute_mi(a, b), abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric_and_bounded(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.integers(0, 5, size=300)
        b = rng.integers(0, 3, size=300)
        mi = discrete_mutual_info(a, b)
        assert mi == discrete_mutual_info(b, a)
        assert 0.0 <= mi <= min(discrete_entropy(a), discrete_entropy(b)) + 1e-12

    def test_input_checks(self):
        with pytest.raises(DimensionError):
            discrete_mutual_info([], [])
        with pytest.raises(DimensionError):
            discrete_mutual_info([0, 1], [0])


class TestBinning:
    def test_equal_frequency(self):
        bins = equal_frequency_bins(np.arange(100.0), 4)
        assert np.bincount(bins).tolist() == [25, 25, 25, 25]

    def test_monotone_transform_invariance(self):
        x = np.random.default_rng(0).normal(size=500)
        assert np.array_equal(equal_frequency_bins(x, 20), equal_frequency_bins(np.exp(x) * 3.0 - 1.0, 20))

    def test_constant_variable_is_one_bin(self):
        assert set(equal_frequency_bins(np.ones(50), 20).tolist()) == {0}

    def test_cyclic_factor_arcs(self):
        t = FactorTable("cyclic", [0.0, 17.9, 18.0, 359.9])
        assert discretize_factor(t).tolist() == [0, 0, 1, 19]


def _blob_factor(n, seed=0):
    rng = np.random.default_rng(seed)
    return FactorTable("discrete", rng.integers(0, 10, size=n)), rng


class TestMig:
    def test_relevant_block_carries_the_factor(self):
        t, rng = _blob_factor(10_000)
        zu = np.stack([t.values, t.values**2], axis=1)
        latents = np.hstack([zu, rng.normal(size=(10_000, 8))])
        assert mig(latents, t, MigConfig(d_u=2)) >= 0.9

    def test_independent_codes(self):
        t, rng = _blob_factor(10_000)
        latents = rng.normal(size=(10_000, 9))
        assert abs(mig(latents, t, MigConfig(d_u=1))) < 0.05

    def test_factor_copied_into_both_blocks(self):
        t, rng = _blob_factor(5_000)
        latents = np.hstack([t.values[:, None], t.values[:, None], rng.normal(size=(5_000, 3))])
        assert mig(latents, t, MigConfig(d_u=1)) == pytest.approx(0.0, abs=1e-12)

    def test_invariant_under_monotone_transforms(self):
        t, rng = _blob_factor(3_000)
        latents = np.hstack([t.values[:, None] + rng.normal(scale=0.5, size=(3_000, 1)), rng.normal(size=(3_000, 4))])
        transformed = np.tanh(0.3 * latents) * 2.0 + 1.0
        cfg = MigConfig(d_u=1)
        assert mig(latents, t, cfg) == mig(transformed, t, cfg)

    def test_constant_residual_dimension(self):
        t, rng = _blob_factor(2_000)
        latents = np.hstack([t.values[:, None], np.zeros((2_000, 1)), rng.normal(size=(2_000, 1))])
        assert np.isfinite(mig(latents, t, MigConfig(d_u=1)))

    def test_at_most_one(self):
        t, rng = _blob_factor(2_000)
        for _ in range(3):
            assert mig(rng.normal(size=(2_000, 4)), t, MigConfig(d_u=2)) <= 1.0

    def test_warns_on_small_samples(self, caplog):
        t, rng = _blob_factor(50)
        with caplog.at_level(logging.WARNING):
            mig(rng.normal(size=(50, 4)), t, MigConfig(d_u=2))
        assert "unreliable" in caplog.text
        assert "joint alphabet" in caplog.text

    def test_constant_factor(self):
        t = FactorTable("discrete", np.zeros(200))
        with pytest.raises(ContractError):
            mig(np.random.default_rng(0).normal(size=(200, 3)), t, MigConfig(d_u=1))

    def test_shape_checks(self):
        t, rng = _blob_factor(100)
        with pytest.raises(DimensionError):
            mig(rng.normal(size=(99, 3)), t)
        with pytest.raises(DimensionError):
            mig(rng.normal(size=(100, 2)), t, MigConfig(d_u=2))

    def test_config_validation(self):
        with pytest.raises(ContractError):
            MigConfig(bins=1)
        with pytest.raises(ContractError):
            MigConfig(latent_source="prior")


class TestKnn:
    def test_single_neighbour_recovers_training_label(self):
        train = np.array([[0.0, 0.0], [5.0, 5.0], [10.0, 0.0]])
        pred = knn_predict(train, np.array([2, 0, 1]), train, k=1)
        assert pred.tolist() == [2, 0, 1]

    def test_separated_clusters(self):
        rng = np.random.default_rng(0)
        centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        labels = rng.integers(0, 3, size=300)
        train = centers[labels] + rng.normal(scale=0.5, size=(300, 2))
        test_labels = rng.integers(0, 3, size=60)
        test = centers[test_labels] + rng.normal(scale=0.5, size=(60, 2))
        assert knn_predict(train, labels, test, k=5).tolist() == test_labels.tolist()

    def test_vote_tie_goes_to_smallest_class(self):
        train = np.array([[0.0], [1.0]])
        assert knn_predict(train, np.array([3, 1]), np.array([[0.5]]), k=2).tolist() == [1]

    def test_regression_matches_brute_force(self):
        rng = np.random.default_rng(1)
        train = rng.normal(size=(200, 3))
        targets = rng.normal(size=200)
        test = rng.normal(size=(20, 3))
        pred = knn_predict(train, targets, test, k=4, task="regression")
        for row, value in zip(test, pred):
            nearest = np.argsort(((train - row) ** 2).sum(axis=1))[:4]
            assert value == pytest.approx(targets[nearest].mean(), abs=1e-12)

    def test_cyclic_mean_wraps(self):
        train = np.array([[0.0], [0.1]])
        pred = knn_predict(train, np.array([350.0, 10.0]), np.array([[0.05]]), k=2, task="cyclic")
        assert min(pred[0], 360.0 - pred[0]) < 1e-9

    def test_input_checks(self):
        with pytest.raises(ContractError):
            knn_predict(np.zeros((0, 2)), np.zeros(0), np.zeros((1, 2)))
        with pytest.raises(ContractError):
            knn_predict(np.zeros((2, 2)), np.zeros(2), np.zeros((1, 2)), k=3)
        with pytest.raises(ContractError):
            knn_predict(np.zeros((2, 2)), np.zeros(2), np.zeros((1, 2)), k=1, task="ranking")

    def test_circular_mean(self):
        assert circular_mean(np.array([90.0, 90.0])) == pytest.approx(90.0)


class TestKappa:
    def test_identical(self):
        assert cohens_kappa([0, 1, 2, 1], [0, 1, 2, 1]) == 1.0

    def test_constant_prediction(self):
        truth = np.repeat([0, 1], 50)
        assert cohens_kappa(np.zeros(100, dtype=int), truth) == pytest.approx(0.0, abs=1e-12)

    def test_known_confusion(self):
        truth = np.array([0] * 50 + [1] * 50)
        pred = np.array([0] * 45 + [1] * 5 + [0] * 15 + [1] * 35)
        assert cohens_kappa(pred, truth) == pytest.approx(0.6, abs=1e-12)

    def test_relabelling_invariance(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 4, size=200)
        pred = np.where(rng.random(200) < 0.7, truth, rng.integers(0, 4, size=200))
        perm = np.array([2, 0, 3, 1])
        assert cohens_kappa(perm[pred], perm[truth]) == pytest.approx(cohens_kappa(pred, truth), abs=1e-12)
        assert cohens_kappa(pred, truth) <= 1.0

    def test_single_class_edge(self):
        assert cohens_kappa([0, 0, 0], [0, 0, 0]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            cohens_kappa([0, 1], [0])


class TestRSquared:
    def test_perfect_and_mean_predictions(self):
        truth = np.array([1.0, 2.0, 4.0, 7.0])
        assert r_squared(truth, truth) == 1.0
        assert r_squared(np.full(4, truth.mean()), truth) == pytest.approx(0.0, abs=1e-12)

    def test_formula(self):
        truth = np.array([1.0, 2.0, 3.0])
        pred = np.array([1.5, 2.0, 2.0])
        assert r_squared(pred, truth) == pytest.approx(1.0 - (0.25 + 0.0 + 1.0) / 2.0, abs=1e-12)

    def test_constant_target(self):
        with pytest.raises(ContractError):
            r_squared([1.0, 2.0], [3.0, 3.0])

    def test_cyclic(self):
        truth = np.array([359.0, 1.0, 90.0, 180.0, 270.0])
        assert r_squared(truth, truth, cyclic=True) == pytest.approx(1.0, abs=1e-12)
        wrapped = np.array([1.0, 359.0, 90.0, 180.0, 270.0])
        assert r_squared(wrapped, truth, cyclic=True) > 0.99


class TestAngles:
    def test_latent_angle(self):
        zu = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        np.testing.assert_allclose(latent_angle(zu), [0.0, 90.0, 180.0, 270.0], atol=1e-12)
        with pytest.raises(DimensionError):
            latent_angle(np.zeros((3, 3)))

    def test_circular_correlation_of_rotated_angles(self):
        a = np.random.default_rng(0).uniform(0.0, 360.0, size=500)
        assert circular_correlation(a, np.mod(a + 40.0, 360.0)) == pytest.approx(1.0, abs=1e-9)

    def test_circular_correlation_of_independent_angles(self):
        rng = np.random.default_rng(1)
        assert abs(circular_correlation(rng.uniform(0, 360, 5000), rng.uniform(0, 360, 5000))) < 0.1


class TestEvaluateCodes:
    def test_discrete_factor(self):
        t, rng = _blob_factor(400)
        codes = np.hstack([np.stack([t.values, -t.values], axis=1), rng.normal(size=(400, 2))])
        results = evaluate_codes(codes[:300], t.subset(np.arange(300)), codes[300:], t.subset(np.arange(300, 400)), 2)
        assert set(results) == {"mig", "kappa"}
        assert results["kappa"] == 1.0

    def test_cyclic_factor(self):
        rng = np.random.default_rng(0)
        angles = rng.uniform(0.0, 360.0, size=400)
        t = FactorTable("cyclic", angles)
        rad = np.deg2rad(angles)
        codes = np.hstack([np.stack([np.cos(rad), np.sin(rad)], axis=1), rng.normal(size=(400, 2))])
        results = evaluate_codes(codes[:300], t.subset(np.arange(300)), codes[300:], t.subset(np.arange(300, 400)), 2)
        assert set(results) == {"mig", "r2", "circular_correlation"}
        assert results["r2"] > 0.95
        assert results["circular_correlation"] > 0.95

    def test_metric_records_sorted(self):
        rows = metric_records({"r2": 0.5, "mig": 0.1}, "bars", 3)
        assert [r.metric for r in rows] == ["mig", "r2"]
        assert rows[0].dataset == "bars" and rows[0].seed == 3
