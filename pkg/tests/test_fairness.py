import math
import unittest

import numpy as np

from fairensemble.core import Dataset, TargetVector, partition_groups
from fairensemble.errors import DimensionMismatchError, InternalError, InvalidInputError
from fairensemble.fairness import (ImportanceWeights, PairWeightBlock, demographic_parity, group_mean_diffs,
                                   importance_weights, individual_fairness, pair_difference_block,
                                   pair_distance_weights)
from tests.helpers import (PROPERTY_TRIALS, brute_force_dp, brute_force_if, make_blocks, make_dataset,
                           make_groups, make_score_matrix)


class TestImportanceWeights(unittest.TestCase):
    def test_example(self):
        beta = importance_weights(TargetVector([0.1, 0.9, 0.5])).beta
        np.testing.assert_allclose(beta, np.exp([1 / 3, 1.0, 2 / 3]))

    def test_ties_break_by_index(self):
        beta = importance_weights(np.array([0.5, 0.5])).beta
        np.testing.assert_allclose(beta, np.exp([0.5, 1.0]))

    def test_range_and_order(self):
        rng = np.random.default_rng(7)
        for trial in range(PROPERTY_TRIALS):
            with self.subTest(trial=trial):
                t = rng.random(rng.integers(1, 60))
                beta = importance_weights(t).beta
                self.assertTrue(np.all(beta > 1.0))
                self.assertTrue(np.all(beta <= math.e))
                self.assertAlmostEqual(beta.max(), math.e)
                order = np.argsort(t, kind='stable')
                self.assertTrue(np.all(np.diff(beta[order]) > 0))

    def test_rejects_non_positive(self):
        with self.assertRaises(InvalidInputError):
            ImportanceWeights([1.0, 0.0])
        np.testing.assert_array_equal(ImportanceWeights.uniform(3).beta, np.ones(3))


class TestDemographicParity(unittest.TestCase):
    def test_examples(self):
        part = partition_groups([0, 0, 1, 1])
        self.assertAlmostEqual(demographic_parity([1.0, 1.0, 0.0, 0.0], part), 1.0)
        self.assertEqual(demographic_parity([0.3, 0.7, 0.7, 0.3], part), 0.0)

    def test_three_groups(self):
        part = partition_groups([0, 1, 2])
        # (0.25 + 1 + 0.25) / 3
        self.assertAlmostEqual(demographic_parity([0.0, 0.5, 1.0], part), 0.5)

    def test_matches_definition(self):
        rng = np.random.default_rng(11)
        for trial in range(PROPERTY_TRIALS):
            with self.subTest(trial=trial):
                v = int(rng.integers(2, 6))
                groups = make_groups(n=int(rng.integers(v, 40)), n_groups=v, seed=trial)
                y = rng.random(groups.size)
                self.assertAlmostEqual(demographic_parity(y, partition_groups(groups)), brute_force_dp(y, groups),
                                       places=12)

    def test_invariances(self):
        rng = np.random.default_rng(2)
        for trial in range(PROPERTY_TRIALS):
            with self.subTest(trial=trial):
                groups = make_groups(n=30, n_groups=3, seed=trial)
                part = partition_groups(groups)
                y = rng.random(30)
                dp = demographic_parity(y, part)
                self.assertGreaterEqual(dp, 0.0)
                self.assertAlmostEqual(demographic_parity(y + 3.0, part), dp, places=12)
                self.assertAlmostEqual(demographic_parity(np.full(30, 0.4), part), 0.0, places=12)
                shuffled = y.copy()
                members = part.index_sets[0]
                shuffled[members] = rng.permutation(y[members])
                self.assertAlmostEqual(demographic_parity(shuffled, part), dp, places=12)

    def test_equal_means_is_zero(self):
        part = partition_groups([0, 0, 1, 1, 2, 2])
        self.assertLess(demographic_parity([0.2, 0.8, 0.5, 0.5, 1.0, 0.0], part), 1e-12)

    def test_rejects_bad_vectors(self):
        part = partition_groups([0, 1])
        with self.assertRaises(DimensionMismatchError):
            demographic_parity([0.1, 0.2, 0.3], part)
        with self.assertRaises(InvalidInputError):
            demographic_parity([0.1, np.nan], part)


class TestIndividualFairness(unittest.TestCase):
    def test_example(self):
        part = partition_groups([0, 1])
        block = PairWeightBlock.from_weights((0, 1), [0], [1], [[1.0]])
        self.assertAlmostEqual(individual_fairness([0.0, 1.0], part, [block]), 1.0)

    def test_constant_scores(self):
        part = partition_groups(make_groups(n=20, n_groups=3))
        self.assertEqual(individual_fairness(np.full(20, 0.7), part, make_blocks(part)), 0.0)

    def test_matches_definition(self):
        rng = np.random.default_rng(5)
        for trial in range(PROPERTY_TRIALS):
            with self.subTest(trial=trial):
                part = partition_groups(make_groups(n=24, n_groups=int(rng.integers(2, 5)), seed=trial))
                blocks = make_blocks(part, seed=trial)
                y = rng.random(24)
                self.assertAlmostEqual(individual_fairness(y, part, blocks), brute_force_if(y, blocks), places=12)
                self.assertAlmostEqual(individual_fairness(y - 1.0, part, blocks), brute_force_if(y, blocks),
                                       places=12)

    def test_missing_block(self):
        part = partition_groups([0, 1, 2])
        with self.assertRaises(InternalError):
            individual_fairness([0.1, 0.2, 0.3], part, make_blocks(part)[:2])


class TestPairDistanceWeights(unittest.TestCase):
    def test_range_and_symmetry(self):
        dataset = make_dataset(n=30, n_groups=3, seed=4)
        part = partition_groups(dataset.groups)
        blocks = pair_distance_weights(dataset, part)
        self.assertEqual([block.group_pair for block in blocks], list(part.pair_list))
        lo, hi = 1.0, 0.0
        for block in blocks:
            weights = block.weights
            self.assertEqual(weights.shape, block.shape)
            lo, hi = min(lo, weights.min()), max(hi, weights.max())
        self.assertAlmostEqual(hi, 1.0)
        self.assertAlmostEqual(lo, math.exp(-1.0))

    def test_closer_pairs_weigh_more(self):
        dataset = Dataset(np.array([[0.0], [1.0], [5.0]]), [0, 1, 1])
        part = partition_groups(dataset.groups)
        (block,) = pair_distance_weights(dataset, part, standardize=False)
        weights = block.weights
        self.assertGreater(weights[0, 0], weights[0, 1])
        self.assertAlmostEqual(weights[0, 0], 1.0)

    def test_equal_distances(self):
        dataset = Dataset(np.zeros((4, 2)), [0, 1, 0, 1])
        part = partition_groups(dataset.groups)
        with self.assertLogs('fairensemble.fairness', level='WARNING'):
            (block,) = pair_distance_weights(dataset, part)
        np.testing.assert_array_equal(block.weights, np.ones((2, 2)))


class TestBruteForceCompanions(unittest.TestCase):
    def test_group_mean_diffs(self):
        S = make_score_matrix(k=3, n=12, seed=1)
        part = partition_groups(make_groups(n=12, n_groups=3))
        diffs = group_mean_diffs(S, part)
        self.assertEqual(len(diffs), 3)
        p, q = diffs[0].group_pair
        expected = S.scores[:, part.index_sets[p]].mean(axis=1) - S.scores[:, part.index_sets[q]].mean(axis=1)
        np.testing.assert_allclose(diffs[0].d_pq, expected)

    def test_pair_difference_block(self):
        S = make_score_matrix(k=2, n=5, seed=1)
        part = partition_groups([0, 0, 1, 1, 1])
        (block,) = make_blocks(part)
        diffs = pair_difference_block(S, block).diffs
        self.assertEqual(diffs.shape, (6, 2))
        np.testing.assert_allclose(diffs[1], S.scores[:, 0] - S.scores[:, 3])


if __name__ == '__main__':
    unittest.main()
