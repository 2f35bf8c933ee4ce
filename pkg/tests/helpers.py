import collections
import itertools
import logging
import os
import shutil
import tempfile

import numpy as np

import fairensemble.experiments  # noqa: F401  registers every package logger
from fairensemble.core import Dataset, ScoreMatrix, minmax_normalize, partition_groups
from fairensemble.fairness import PairWeightBlock

for logger in logging.Logger.manager.loggerDict.values():
    # Set all loggers to CRITICAL by default to prevent screen clutter during testing

    if not isinstance(logger, logging.Logger):
        # There might be some logging.PlaceHolder objects in there
        continue

    logger.setLevel(logging.CRITICAL)

PROPERTY_TRIALS = 1000  # randomized trials per invariant suite


def make_dataset(**kwargs):
    """
    Small dataset with planted outliers; every group in 0..n_groups-1 is present.
    Outliers are the first n_outliers rows, shifted away from the inlier cloud.
    Example:
        >>> make_dataset(n=40, n_groups=3).n_groups
        3
    """
    default_kwargs = {'n': 60, 'd': 3, 'n_groups': 2, 'n_outliers': 6, 'seed': 0, 'labels': True, 'name': 'custom'}
    opts = collections.ChainMap(kwargs, default_kwargs)
    rng = np.random.default_rng(opts['seed'])
    features = rng.normal(size=(opts['n'], opts['d']))
    features[:opts['n_outliers']] += 5.0
    groups = np.arange(opts['n']) % opts['n_groups']
    rng.shuffle(groups)
    labels = None
    if opts['labels']:
        labels = np.zeros(opts['n'], dtype=int)
        labels[:opts['n_outliers']] = 1
    return Dataset(features, groups, labels, opts['name'])


def make_score_matrix(**kwargs):
    """ k x n score matrix with min-max normalized random rows """
    default_kwargs = {'k': 4, 'n': 30, 'seed': 0}
    opts = collections.ChainMap(kwargs, default_kwargs)
    rng = np.random.default_rng(opts['seed'])
    rows = [minmax_normalize(rng.random(opts['n'])) for _ in range(opts['k'])]
    return ScoreMatrix(np.vstack(rows))


def make_groups(**kwargs):
    """ Shuffled group ids with every group present """
    default_kwargs = {'n': 30, 'n_groups': 2, 'seed': 0}
    opts = collections.ChainMap(kwargs, default_kwargs)
    groups = np.arange(opts['n']) % opts['n_groups']
    np.random.default_rng(opts['seed']).shuffle(groups)
    return groups


def make_partition(**kwargs):
    return partition_groups(make_groups(**kwargs))


def make_blocks(part, seed=0):
    """ Random pair weight blocks with entries in (0, 1] """
    rng = np.random.default_rng(seed)
    blocks = []
    for p, q in part.pair_list:
        rows, cols = part.index_sets[p], part.index_sets[q]
        weights = rng.uniform(0.05, 1.0, size=(len(rows), len(cols)))
        blocks.append(PairWeightBlock.from_weights((p, q), rows, cols, weights))
    return blocks


def brute_force_auc(y, labels):
    wins = 0.0
    outliers = [score for score, label in zip(y, labels) if label == 1]
    inliers = [score for score, label in zip(y, labels) if label == 0]
    for out, inl in itertools.product(outliers, inliers):
        if out > inl:
            wins += 1.0
        elif out == inl:
            wins += 0.5
    return wins / (len(outliers) * len(inliers))


def brute_force_dp(y, groups):
    ids = sorted(set(int(g) for g in groups))
    means = {g: np.mean([y[i] for i in range(len(y)) if groups[i] == g]) for g in ids}
    pairs = list(itertools.combinations(ids, 2))
    return sum((means[p] - means[q]) ** 2 for p, q in pairs) / len(pairs)


def brute_force_if(y, blocks):
    total = 0.0
    for block in blocks:
        weights = block.weights
        pair_sum = 0.0
        for a, i in enumerate(block.rows):
            for b, j in enumerate(block.cols):
                pair_sum += weights[a, b] * (y[i] - y[j]) ** 2
        total += pair_sum / (len(block.rows) * len(block.cols))
    return total / len(blocks)


def independent_injection(labels, v_groups, bias_strength, seed):
    """ Group sampler written from the rule itself: one draw per instance, in order """
    p0 = (1 + bias_strength * (v_groups - 1)) / v_groups
    outlier_probs = [p0] + [(1 - p0) / (v_groups - 1)] * (v_groups - 1)
    inlier_probs = [1.0 / v_groups] * v_groups
    rng = np.random.default_rng(seed)
    groups = []
    for label in labels:
        u = rng.random()
        probs = outlier_probs if label == 1 else inlier_probs
        cumulative = 0.0
        chosen = v_groups - 1
        for group, prob in enumerate(probs):
            cumulative += prob
            if u < cumulative:
                chosen = group
                break
        groups.append(chosen)
    return np.array(groups)


class TempDirMixin:
    """ Gives each test a fresh self.tmp directory """

    def setUp(self):
        super().setUp()
        self.tmp = tempfile.mkdtemp(prefix='fairensemble-test-')

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)
        super().tearDown()

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)
