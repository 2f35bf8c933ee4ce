"""Fairness measures on an outlier score vector y.

Group fairness (DP) compares mean scores of every pair of protected groups;
individual fairness (IF) compares scores of cross-group instance pairs,
weighted by how similar the two instances are:

    DP = 1/N * sum_{p<q} (mean_p(y) - mean_q(y))^2
    IF = 1/N * sum_{p<q} sum_{i in p, j in q} d(X_i, X_j) (y_i - y_j)^2 / (|p||q|)

with N the number of group pairs and d(X_i, X_j) = exp(-normalized distance).
Both are 0 for a constant y and unchanged when a constant is added to y.
The importance weights beta used by the fidelity term live here too.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from fairensemble.core import prepare_features
from fairensemble.errors import DimensionMismatchError, InternalError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ImportanceWeights:
    """ Per-instance weights beta for the fidelity term.

    importance_weights() yields values in (1, e]; any positive weights are
    accepted so the all-ones (unweighted) case can be expressed too.
    """

    beta: np.ndarray

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 1 or not np.all(np.isfinite(beta)) or np.any(beta <= 0):
            raise InvalidInputError('importance weights must be a finite positive vector')
        beta.setflags(write=False)
        object.__setattr__(self, 'beta', beta)

    @classmethod
    def uniform(cls, n):
        return cls(np.ones(n))


@dataclass(frozen=True, eq=False)
class PairWeightBlock:
    """ d(X_i, X_j) for i in group p (rows) and j in group q (cols).

    The weight matrix is rebuilt on every access of ``weights`` instead of
    being stored, so only one |p| x |q| block is alive at a time.
    """

    group_pair: Tuple[int, int]
    rows: np.ndarray
    cols: np.ndarray
    _compute: Callable[[], np.ndarray] = field(repr=False)

    @property
    def weights(self):
        return self._compute()

    @property
    def shape(self):
        return len(self.rows), len(self.cols)

    @classmethod
    def from_weights(cls, group_pair, rows, cols, weights):
        weights = np.array(weights, dtype=float)
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        if weights.shape != (len(rows), len(cols)):
            raise DimensionMismatchError('weights shape {0} does not match {1}x{2}'.format(
                weights.shape, len(rows), len(cols)))
        weights.setflags(write=False)
        return cls(tuple(group_pair), rows, cols, lambda: weights)


@dataclass(frozen=True, eq=False)
class GroupMeanDiff:
    group_pair: Tuple[int, int]
    d_pq: np.ndarray


@dataclass(frozen=True, eq=False)
class PairDifferenceBlock:
    """ Rows S_{.,i} - S_{.,j} for every (i in p, j in q), i-major like PairWeightBlock.weights.ravel() """

    group_pair: Tuple[int, int]
    diffs: np.ndarray


def importance_weights(t):
    """beta_i = exp(rank(i) / n), rank 1 = smallest target score, ties in index order."""
    values = t.t if hasattr(t, 't') else np.asarray(t, dtype=float)
    ranks = rankdata(values, method='ordinal')
    return ImportanceWeights(np.exp(ranks / values.shape[0]))


def _as_scores(y, part):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != part.n:
        raise DimensionMismatchError('score vector of length {0} for {1} instances'.format(y.size, part.n))
    if not np.all(np.isfinite(y)):
        raise InvalidInputError('score vector contains NaN or Inf')
    return y


def demographic_parity(y, part):
    y = _as_scores(y, part)
    means = {group: y[idx].mean() for group, idx in part.index_sets.items()}
    return math.fsum((means[p] - means[q]) ** 2 for p, q in part.pair_list) / part.N


def _kernel_block(X, rows, cols, lo, span):
    if span == 0:
        return np.ones((len(rows), len(cols)))
    return np.exp(-(cdist(X[rows], X[cols]) - lo) / span)


def pair_distance_weights(dataset, part, standardize=True):
    """ Build one lazy PairWeightBlock per group pair.

    Distances are Euclidean over the (standardized) feature columns. Min-max
    scaling runs over every cross-group pair of every group pair at once, so a
    given distance maps to the same d in every block; the block entries then lie
    in [exp(-1), 1].
    """
    X = prepare_features(dataset, standardize)
    lo, hi = np.inf, -np.inf
    for p, q in part.pair_list:
        dist = cdist(X[part.index_sets[p]], X[part.index_sets[q]])
        lo = min(lo, float(dist.min()))
        hi = max(hi, float(dist.max()))
    span = hi - lo
    if span == 0:
        logger.warning('all cross-group distances on %s are equal; every pair weight is 1', dataset.name)

    blocks = []
    for p, q in part.pair_list:
        rows, cols = part.index_sets[p], part.index_sets[q]
        compute = functools.partial(_kernel_block, X, rows, cols, lo, span)
        blocks.append(PairWeightBlock((p, q), rows, cols, compute))
    return blocks


def blocks_by_pair(part, blocks):
    by_pair = {block.group_pair: block for block in blocks}
    missing = [pair for pair in part.pair_list if pair not in by_pair]
    if missing:
        raise InternalError('no pair weight block for group pairs {0}'.format(missing))
    return [by_pair[pair] for pair in part.pair_list]


def individual_fairness(y, part, blocks):
    y = _as_scores(y, part)
    terms = []
    for block in blocks_by_pair(part, blocks):
        diff = y[block.rows][:, None] - y[block.cols][None, :]
        terms.append(float(np.sum(block.weights * diff ** 2)) / (len(block.rows) * len(block.cols)))
    return math.fsum(terms) / part.N


def group_mean_diffs(S, part):
    scores = S.scores
    means = {group: scores[:, idx].mean(axis=1) for group, idx in part.index_sets.items()}
    return [GroupMeanDiff((p, q), means[p] - means[q]) for p, q in part.pair_list]


def pair_difference_block(S, block):
    """D_pq for one pair block; memory is |p|*|q|*k, meant for small checks."""
    rows = S.scores[:, block.rows].T
    cols = S.scores[:, block.cols].T
    diffs = (rows[:, None, :] - cols[None, :, :]).reshape(-1, S.k)
    return PairDifferenceBlock(block.group_pair, diffs)
