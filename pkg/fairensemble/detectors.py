"""Base outlier detectors that produce the rows of the score matrix S.

Three families are supported, each with the grid used in the experiments:

    LOF      n_neighbors in 5, 10, ..., 30
    KNN      k in 2, 4, ..., 10
    IFOREST  n_trees in 25, 50, ..., 175

Raw scores are oriented so that higher means more anomalous. Distances are
Euclidean over the feature columns only; the protected attribute and the
ground-truth label never reach a detector. Features are standardized first
unless ``standardize=False``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from scipy.special import digamma
from sklearn.ensemble import IsolationForest
from sklearn.neighbors import NearestNeighbors

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.core import ScoreMatrix, minmax_normalize, prepare_features
from fairensemble.errors import DetectorError, InvalidConfigError

logger = logging.getLogger(__name__)


class DetectorKind(enum.Enum):
    LOF = 'lof'
    KNN = 'knn'
    IFOREST = 'iforest'


_PARAMETER_NAMES = {
    DetectorKind.LOF: 'n_neighbors',
    DetectorKind.KNN: 'k',
    DetectorKind.IFOREST: 'n_trees',
}


@dataclass(frozen=True)
class DetectorConfig:
    kind: DetectorKind
    parameter: int
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, DetectorKind):
            object.__setattr__(self, 'kind', DetectorKind(str(self.kind).lower()))
        if int(self.parameter) != self.parameter or self.parameter < 1:
            raise InvalidConfigError('{0} must be a positive integer, got {1}'.format(
                _PARAMETER_NAMES[self.kind], self.parameter))

    def __str__(self):
        text = '{0}({1}={2}'.format(self.kind.name, _PARAMETER_NAMES[self.kind], self.parameter)
        if self.kind is DetectorKind.IFOREST:
            text += ', seed={0}'.format(self.seed)
        return text + ')'


def default_detector_grid(seed=0):
    """The 18 detectors: 6 LOF + 5 KNN + 7 IFOREST, in that order."""
    grid = [DetectorConfig(DetectorKind.LOF, k) for k in CONSTANTS.LOF_NEIGHBORS]
    grid += [DetectorConfig(DetectorKind.KNN, k) for k in CONSTANTS.KNN_K]
    grid += [DetectorConfig(DetectorKind.IFOREST, trees, seed + offset)
             for offset, trees in enumerate(CONSTANTS.IFOREST_TREES)]
    return grid


def _check_neighbor_count(name, value, n):
    if value < 1 or value >= n:
        raise InvalidConfigError('{0}={1} must satisfy 1 <= {0} < n={2}'.format(name, value, n))


def _tie_inclusive_neighborhoods(X, n_neighbors, block_rows=CONSTANTS.DISTANCE_BLOCK_ROWS):
    """ k-distance neighborhoods that keep every point tied at the k-th distance.

    Distances come from exact cdist blocks of block_rows rows so memory stays
    O(block_rows * n). Returns (neighbor index lists, matching distance lists,
    k-distance per point).
    """
    n = X.shape[0]
    neighbors = []
    distances = []
    k_distance = np.empty(n)
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        block = cdist(X[start:stop], X)
        rows = np.arange(stop - start)
        block[rows, rows + start] = np.inf  # self is never its own neighbor
        kth = np.partition(block, n_neighbors - 1, axis=1)[:, n_neighbors - 1]
        k_distance[start:stop] = kth
        for row, radius in zip(block, kth):
            idx = np.flatnonzero(row <= radius)
            neighbors.append(idx)
            distances.append(row[idx])
    return neighbors, distances, k_distance


def lof_scores(dataset, n_neighbors, standardize=True):
    """Local Outlier Factor per instance; about 1 inside dense regions, larger when isolated."""
    X = prepare_features(dataset, standardize)
    n = X.shape[0]
    _check_neighbor_count('n_neighbors', n_neighbors, n)

    neighbors, distances, k_distance = _tie_inclusive_neighborhoods(X, n_neighbors)
    lrd = np.empty(n)
    for a in range(n):
        # reach-dist(a, b) = max(k-distance(b), d(a, b))
        reach = np.maximum(k_distance[neighbors[a]], distances[a])
        lrd[a] = 1.0 / (reach.mean() + CONSTANTS.LOF_DENSITY_EPS)
    return np.array([lrd[neighbors[a]].mean() / lrd[a] for a in range(n)])


def knn_scores(dataset, k, standardize=True):
    """Distance from each instance to its k-th nearest neighbor, self excluded."""
    X = prepare_features(dataset, standardize)
    _check_neighbor_count('k', k, X.shape[0])
    # ball_tree computes exact Euclidean distances (brute uses the dot-product expansion)
    index = NearestNeighbors(n_neighbors=k, algorithm='ball_tree').fit(X)
    dist, _ = index.kneighbors()
    return dist[:, -1]


def _harmonic(m):
    return digamma(np.asarray(m, dtype=float) + 1.0) + np.euler_gamma


def average_path_length(n_samples):
    """c(m) = 2H(m-1) - 2(m-1)/m: expected unsuccessful-search depth in a BST of m points.

    Leaves holding <= 1 sample add nothing; c(2) = 1.
    """
    m = np.asarray(n_samples, dtype=float)
    out = np.zeros_like(m)
    big = m > 1
    out[big] = 2.0 * _harmonic(m[big] - 1.0) - 2.0 * (m[big] - 1.0) / m[big]
    return out


def isolation_scores(X, n_trees, seed, max_subsample=CONSTANTS.IFOREST_MAX_SUBSAMPLE):
    """s(x) = 2^(-E[h(x)] / c(psi)) from an isolation forest grown by sklearn.

    Trees use subsamples of psi = min(max_subsample, n) points and the usual
    ceil(log2 psi) height cap. A single instance has path length 0 and the
    normalizer c(1) is taken as 1, so it scores exactly 1.
    """
    if int(n_trees) != n_trees or n_trees < 1:
        raise InvalidConfigError('n_trees must be a positive integer, got {0}'.format(n_trees))
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n == 1:
        return np.ones(1)

    psi = min(max_subsample, n)
    forest = IsolationForest(n_estimators=n_trees, max_samples=psi, random_state=seed).fit(X)
    depth = np.zeros(n)
    for tree, features in zip(forest.estimators_, forest.estimators_features_):
        X_sub = X[:, features]
        leaves = tree.apply(X_sub)
        edges = np.ravel(tree.decision_path(X_sub).sum(axis=1)) - 1.0
        depth += edges + average_path_length(tree.tree_.n_node_samples[leaves])
    normalizer = float(average_path_length([psi])[0]) if psi > 1 else 1.0
    return 2.0 ** (-depth / (n_trees * normalizer))


def iforest_scores(dataset, n_trees, seed, standardize=True):
    return isolation_scores(prepare_features(dataset, standardize), n_trees, seed)


def raw_scores(dataset, config, standardize=True):
    if config.kind is DetectorKind.LOF:
        return lof_scores(dataset, config.parameter, standardize)
    if config.kind is DetectorKind.KNN:
        return knn_scores(dataset, config.parameter, standardize)
    return iforest_scores(dataset, config.parameter, config.seed, standardize)


def _score_row(dataset, config, standardize):
    try:
        return minmax_normalize(raw_scores(dataset, config, standardize))
    except Exception as exc:
        raise DetectorError(str(config), exc) from exc


def build_score_matrix(dataset, configs=None, standardize=True, n_jobs=1):
    """ Run every detector config and stack the min-max normalized rows into S.

    Parameters:
      configs = detector configs in row order; defaults to the 18-detector grid
      n_jobs = joblib workers; rows come back in config order either way
    """
    if configs is None:
        configs = default_detector_grid()
    configs = list(configs)
    if not configs:
        raise InvalidConfigError('at least one detector config is required')

    logger.info('scoring %s with %d detectors', dataset.name, len(configs))
    rows = Parallel(n_jobs=n_jobs)(delayed(_score_row)(dataset, cfg, standardize) for cfg in configs)
    for cfg, row in zip(configs, rows):
        if not np.any(row):
            logger.warning('%s produced a constant score row on %s', cfg, dataset.name)
    return ScoreMatrix(np.vstack(rows), tuple(str(cfg) for cfg in configs))
