"""Domain data model and the numeric helpers every other module leans on."""

from __future__ import annotations

import itertools
import logging
import types
import warnings
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Tuple

import numpy as np
import scipy.linalg
from sklearn.preprocessing import StandardScaler

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.errors import (DatasetParseError, DimensionMismatchError, FairnessUndefinedError,
                                 InvalidInputError, SingularSystemError)

logger = logging.getLogger(__name__)


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _frozen_mapping(mapping):
    return types.MappingProxyType(dict(mapping or {}))


@dataclass(frozen=True, eq=False)
class Dataset:
    """ Feature matrix, protected-group ids and optional outlier labels.

    groups must cover {0..v} with v >= 1; labels are 0 (inlier) / 1 (outlier).
    metadata carries provenance such as injection parameters and is echoed
    into experiment outputs.
    """

    features: np.ndarray
    groups: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = 'custom'
    feature_names: Tuple[str, ...] = ()
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2:
            raise InvalidInputError('features must be a 2-d matrix, got shape {0}'.format(features.shape))
        n = features.shape[0]
        if n < 2:
            raise InvalidInputError('a dataset needs at least 2 instances, got {0}'.format(n))
        if not np.all(np.isfinite(features)):
            raise InvalidInputError('features contain NaN or Inf')

        groups = np.asarray(self.groups)
        if groups.shape != (n,):
            raise DimensionMismatchError('groups has shape {0}, expected ({1},)'.format(groups.shape, n))
        if groups.dtype.kind not in 'biuf':
            raise DatasetParseError('group ids must be numeric, got {0} values'.format(groups.dtype))
        if not np.all(np.equal(np.mod(groups, 1), 0)):
            raise InvalidInputError('group ids must be integers')
        groups = groups.astype(np.int64)
        present = np.unique(groups)
        if present.size < 2:
            raise FairnessUndefinedError('fairness undefined for one group')
        if present[0] != 0 or present[-1] != present.size - 1:
            raise InvalidInputError('group ids must cover 0..v without gaps, got {0}'.format(present.tolist()))

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise DimensionMismatchError('labels has shape {0}, expected ({1},)'.format(labels.shape, n))
            if not np.isin(labels, (0, 1)).all():
                raise InvalidInputError('labels must be 0 (inlier) or 1 (outlier)')
            labels = _frozen(labels, dtype=np.int64)

        names = tuple(self.feature_names) or tuple('x{0}'.format(j) for j in range(features.shape[1]))
        if len(names) != features.shape[1]:
            raise DimensionMismatchError('{0} feature names for {1} columns'.format(len(names), features.shape[1]))

        object.__setattr__(self, 'features', _frozen(features))
        object.__setattr__(self, 'groups', _frozen(groups))
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'feature_names', names)
        object.__setattr__(self, 'metadata', _frozen_mapping(self.metadata))

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_groups(self):
        return int(self.groups.max()) + 1

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        if (self.labels is None) != (other.labels is None):
            return False
        return (self.name == other.name
                and self.feature_names == other.feature_names
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features)
                and np.array_equal(self.groups, other.groups)
                and (self.labels is None or np.array_equal(self.labels, other.labels))
                and dict(self.metadata) == dict(other.metadata))

    __hash__ = None

    def with_groups(self, groups, **metadata):
        merged = dict(self.metadata)
        merged.update({key: str(value) for key, value in metadata.items()})
        return Dataset(self.features, groups, self.labels, self.name, self.feature_names, merged)


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """ k x n matrix S of normalized base detector scores, one row per detector """

    scores: np.ndarray
    detector_ids: Tuple[str, ...] = ()

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim == 1:
            scores = scores.reshape(1, -1)
        if scores.ndim != 2 or scores.shape[0] < 1:
            raise InvalidInputError('score matrix must be k x n with k >= 1, got {0}'.format(scores.shape))
        if not np.all(np.isfinite(scores)):
            raise InvalidInputError('score matrix contains NaN or Inf')
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise InvalidInputError('score matrix rows must lie in [0, 1]')
        ids = tuple(self.detector_ids) or tuple('detector_{0}'.format(i) for i in range(scores.shape[0]))
        if len(ids) != scores.shape[0]:
            raise DimensionMismatchError('{0} detector ids for {1} rows'.format(len(ids), scores.shape[0]))
        object.__setattr__(self, 'scores', _frozen(scores))
        object.__setattr__(self, 'detector_ids', ids)

    @property
    def k(self):
        return self.scores.shape[0]

    @property
    def n(self):
        return self.scores.shape[1]


@dataclass(frozen=True, eq=False)
class TargetVector:
    """ Output t of a conventional ensemble, normalized to [0, 1] """

    t: np.ndarray
    source: str = 'given'

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.ndim != 1:
            raise InvalidInputError('target vector must be 1-d')
        if not np.all(np.isfinite(t)) or t.min() < 0.0 or t.max() > 1.0:
            raise InvalidInputError('target vector values must be finite and lie in [0, 1]')
        object.__setattr__(self, 't', _frozen(t))

    @property
    def n(self):
        return self.t.shape[0]


@dataclass(frozen=True, eq=False)
class EnsembleWeights:
    """ Detector weights W; final scores are y = W^T S """

    w: np.ndarray
    ridge_triggered: bool = False

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise InvalidInputError('ensemble weights must be finite')
        object.__setattr__(self, 'w', _frozen(w))

    @property
    def k(self):
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """ Instance indices per protected group plus the unordered group pairs """

    index_sets: Mapping[int, np.ndarray]
    pair_list: Tuple[Tuple[int, int], ...]

    @property
    def N(self):
        return len(self.pair_list)

    @property
    def n(self):
        return sum(len(idx) for idx in self.index_sets.values())


def prepare_features(dataset, standardize=True):
    """ Feature matrix handed to distance computations, standardized per column by default """
    X = np.asarray(dataset.features, dtype=float)
    if standardize:
        # zero-variance columns keep scale 1, so they become all zeros
        X = StandardScaler().fit_transform(X)
    return X


def minmax_normalize(v):
    """ Scale v to [0, 1]; a constant vector maps to all zeros """
    v = np.asarray(v, dtype=float)
    if v.size < 1:
        raise InvalidInputError('cannot normalize an empty vector')
    if not np.all(np.isfinite(v)):
        raise InvalidInputError('cannot normalize a vector containing NaN or Inf')
    lo = v.min()
    span = v.max() - lo
    if span == 0:
        return np.zeros_like(v)
    return (v - lo) / span


def partition_groups(groups):
    """ Split instance indices by group id, ascending ids and ascending indices """
    groups = np.asarray(groups)
    if groups.ndim != 1:
        raise InvalidInputError('groups must be a 1-d vector')
    ids = np.unique(groups)
    if ids.size < 2:
        raise FairnessUndefinedError('fairness undefined for one group')
    index_sets: Dict[int, np.ndarray] = {}
    for group in ids:
        index_sets[int(group)] = _frozen(np.flatnonzero(groups == group))
    pairs = tuple(itertools.combinations(sorted(index_sets), 2))
    return GroupPartition(_frozen_mapping(index_sets), pairs)


def _attempt_solve(A, b, ridge):
    system = A + ridge * np.eye(A.shape[0]) if ridge else A
    with warnings.catch_warnings():
        # scipy reports ill-conditioning as a LinAlgWarning; treat it as singular
        warnings.simplefilter('error', scipy.linalg.LinAlgWarning)
        try:
            x = scipy.linalg.solve(system, b, assume_a='sym')
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
            return None
    if not np.all(np.isfinite(x)):
        return None
    return x


def solve_linear_with_ridge(A, b, ridge=0.0, fallback_ridge=CONSTANTS.DEFAULT_RIDGE):
    """ Solve (A + ridge*I) x = b for symmetric PSD A.

    Returns (x, applied_ridge). When the system is singular at ridge=0 the
    solve is retried once with fallback_ridge and a warning is logged.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError('A must be square, got {0}'.format(A.shape))
    if b.shape != (A.shape[0],):
        raise DimensionMismatchError('b has shape {0}, expected ({1},)'.format(b.shape, A.shape[0]))
    if ridge < 0 or fallback_ridge < 0:
        raise InvalidInputError('ridge must be non-negative')
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise InvalidInputError('linear system contains NaN or Inf')

    x = _attempt_solve(A, b, ridge)
    if x is not None:
        return x, ridge
    if ridge == 0 and fallback_ridge > 0:
        logger.warning('singular %dx%d system, retrying with ridge %g', A.shape[0], A.shape[1], fallback_ridge)
        x = _attempt_solve(A, b, fallback_ridge)
        if x is not None:
            return x, fallback_ridge
    raise SingularSystemError('linear system is singular (ridge={0:g})'.format(ridge or fallback_ridge))


def solve_linear(A, b, ridge=0.0):
    """ Return x minimizing ||(A + ridge*I) x - b|| with the 1e-8 ridge fallback """
    x, _ = solve_linear_with_ridge(A, b, ridge)
    return x
