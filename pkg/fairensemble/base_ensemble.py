"""Conventional (fairness-unaware) ensembles that produce the target vector t."""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.core import TargetVector, minmax_normalize
from fairensemble.errors import InvalidConfigError

logger = logging.getLogger(__name__)


class BaseEnsembleKind(enum.Enum):
    MAX = 'max'
    AVERAGE = 'average'
    GREEDY = 'greedy'


@dataclass(frozen=True)
class GreedyParams:
    """ Knobs of the greedy diversity selection.

    target_rule = how the provisional target is built ('average' or 'max')
    min_decrease = a candidate joins only if the mean pairwise correlation
                   drops by strictly more than this
    """

    target_rule: str = 'average'
    min_decrease: float = CONSTANTS.GREEDY_MIN_DECREASE

    def __post_init__(self):
        if self.target_rule not in ('average', 'max'):
            raise InvalidConfigError('unknown greedy target rule {0!r}'.format(self.target_rule))
        if self.min_decrease < 0:
            raise InvalidConfigError('min_decrease must be non-negative')


@dataclass(frozen=True)
class BaseEnsembleMethod:
    kind: BaseEnsembleKind
    greedy_params: Optional[GreedyParams] = None

    def __post_init__(self):
        if not isinstance(self.kind, BaseEnsembleKind):
            try:
                object.__setattr__(self, 'kind', BaseEnsembleKind(str(self.kind).lower()))
            except ValueError:
                raise InvalidConfigError('unknown base ensemble method {0!r}'.format(self.kind)) from None

    def __str__(self):
        return self.kind.value


def max_combination(S):
    # the /k is kept from the published formula; renormalization cancels it
    pre = S.scores.max(axis=0) / S.k
    return TargetVector(minmax_normalize(pre), 'max')


def average_combination(S):
    return TargetVector(minmax_normalize(S.scores.mean(axis=0)), 'average')


def pearson_matrix(rows):
    """Row-wise Pearson correlations; any pair involving a constant row is 0."""
    rows = np.asarray(rows, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        corr = np.corrcoef(rows)
    corr = np.atleast_2d(corr)
    constant = rows.std(axis=1) == 0
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    return np.nan_to_num(corr, nan=0.0)


def _mean_pairwise(corr, members):
    if len(members) < 2:
        return 1.0
    return float(np.mean([corr[a, b] for a, b in itertools.combinations(members, 2)]))


def select_diverse_detectors(S, params=None):
    """ Greedy diversity selection over the rows of S; returns selected row indices.

    Detectors are ranked by correlation with a provisional target (stable on
    ties), the best one seeds the ensemble, and each later candidate is kept
    only if it lowers the mean pairwise correlation of the selection.
    """
    params = params or GreedyParams()
    scores = S.scores
    if params.target_rule == 'max':
        provisional = scores.max(axis=0)
    else:
        provisional = scores.mean(axis=0)

    corr = pearson_matrix(np.vstack([scores, provisional]))
    to_target = corr[:-1, -1]
    order = np.argsort(-to_target, kind='stable')

    selected = [int(order[0])]
    current = 1.0
    for candidate in order[1:]:
        trial = selected + [int(candidate)]
        value = _mean_pairwise(corr, trial)
        if current - value > params.min_decrease:
            selected = trial
            current = value
    logger.debug('greedy selection kept %d of %d detectors', len(selected), S.k)
    return sorted(selected)


def greedy_model_selection(S, params=None):
    if S.k < 2:
        raise InvalidConfigError('greedy model selection needs at least 2 detectors')
    if np.all(S.scores.std(axis=1) == 0):
        logger.warning('every detector row is constant; falling back to average combination')
        return average_combination(S)
    selected = select_diverse_detectors(S, params)
    pre = S.scores[selected].mean(axis=0)
    return TargetVector(minmax_normalize(pre), 'greedy')


def build_target(S, method):
    """Dispatch to the configured base ensemble."""
    if not isinstance(method, BaseEnsembleMethod):
        method = BaseEnsembleMethod(method)
    if method.kind is BaseEnsembleKind.MAX:
        return max_combination(S)
    if method.kind is BaseEnsembleKind.AVERAGE:
        return average_combination(S)
    return greedy_model_selection(S, method.greedy_params)
