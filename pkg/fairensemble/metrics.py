"""Detection performance (AUC) and the cost of fairness along an alpha sweep."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.core import EnsembleWeights
from fairensemble.errors import DimensionMismatchError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SweepRecord:
    """ One alpha sample: objective terms, both fairness measures, AUC and the weights """

    alpha: float
    f1: float
    f2: float
    auc: float
    dp: float
    if_value: float
    w: EnsembleWeights
    ridge_triggered: bool = False

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0:
            raise InvalidInputError('auc must lie in [0, 1], got {0}'.format(self.auc))
        if self.f1 < 0 or self.f2 < 0:
            raise InvalidInputError('objective terms must be non-negative')


def auc(y, labels):
    """ Mann-Whitney AUC: P(outlier scored above inlier), ties count half """
    y = np.asarray(y, dtype=float)
    labels = np.asarray(labels)
    if y.shape != labels.shape or y.ndim != 1:
        raise DimensionMismatchError('scores {0} and labels {1} must be matching vectors'.format(
            y.shape, labels.shape))
    if not np.all(np.isfinite(y)):
        raise InvalidInputError('scores contain NaN or Inf')
    if not np.isin(labels, (0, 1)).all():
        raise InvalidInputError('labels must be 0 or 1')
    outliers = labels == 1
    n_out = int(outliers.sum())
    n_in = labels.size - n_out
    if n_out == 0 or n_in == 0:
        raise InvalidInputError('AUC needs both outliers and inliers in the labels')

    ranks = rankdata(y, method='average')
    # rank sums of midranks are multiples of 0.5, exact in float64 for any realistic n
    u = ranks[outliers].sum() - n_out * (n_out + 1) / 2.0
    return float(u / (n_out * n_in))


def cost_of_fairness(rec0, rec):
    """ Fairness gained per unit of AUC lost relative to the alpha = 0 record.

    Returns None when the AUC did not move (|delta| < 1e-12); a negative value
    means AUC went up while f2 went down.
    """
    delta_auc = rec0.auc - rec.auc
    if abs(delta_auc) < CONSTANTS.COF_EPS:
        return None
    return (rec0.f2 - rec.f2) / delta_auc
