"""Closed-form fairness-aware ensemble weights.

Both objectives are quadratic in the detector weights W:

    L(W) = sum_i beta_i (W . S_{.,i} - t_i)^2 + alpha * W^T Q W

where Q is the fairness penalty matrix (group: 1/N sum d_pq d_pq^T;
individual: 1/N sum P_pq / (|p||q|)). Setting the gradient to zero gives the
k x k system

    (S diag(beta) S^T + alpha Q) W = S diag(beta) t

which is what gets solved. The unweighted-f1 comparator is the beta = 1 case.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.core import EnsembleWeights, solve_linear_with_ridge
from fairensemble.errors import DimensionMismatchError, InvalidConfigError
from fairensemble.fairness import (blocks_by_pair, demographic_parity, group_mean_diffs, individual_fairness,
                                   pair_difference_block)

logger = logging.getLogger(__name__)


class FairnessKind(enum.Enum):
    GROUP = 'group'
    INDIVIDUAL = 'individual'


def as_fairness_kind(kind):
    if isinstance(kind, FairnessKind):
        return kind
    try:
        return FairnessKind(str(kind).lower())
    except ValueError:
        raise InvalidConfigError('unknown fairness kind {0!r}'.format(kind)) from None


@dataclass(frozen=True)
class SolveConfig:
    """ alpha = fairness trade-off; ridge = fallback ridge used only when the exact system is singular """

    alpha: float = 0.0
    fairness_kind: FairnessKind = FairnessKind.GROUP
    weighted_f1: bool = True
    ridge: float = CONSTANTS.DEFAULT_RIDGE

    def __post_init__(self):
        object.__setattr__(self, 'fairness_kind', as_fairness_kind(self.fairness_kind))
        if not math.isfinite(self.alpha) or self.alpha < 0:
            raise InvalidConfigError('alpha must be finite and >= 0, got {0}'.format(self.alpha))
        if not math.isfinite(self.ridge) or self.ridge < 0:
            raise InvalidConfigError('ridge must be finite and >= 0, got {0}'.format(self.ridge))


@dataclass(frozen=True, eq=False)
class FairnessPenalty:
    """ Symmetric PSD matrix Q with f2(W^T S) = W^T Q W """

    kind: FairnessKind
    matrix: np.ndarray

    def value(self, w):
        w = np.asarray(w, dtype=float)
        return max(float(w @ self.matrix @ w), 0.0)


def _symmetric(matrix):
    return 0.5 * (matrix + matrix.T)


def group_penalty(S, part):
    Q = np.zeros((S.k, S.k))
    for diff in group_mean_diffs(S, part):
        Q += np.outer(diff.d_pq, diff.d_pq)
    return FairnessPenalty(FairnessKind.GROUP, _symmetric(Q / part.N))


def pair_penalty(S, block):
    """ P_pq = sum_{i in p, j in q} d_ij (S_i - S_j)(S_i - S_j)^T without forming D_pq.

    Expands to Sp diag(rowsum) Sp^T + Sq diag(colsum) Sq^T - C - C^T with
    C = Sp M Sq^T, which costs O(k |p| |q|) and keeps one weight block alive.
    """
    weights = block.weights
    Sp = S.scores[:, block.rows]
    Sq = S.scores[:, block.cols]
    cross = Sp @ weights @ Sq.T
    P = (Sp * weights.sum(axis=1)) @ Sp.T + (Sq * weights.sum(axis=0)) @ Sq.T - cross - cross.T
    return _symmetric(P)


def brute_force_pair_penalty(S, block):
    """(M_pq (.) D_pq^T) D_pq, materializing every pair difference; for checks on small data."""
    diffs = pair_difference_block(S, block).diffs
    m = block.weights.ravel()
    return (diffs * m[:, None]).T @ diffs


def individual_penalty(S, part, blocks):
    Q = np.zeros((S.k, S.k))
    for block in blocks_by_pair(part, blocks):
        Q += pair_penalty(S, block) / (len(block.rows) * len(block.cols))
    return FairnessPenalty(FairnessKind.INDIVIDUAL, _symmetric(Q / part.N))


def assemble_penalty(S, part, kind, blocks=None):
    kind = as_fairness_kind(kind)
    if kind is FairnessKind.GROUP:
        return group_penalty(S, part)
    if blocks is None:
        raise InvalidConfigError('individual fairness needs pair weight blocks')
    return individual_penalty(S, part, blocks)


def _check_shapes(S, t, beta):
    if t.n != S.n:
        raise DimensionMismatchError('target has {0} entries, score matrix has {1} columns'.format(t.n, S.n))
    if beta is not None and beta.beta.shape[0] != S.n:
        raise DimensionMismatchError('{0} importance weights for {1} instances'.format(beta.beta.shape[0], S.n))


@dataclass(frozen=True, eq=False)
class FairEnsembleProblem:
    """ Normal equations of one (S, t, beta, penalty) setup, reusable across alpha values """

    S: object
    t: object
    beta: np.ndarray
    penalty: FairnessPenalty
    gram: np.ndarray
    rhs: np.ndarray

    @classmethod
    def build(cls, S, t, beta, penalty, weighted_f1=True):
        _check_shapes(S, t, beta)
        if penalty.matrix.shape != (S.k, S.k):
            raise DimensionMismatchError('penalty is {0}, expected {1}x{1}'.format(penalty.matrix.shape, S.k))
        weights = beta.beta if weighted_f1 else np.ones(S.n)
        gram = _symmetric((S.scores * weights) @ S.scores.T)
        rhs = S.scores @ (weights * t.t)
        return cls(S, t, weights, penalty, gram, rhs)

    def system(self, alpha):
        return self.gram + alpha * self.penalty.matrix, self.rhs

    def solve(self, alpha, ridge=CONSTANTS.DEFAULT_RIDGE):
        A, b = self.system(alpha)
        w, applied = solve_linear_with_ridge(A, b, ridge=0.0, fallback_ridge=ridge)
        return EnsembleWeights(w, ridge_triggered=applied > 0)

    def gradient(self, w, alpha):
        w = np.asarray(getattr(w, 'w', w), dtype=float)
        A, b = self.system(alpha)
        return 2.0 * (A @ w - b)

    def fidelity(self, w):
        w = np.asarray(getattr(w, 'w', w), dtype=float)
        residual = w @ self.S.scores - self.t.t
        return float(np.sum(self.beta * residual ** 2))

    def fairness(self, w):
        return self.penalty.value(getattr(w, 'w', w))

    def objective(self, w, alpha):
        return self.fidelity(w) + alpha * self.fairness(w)


def solve_group(S, t, beta, part, cfg):
    if cfg.fairness_kind is not FairnessKind.GROUP:
        raise InvalidConfigError('solve_group called with fairness kind {0}'.format(cfg.fairness_kind.value))
    problem = FairEnsembleProblem.build(S, t, beta, group_penalty(S, part), cfg.weighted_f1)
    return problem.solve(cfg.alpha, cfg.ridge)


def solve_individual(S, t, beta, part, blocks, cfg):
    if cfg.fairness_kind is not FairnessKind.INDIVIDUAL:
        raise InvalidConfigError('solve_individual called with fairness kind {0}'.format(
            cfg.fairness_kind.value))
    problem = FairEnsembleProblem.build(S, t, beta, individual_penalty(S, part, blocks), cfg.weighted_f1)
    return problem.solve(cfg.alpha, cfg.ridge)


def combine(W, S):
    """y = W^T S."""
    w = np.asarray(getattr(W, 'w', W), dtype=float)
    if w.shape != (S.k,):
        raise DimensionMismatchError('{0} weights for {1} detectors'.format(w.size, S.k))
    return w @ S.scores


def objective_terms(W, S, t, beta, part, blocks, cfg):
    """ (f1, f2) for weights W, computed from the direct definitions on y = W^T S """
    y = combine(W, S)
    residual = y - t.t
    if cfg.weighted_f1:
        f1 = float(np.sum(beta.beta * residual ** 2))
    else:
        f1 = float(np.sum(residual ** 2))
    if cfg.fairness_kind is FairnessKind.GROUP:
        f2 = demographic_parity(y, part)
    else:
        f2 = individual_fairness(y, part, blocks)
    return f1, f2
