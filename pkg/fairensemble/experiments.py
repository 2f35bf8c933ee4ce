"""Experiment protocol: build S and t once, then sweep alpha or sample the cost of fairness.

Every run writes plain CSV plus a ``meta.txt`` that echoes the full config,
seeds and dataset checksums, so a run directory is enough to repeat it.
Outputs carry no timestamps: the same config and seed give byte-identical files.
"""

from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import fairensemble.CONSTANTS as CONSTANTS
from database.database import SQLConnection, record_error, record_run
from fairensemble import __version__
from fairensemble.base_ensemble import BaseEnsembleMethod, build_target
from fairensemble.core import partition_groups
from fairensemble.detectors import build_score_matrix, default_detector_grid
from fairensemble.errors import InvalidConfigError, InvalidInputError, backtrace_of, stage
from fairensemble.fairness import importance_weights, pair_distance_weights
from fairensemble.ingestion import DatasetSpec, dataset_checksum, load_dataset
from fairensemble.metrics import SweepRecord, auc, cost_of_fairness
from fairensemble.settings import AlphaGrid, parse_alpha_grid
from fairensemble.solver import (FairEnsembleProblem, FairnessKind, as_fairness_kind, group_penalty,
                                 individual_penalty)

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ['config_id', 'dataset', 'base_method', 'fairness', 'weighted_f1', 'status',
                   'alpha_start', 'f2_start', 'auc_start', 'alpha_end', 'f2_end', 'auc_end', 'ridge_count',
                   'cof_weighted_median', 'cof_unweighted_median', 'output_dir']


@dataclass(frozen=True)
class ExperimentConfig:
    """ One experiment: dataset, detectors, base ensemble, fairness kind and the alpha grid.

    detectors = None means the 18-detector default grid seeded with seed.
    v_groups / bias_strength = None keeps each dataset's default group rule.
    """

    dataset: str = CONSTANTS.FIXTURE_PREFIX + 'german'
    source: Optional[str] = None
    base_method: BaseEnsembleMethod = BaseEnsembleMethod('max')
    fairness_kind: FairnessKind = FairnessKind.GROUP
    weighted_f1: bool = True
    alpha_grid: AlphaGrid = field(default_factory=AlphaGrid)
    cof_samples: int = CONSTANTS.COF_SAMPLES
    seed: int = 0
    output_dir: str = 'runs'
    v_groups: Optional[int] = None
    bias_strength: Optional[float] = None
    standardize: bool = True
    n_jobs: int = 1
    detectors: Optional[Tuple] = None

    def __post_init__(self):
        if not isinstance(self.base_method, BaseEnsembleMethod):
            object.__setattr__(self, 'base_method', BaseEnsembleMethod(self.base_method))
        object.__setattr__(self, 'fairness_kind', as_fairness_kind(self.fairness_kind))
        object.__setattr__(self, 'alpha_grid', parse_alpha_grid(self.alpha_grid))
        if self.cof_samples < 0:
            raise InvalidConfigError('cof_samples must be >= 0, got {0}'.format(self.cof_samples))
        if self.cof_samples > 0 and 0.0 not in self.alpha_grid.values():
            raise InvalidConfigError('alpha grid {0} lacks 0, which cost of fairness is measured from; '
                                     'add 0 or set cof_samples to 0'.format(self.alpha_grid))
        if self.detectors is not None:
            object.__setattr__(self, 'detectors', tuple(self.detectors))

    @classmethod
    def from_settings(cls, values):
        """ Build from a {field: value} mapping as produced by the settings module """
        try:
            return cls(**values)
        except TypeError as exc:
            raise InvalidConfigError(str(exc)) from exc

    @property
    def config_id(self):
        raw = '{0}-{1}-{2}-{3}'.format(self.dataset, self.base_method, self.fairness_kind.value,
                                       'weighted' if self.weighted_f1 else 'unweighted')
        return re.sub(r'[^A-Za-z0-9_.-]+', '_', raw)

    def dataset_spec(self):
        return DatasetSpec.resolve(self.dataset, self.source, self.v_groups, self.bias_strength, self.seed)

    def detector_configs(self):
        return list(self.detectors) if self.detectors is not None else default_detector_grid(self.seed)

    def echo(self):
        return [
            ('dataset', self.dataset),
            ('source', self.source or ''),
            ('base_method', str(self.base_method)),
            ('fairness', self.fairness_kind.value),
            ('weighted_f1', self.weighted_f1),
            ('alpha_grid', str(self.alpha_grid)),
            ('cof_samples', self.cof_samples),
            ('cof_alpha_range', '{0!r}:{1!r} log-uniform'.format(CONSTANTS.ALPHA_MIN, CONSTANTS.ALPHA_MAX)),
            ('seed', self.seed),
            ('v_groups', '' if self.v_groups is None else self.v_groups),
            ('bias_strength', '' if self.bias_strength is None else self.bias_strength),
            ('standardize', self.standardize),
        ]


@dataclass(frozen=True, eq=False)
class PreparedExperiment:
    """ Everything shared by the solves of one config: data, S, t, beta, groups and both penalties """

    config: ExperimentConfig
    dataset: object
    S: object
    t: object
    beta: object
    part: object
    blocks: list
    penalties: dict

    def problem(self, weighted_f1=None):
        if weighted_f1 is None:
            weighted_f1 = self.config.weighted_f1
        return FairEnsembleProblem.build(self.S, self.t, self.beta, self.penalties[self.config.fairness_kind],
                                         weighted_f1)


@dataclass(frozen=True)
class CofSample:
    alpha: float
    cof_weighted: Optional[float]
    cof_unweighted: Optional[float]


def prepare(config):
    """ Load the dataset and run every stage that does not depend on alpha """
    with stage('dataset'):
        dataset = load_dataset(config.dataset_spec())
        if dataset.labels is None:
            raise InvalidInputError('{0} has no outlier labels; sweeps report AUC'.format(dataset.name))
    with stage('detectors'):
        S = build_score_matrix(dataset, config.detector_configs(), config.standardize, config.n_jobs)
    with stage('base_ensemble'):
        t = build_target(S, config.base_method)
        beta = importance_weights(t)
    with stage('fairness'):
        part = partition_groups(dataset.groups)
        blocks = pair_distance_weights(dataset, part, config.standardize)
        penalties = {FairnessKind.GROUP: group_penalty(S, part),
                     FairnessKind.INDIVIDUAL: individual_penalty(S, part, blocks)}
    logger.info('%s: n=%d, k=%d, %d groups', dataset.name, dataset.n, S.k, len(part.index_sets))
    return PreparedExperiment(config, dataset, S, t, beta, part, blocks, penalties)


def evaluate(prepared, problem, alpha):
    """ Solve at alpha and measure the result """
    W = problem.solve(alpha)
    y = W.w @ prepared.S.scores
    return SweepRecord(
        alpha=float(alpha),
        f1=problem.fidelity(W),
        f2=problem.fairness(W),
        auc=auc(y, prepared.dataset.labels),
        dp=prepared.penalties[FairnessKind.GROUP].value(W.w),
        if_value=prepared.penalties[FairnessKind.INDIVIDUAL].value(W.w),
        w=W,
        ridge_triggered=W.ridge_triggered,
    )


def _write_csv(frame, path):
    frame.to_csv(path, index=False, float_format=CONSTANTS.CSV_FLOAT_FORMAT, lineterminator='\n')


def write_meta(prepared, output_dir):
    config = prepared.config
    lines = [('version', __version__)] + config.echo()
    lines += [('dataset_name', prepared.dataset.name),
              ('dataset_checksum', dataset_checksum(prepared.dataset)),
              ('n', prepared.dataset.n),
              ('groups', prepared.dataset.n_groups),
              ('detectors', '; '.join(prepared.S.detector_ids)),
              ('target_source', prepared.t.source)]
    lines += [('dataset.' + key, value) for key, value in sorted(prepared.dataset.metadata.items())]
    with open(os.path.join(output_dir, CONSTANTS.META_FILE), 'w') as handle:
        for key, value in lines:
            handle.write('{0} = {1}\n'.format(key, value))


def sweep_frame(records):
    rows = []
    for rec in records:
        row = {'alpha': rec.alpha, 'f1': rec.f1, 'f2': rec.f2, 'dp': rec.dp, 'if': rec.if_value,
               'auc': rec.auc, 'ridge_triggered': int(rec.ridge_triggered)}
        row.update({'w_{0}'.format(i): value for i, value in enumerate(rec.w.w)})
        rows.append(row)
    return pd.DataFrame(rows)


def run_sweep(config, prepared=None):
    """ Solve at every alpha of the grid; writes sweep.csv and meta.txt to config.output_dir """
    if prepared is None:
        prepared = prepare(config)
    with stage('sweep'):
        problem = prepared.problem()
        records = [evaluate(prepared, problem, alpha) for alpha in config.alpha_grid.values()]
        records.sort(key=lambda rec: rec.alpha)
    with stage('output'):
        os.makedirs(config.output_dir, exist_ok=True)
        _write_csv(sweep_frame(records), os.path.join(config.output_dir, CONSTANTS.SWEEP_FILE))
        write_meta(prepared, config.output_dir)
    logger.info('%s: %d sweep points written to %s', config.config_id, len(records), config.output_dir)
    return records


def cof_alphas(samples, seed):
    """ Sorted log-uniform draws from [ALPHA_MIN, ALPHA_MAX] """
    rng = np.random.default_rng(seed)
    exponents = rng.uniform(math.log10(CONSTANTS.ALPHA_MIN), math.log10(CONSTANTS.ALPHA_MAX), size=samples)
    return np.sort(10.0 ** exponents)


def run_cof(config, prepared=None):
    """ Cost of fairness for the weighted and unweighted fidelity terms on one shared S and t.

    Each framework is compared against its own alpha = 0 solution. Writes
    cof.csv with empty cof cells and a 1 in the *_undefined column where the
    AUC did not move.
    """
    if config.cof_samples < 1:
        raise InvalidConfigError('cof needs cof_samples >= 1')
    if prepared is None:
        prepared = prepare(config)
    with stage('cof'):
        alphas = cof_alphas(config.cof_samples, config.seed)
        columns = {}
        for weighted in (True, False):
            problem = prepared.problem(weighted_f1=weighted)
            baseline = evaluate(prepared, problem, 0.0)
            columns[weighted] = [cost_of_fairness(baseline, evaluate(prepared, problem, a)) for a in alphas]
        samples = [CofSample(float(a), cw, cu) for a, cw, cu in zip(alphas, columns[True], columns[False])]
    with stage('output'):
        os.makedirs(config.output_dir, exist_ok=True)
        frame = pd.DataFrame({
            'alpha': [s.alpha for s in samples],
            'cof_weighted': [np.nan if s.cof_weighted is None else s.cof_weighted for s in samples],
            'cof_unweighted': [np.nan if s.cof_unweighted is None else s.cof_unweighted for s in samples],
            'weighted_undefined': [int(s.cof_weighted is None) for s in samples],
            'unweighted_undefined': [int(s.cof_unweighted is None) for s in samples],
        })
        _write_csv(frame, os.path.join(config.output_dir, CONSTANTS.COF_FILE))
        write_meta(prepared, config.output_dir)
    return samples


def median_abs_cof(values):
    defined = [abs(v) for v in values if v is not None]
    return float(np.median(defined)) if defined else float('nan')


def run_config(config):
    """ Sweep plus cof for one manifest entry; failures come back as data, never raised """
    row = {'config_id': config.config_id, 'dataset': config.dataset, 'base_method': str(config.base_method),
           'fairness': config.fairness_kind.value, 'weighted_f1': int(config.weighted_f1),
           'output_dir': config.output_dir}
    try:
        prepared = prepare(config)
        records = run_sweep(config, prepared)
        samples = run_cof(config, prepared) if config.cof_samples > 0 else []
    except Exception as exc:
        logger.error('%s failed: %s', config.config_id, exc)
        row['status'] = 'failed'
        error = {'stage': getattr(exc, 'stage', ''), 'error_name': type(exc).__name__, 'error_text': str(exc),
                 'full_backtrace': backtrace_of(exc)}
        return row, error

    first, last = records[0], records[-1]
    row.update({'status': 'ok',
                'alpha_start': first.alpha, 'f2_start': first.f2, 'auc_start': first.auc,
                'alpha_end': last.alpha, 'f2_end': last.f2, 'auc_end': last.auc,
                'ridge_count': sum(rec.ridge_triggered for rec in records),
                'cof_weighted_median': median_abs_cof([s.cof_weighted for s in samples]),
                'cof_unweighted_median': median_abs_cof([s.cof_unweighted for s in samples])})
    return row, None


def run_all(manifest, output_dir, n_jobs=1):
    """ Run every config (in parallel across configs) and write summary.csv and the ledger.

    Each config writes into <output_dir>/<config_id>/; summary and ledger store
    that folder relative to output_dir. A failing config gets a
    'failed' summary row and an error_messages ledger row; the rest carry on.
    """
    manifest = [replace(config, output_dir=os.path.join(output_dir, config.config_id)) for config in manifest]
    ids = [config.config_id for config in manifest]
    if len(set(ids)) != len(ids):
        raise InvalidConfigError('manifest has duplicate configs')

    os.makedirs(output_dir, exist_ok=True)
    results = Parallel(n_jobs=n_jobs)(delayed(run_config)(config) for config in manifest) if manifest else []
    for row, _ in results:
        row['output_dir'] = os.path.relpath(row['output_dir'], output_dir)

    with SQLConnection(os.path.join(output_dir, CONSTANTS.LEDGER_FILE)) as ledger:
        for config, (row, error) in zip(manifest, results):
            record_run(ledger, row['config_id'], row['dataset'], row['base_method'], row['fairness'],
                       config.weighted_f1, row['status'], row['output_dir'])
            if error is not None:
                record_error(ledger, row['config_id'], error['stage'], error['error_name'], error['error_text'],
                             error['full_backtrace'], describe_config(config))

    rows = sorted((row for row, _ in results), key=lambda row: row['config_id'])
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    _write_csv(summary, os.path.join(output_dir, CONSTANTS.SUMMARY_FILE))
    failed = sum(row['status'] != 'ok' for row in rows)
    logger.info('%d configs run, %d failed; summary in %s', len(rows), failed, output_dir)
    return summary


def describe_config(config):
    return ' '.join('{0}={1}'.format(key, value) for key, value in config.echo())


def fixture_manifest(output_dir='runs', seed=0, alpha_grid=None, cof_samples=CONSTANTS.COF_SAMPLES,
                     base_methods=('max', 'greedy')):
    """ Every bundled fixture x both fairness kinds x the given base methods """
    grid = parse_alpha_grid(alpha_grid) if alpha_grid is not None else AlphaGrid()
    manifest = []
    for name in sorted(CONSTANTS.DATASET_TABLE):
        for kind in FairnessKind:
            for method in base_methods:
                manifest.append(ExperimentConfig(dataset=CONSTANTS.FIXTURE_PREFIX + name, base_method=method,
                                                 fairness_kind=kind, alpha_grid=grid, cof_samples=cof_samples,
                                                 seed=seed, output_dir=output_dir))
    return manifest
