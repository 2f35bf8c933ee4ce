"""Benchmark loaders, protected-attribute injection and the dataset cache format.

Supported benchmarks and their published sizes live in CONSTANTS.DATASET_TABLE.
Communities and German Credit carry a native protected attribute; the six ODDS
datasets get a synthetic one from inject_protected_attribute(). Files are never
downloaded: every loader reads a local path.

Cache files are comma-separated with a mandatory header:

    f:<feature name>, ..., group, label

plus a ``<file>.meta`` sidecar of ``key = value`` lines holding the dataset
name, its metadata (injection parameters, source checksum) and a checksum of
the CSV itself.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd
import scipy.io

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.core import Dataset
from fairensemble.errors import (DatasetParseError, DatasetSizeMismatchError, InvalidConfigError,
                                 InvalidInputError)

logger = logging.getLogger(__name__)

OUTLIER_RULES = {
    'communities': 'crime rate > 0.5',
    'german': 'credit class != good',
    CONSTANTS.CUSTOM_DATASET: 'label column',
}


class GroupRuleKind(enum.Enum):
    NATIVE = 'native'
    SYNTHETIC = 'synthetic'


@dataclass(frozen=True)
class GroupRule:
    kind: GroupRuleKind = GroupRuleKind.NATIVE
    v_groups: Optional[int] = None
    bias_strength: float = CONSTANTS.DEFAULT_BIAS_STRENGTH
    seed: int = 0

    def __post_init__(self):
        if self.kind is GroupRuleKind.SYNTHETIC:
            if self.v_groups is None or self.v_groups < 2:
                raise InvalidConfigError('synthetic groups need v_groups >= 2, got {0}'.format(self.v_groups))
            if not 0.0 <= self.bias_strength <= 1.0:
                raise InvalidConfigError('bias_strength must lie in [0, 1], got {0}'.format(self.bias_strength))

    @classmethod
    def native(cls):
        return cls(GroupRuleKind.NATIVE)

    @classmethod
    def synthetic(cls, v_groups, bias_strength=CONSTANTS.DEFAULT_BIAS_STRENGTH, seed=0):
        return cls(GroupRuleKind.SYNTHETIC, int(v_groups), float(bias_strength), int(seed))

    def describe(self):
        if self.kind is GroupRuleKind.NATIVE:
            return 'native'
        return 'synthetic(v_groups={0}, bias_strength={1}, seed={2})'.format(
            self.v_groups, self.bias_strength, self.seed)


@dataclass(frozen=True)
class DatasetSpec:
    """ Where a dataset comes from and how its labels and groups are derived.

    name is one of the eight benchmark names, 'custom', or 'fixture:<benchmark>'
    for the generated mini datasets (no source_path needed).
    """

    name: str
    source_path: Optional[str] = None
    outlier_rule: str = 'native label'
    group_rule: GroupRule = field(default_factory=GroupRule.native)

    def __post_init__(self):
        base = fixture_base_name(self.name)
        if base is None and self.name not in CONSTANTS.DATASET_TABLE and self.name != CONSTANTS.CUSTOM_DATASET:
            raise InvalidConfigError('unknown dataset {0!r}'.format(self.name))
        if base is not None and base not in CONSTANTS.DATASET_TABLE:
            raise InvalidConfigError('unknown fixture {0!r}'.format(self.name))
        if base is None and not self.source_path:
            raise InvalidConfigError('dataset {0} needs a source file'.format(self.name))

    @classmethod
    def resolve(cls, name, source_path=None, v_groups=None, bias_strength=None, seed=0):
        """ Default spec for a dataset name.

        Benchmarks without a protected attribute get synthetic groups with the
        published group count; native-group datasets and fixtures keep their own
        groups unless v_groups or bias_strength asks for injection.
        """
        base = fixture_base_name(name) or name
        native = (fixture_base_name(name) is not None or base in CONSTANTS.NATIVE_GROUP_DATASETS
                  or base == CONSTANTS.CUSTOM_DATASET)
        if native and v_groups is None and bias_strength is None:
            rule = GroupRule.native()
        else:
            if v_groups is None:
                if base not in CONSTANTS.DATASET_TABLE:
                    raise InvalidConfigError('v_groups is required to inject groups into {0}'.format(name))
                v_groups = CONSTANTS.DATASET_TABLE[base][2]
            if bias_strength is None:
                bias_strength = (CONSTANTS.FIXTURE_BIAS_STRENGTH if fixture_base_name(name)
                                 else CONSTANTS.DEFAULT_BIAS_STRENGTH)
            rule = GroupRule.synthetic(v_groups, bias_strength, seed)
        return cls(name, source_path, OUTLIER_RULES.get(base, 'native label'), rule)


def fixture_base_name(name):
    if name.startswith(CONSTANTS.FIXTURE_PREFIX):
        return name[len(CONSTANTS.FIXTURE_PREFIX):]
    return None


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def dataset_checksum(dataset):
    """ sha256 over features, groups and labels; stable across save/load """
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(dataset.features, dtype='<f8').tobytes())
    digest.update(np.ascontiguousarray(dataset.groups, dtype='<i8').tobytes())
    if dataset.labels is not None:
        digest.update(np.ascontiguousarray(dataset.labels, dtype='<i8').tobytes())
    return digest.hexdigest()


def label_counts(dataset):
    outliers = int(dataset.labels.sum())
    return {'inliers': dataset.n - outliers, 'outliers': outliers, 'groups': dataset.n_groups}


def check_published_sizes(dataset, name, expected_groups=None):
    inliers, outliers, groups = CONSTANTS.DATASET_TABLE[name]
    expected = {'inliers': inliers, 'outliers': outliers,
                'groups': groups if expected_groups is None else expected_groups}
    actual = label_counts(dataset)
    if actual != expected:
        raise DatasetSizeMismatchError(name, expected, actual)


def _drop_missing(frame, name, column_fraction=CONSTANTS.MISSING_COLUMN_FRACTION):
    """ Drop columns missing more than column_fraction of their values, then incomplete rows """
    missing = frame.isna().mean()
    dropped_columns = [col for col in frame.columns if missing[col] > column_fraction]
    if dropped_columns:
        logger.warning('%s: dropped %d columns with missing values', name, len(dropped_columns))
        frame = frame.drop(columns=dropped_columns)
    complete = frame.dropna()
    if len(complete) != len(frame):
        logger.warning('%s: dropped %d incomplete rows', name, len(frame) - len(complete))
    return complete


def _require_columns(frame, name, columns):
    for col, description in columns:
        if col not in frame.columns:
            raise DatasetParseError('{0}: column {1} ({2}) missing'.format(name, col, description))


def _numeric(frame, name):
    try:
        return frame.apply(pd.to_numeric).to_numpy(dtype=float)
    except (ValueError, TypeError) as exc:
        raise DatasetParseError('{0}: non-numeric value in feature columns: {1}'.format(name, exc)) from exc


def load_communities(path):
    frame = pd.read_csv(path, header=None, na_values='?')
    _require_columns(frame, 'communities', [(CONSTANTS.COMMUNITIES_CRIME_COLUMN, 'crime rate')]
                     + [(col, 'race percentage') for col in CONSTANTS.COMMUNITIES_RACE_COLUMNS])
    frame = frame.drop(columns=list(CONSTANTS.COMMUNITIES_NON_PREDICTIVE))
    # police statistics are absent for most rows; any column with gaps goes, every row stays
    frame = _drop_missing(frame, 'communities', column_fraction=0.0)
    _require_columns(frame, 'communities', [(CONSTANTS.COMMUNITIES_CRIME_COLUMN, 'crime rate')]
                     + [(col, 'race percentage') for col in CONSTANTS.COMMUNITIES_RACE_COLUMNS])

    race = frame[list(CONSTANTS.COMMUNITIES_RACE_COLUMNS)].to_numpy(dtype=float)
    labels = (frame[CONSTANTS.COMMUNITIES_CRIME_COLUMN].to_numpy(dtype=float)
              > CONSTANTS.COMMUNITIES_CRIME_THRESHOLD).astype(np.int64)
    features = frame.drop(columns=[CONSTANTS.COMMUNITIES_CRIME_COLUMN] + list(CONSTANTS.COMMUNITIES_RACE_COLUMNS))
    return features, np.argmax(race, axis=1), labels


def load_german(path):
    frame = pd.read_csv(path, header=None, sep=r'\s+')
    _require_columns(frame, 'german', [(CONSTANTS.GERMAN_CLASS_COLUMN, 'credit class'),
                                       (CONSTANTS.GERMAN_STATUS_COLUMN, 'personal status and sex')])
    frame = _drop_missing(frame, 'german')
    labels = (frame[CONSTANTS.GERMAN_CLASS_COLUMN].to_numpy() != CONSTANTS.GERMAN_GOOD_CLASS).astype(np.int64)
    _, groups = np.unique(frame[CONSTANTS.GERMAN_STATUS_COLUMN].to_numpy(), return_inverse=True)
    features = frame.drop(columns=[CONSTANTS.GERMAN_CLASS_COLUMN, CONSTANTS.GERMAN_STATUS_COLUMN])
    return features, groups, labels


def _read_headerless_or_not(path):
    frame = pd.read_csv(path, header=None)
    first = pd.to_numeric(frame.iloc[0], errors='coerce')
    if first.isna().any():
        frame = pd.read_csv(path)
    return frame


def load_odds(name, path):
    """ ODDS benchmark from a .mat file (X, y) or a CSV whose last column is the label """
    if str(path).lower().endswith('.mat'):
        contents = scipy.io.loadmat(path)
        for key in ('X', 'y'):
            if key not in contents:
                raise DatasetParseError('{0}: variable {1} missing from {2}'.format(name, key, path))
        features = pd.DataFrame(np.asarray(contents['X'], dtype=float))
        labels = np.asarray(contents['y']).reshape(-1)
    else:
        frame = _drop_missing(_read_headerless_or_not(path), name)
        if frame.shape[1] < 2:
            raise DatasetParseError('{0}: label column missing from {1}'.format(name, path))
        features = frame.iloc[:, :-1]
        labels = frame.iloc[:, -1].to_numpy()
    if not np.isin(labels, (0, 1)).all():
        raise DatasetParseError('{0}: labels must be 0/1'.format(name))
    return features, labels.astype(np.int64)


def _feature_names(frame):
    return tuple(str(col) for col in frame.columns)


def load_dataset(spec):
    """ Load a benchmark, custom file or fixture and apply its group rule.

    Benchmark loads are checked against the published inlier/outlier/group
    counts; a mismatch raises DatasetSizeMismatchError with a diff report.
    """
    base = fixture_base_name(spec.name)
    if base is not None:
        dataset = fixture_dataset(base)
        if spec.group_rule.kind is GroupRuleKind.SYNTHETIC:
            dataset = _apply_rule(dataset, spec.group_rule)
        return dataset

    if not os.path.exists(spec.source_path):
        raise DatasetParseError('{0}: source file {1} does not exist'.format(spec.name, spec.source_path))
    checksum = file_checksum(spec.source_path)
    metadata = {'source': os.path.basename(spec.source_path), 'source_checksum': checksum,
                'outlier_rule': spec.outlier_rule, 'group_rule': spec.group_rule.describe()}

    if spec.name == CONSTANTS.CUSTOM_DATASET:
        frame = pd.read_csv(spec.source_path, float_precision='round_trip')
        dataset = _frame_to_dataset(frame, spec.name, strict=False,
                                    groups_required=spec.group_rule.kind is GroupRuleKind.NATIVE,
                                    metadata=metadata)
        if spec.group_rule.kind is GroupRuleKind.SYNTHETIC:
            dataset = _apply_rule(dataset, spec.group_rule)
        return dataset

    logger.info('loading %s from %s', spec.name, spec.source_path)
    if spec.name == 'communities':
        features, groups, labels = load_communities(spec.source_path)
    elif spec.name == 'german':
        features, groups, labels = load_german(spec.source_path)
    else:
        features, labels = load_odds(spec.name, spec.source_path)
        # placeholder two-group split, replaced by the synthetic rule below
        groups = np.arange(len(labels)) % 2

    dataset = Dataset(_numeric(features, spec.name), groups, labels, spec.name, _feature_names(features), metadata)
    expected_groups = None
    if spec.group_rule.kind is GroupRuleKind.SYNTHETIC:
        dataset = _apply_rule(dataset, spec.group_rule)
        expected_groups = spec.group_rule.v_groups
    elif spec.name not in CONSTANTS.NATIVE_GROUP_DATASETS:
        raise InvalidConfigError('{0} has no native protected attribute'.format(spec.name))
    check_published_sizes(dataset, spec.name, expected_groups)
    return dataset


def _apply_rule(dataset, rule):
    return inject_protected_attribute(dataset, rule.v_groups, rule.bias_strength, rule.seed)


def injection_probabilities(v_groups, bias_strength):
    """ (outlier, inlier) group distributions; group 0 gets the excess outliers """
    p0 = (1.0 + bias_strength * (v_groups - 1)) / v_groups
    outlier = np.full(v_groups, (1.0 - p0) / (v_groups - 1))
    outlier[0] = p0
    return outlier, np.full(v_groups, 1.0 / v_groups)


def inject_protected_attribute(dataset, v_groups, bias_strength, seed):
    """ Assign synthetic protected groups that over-represent outliers in group 0.

    One uniform draw per instance, in index order, from numpy's default_rng(seed);
    the draw is mapped through the cumulative group distribution of the
    instance's label. bias_strength = 0 makes groups independent of the label,
    bias_strength = 1 with two groups puts every outlier in group 0.
    """
    if dataset.labels is None:
        raise InvalidInputError('group injection needs outlier labels')
    if int(v_groups) != v_groups or v_groups < 2:
        raise InvalidConfigError('v_groups must be an integer >= 2, got {0}'.format(v_groups))
    if v_groups > dataset.n:
        raise InvalidConfigError('v_groups={0} exceeds the {1} instances'.format(v_groups, dataset.n))
    if not 0.0 <= bias_strength <= 1.0:
        raise InvalidConfigError('bias_strength must lie in [0, 1], got {0}'.format(bias_strength))

    outlier_probs, inlier_probs = injection_probabilities(int(v_groups), float(bias_strength))
    draws = np.random.default_rng(seed).random(dataset.n)
    groups = np.where(dataset.labels == 1,
                      np.searchsorted(np.cumsum(outlier_probs), draws, side='right'),
                      np.searchsorted(np.cumsum(inlier_probs), draws, side='right'))
    groups = np.minimum(groups, v_groups - 1)

    sizes = np.bincount(groups, minlength=v_groups)
    if np.any(sizes == 0):
        raise InvalidInputError('injection left groups {0} empty; use fewer groups or another seed'.format(
            np.flatnonzero(sizes == 0).tolist()))
    outliers = np.bincount(groups, weights=dataset.labels, minlength=v_groups).astype(np.int64)
    logger.debug('injected %d groups into %s: sizes %s, outliers %s', v_groups, dataset.name,
                 sizes.tolist(), outliers.tolist())
    return dataset.with_groups(groups, group_rule='synthetic', v_groups=int(v_groups),
                               bias_strength=float(bias_strength), injection_seed=int(seed),
                               group_sizes=' '.join(str(int(s)) for s in sizes),
                               group_outliers=' '.join(str(int(s)) for s in outliers))


def fixture_dataset(name, seed=CONSTANTS.FIXTURE_SEED):
    """ Small stand-in for a benchmark with planted outliers and biased groups.

    Inliers come from two Gaussian clusters, outliers are spread uniformly over
    a box around them. Outlier share and group count follow the benchmark;
    groups are injected with FIXTURE_BIAS_STRENGTH.
    """
    if name not in CONSTANTS.DATASET_TABLE:
        raise InvalidConfigError('unknown fixture {0!r}'.format(name))
    inliers, outliers, groups = CONSTANTS.DATASET_TABLE[name]
    n = CONSTANTS.FIXTURE_SIZE
    d = CONSTANTS.FIXTURE_FEATURES
    n_out = max(CONSTANTS.FIXTURE_MIN_OUTLIERS, int(round(n * outliers / (inliers + outliers))))
    n_in = n - n_out

    rng = np.random.default_rng([seed, sorted(CONSTANTS.DATASET_TABLE).index(name)])
    centers = rng.choice([-1.5, 1.5], size=n_in)[:, None]
    inlier_rows = rng.normal(loc=centers, scale=1.0, size=(n_in, d))
    outlier_rows = rng.uniform(-6.0, 6.0, size=(n_out, d))
    order = rng.permutation(n)
    features = np.vstack([inlier_rows, outlier_rows])[order]
    labels = np.concatenate([np.zeros(n_in, dtype=np.int64), np.ones(n_out, dtype=np.int64)])[order]

    dataset = Dataset(features, np.arange(n) % 2, labels, CONSTANTS.FIXTURE_PREFIX + name,
                      tuple('x{0}'.format(j) for j in range(d)), {'fixture_seed': str(seed)})
    return inject_protected_attribute(dataset, groups, CONSTANTS.FIXTURE_BIAS_STRENGTH, seed)


def bundled_fixture_path(filename):
    return os.path.join(os.path.dirname(os.path.abspath(__file__)), 'fixtures', filename)


def _frame_to_dataset(frame, name, strict=True, groups_required=True, metadata=None):
    columns = [str(col) for col in frame.columns]
    if groups_required and CONSTANTS.GROUP_COLUMN not in columns:
        raise DatasetParseError('{0}: header has no {1!r} column'.format(name, CONSTANTS.GROUP_COLUMN))
    feature_columns = [col for col in columns if col not in (CONSTANTS.GROUP_COLUMN, CONSTANTS.LABEL_COLUMN)]
    if strict:
        bad = [col for col in feature_columns if not col.startswith(CONSTANTS.FEATURE_PREFIX)]
        if bad:
            raise DatasetParseError('{0}: unexpected header columns {1}'.format(name, bad))
    if not feature_columns:
        raise DatasetParseError('{0}: no feature columns'.format(name))

    feature_names = tuple(col[len(CONSTANTS.FEATURE_PREFIX):] if col.startswith(CONSTANTS.FEATURE_PREFIX)
                          else col for col in feature_columns)
    features = _numeric(frame[feature_columns], name)
    labels = None
    if CONSTANTS.LABEL_COLUMN in columns:
        if frame[CONSTANTS.LABEL_COLUMN].isna().any():
            raise DatasetParseError('{0}: label column has empty cells'.format(name))
        labels = frame[CONSTANTS.LABEL_COLUMN].to_numpy()
    if CONSTANTS.GROUP_COLUMN in columns:
        groups = frame[CONSTANTS.GROUP_COLUMN].to_numpy()
    else:
        groups = np.arange(len(frame)) % 2
    return Dataset(features, groups, labels, name, feature_names, metadata or {})


def _write_sidecar(path, entries):
    with open(path, 'w') as handle:
        for key, value in entries:
            handle.write('{0} = {1}\n'.format(key, value))


def read_key_value_file(path):
    """ Parse ``key = value`` lines; blank lines and # comments are skipped """
    entries = {}
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            key, sep, value = line.partition('=')
            if not sep:
                raise DatasetParseError('{0}:{1}: expected "key = value"'.format(path, number))
            entries[key.strip()] = value.strip()
    return entries


def save_dataset(dataset, path):
    """ Write the cache CSV and its sidecar; load_cached(path) gives back an equal Dataset """
    columns = {CONSTANTS.FEATURE_PREFIX + name: dataset.features[:, j]
               for j, name in enumerate(dataset.feature_names)}
    frame = pd.DataFrame(columns)
    frame[CONSTANTS.GROUP_COLUMN] = dataset.groups
    if dataset.labels is not None:
        frame[CONSTANTS.LABEL_COLUMN] = dataset.labels
    frame.to_csv(path, index=False, float_format=CONSTANTS.CSV_FLOAT_FORMAT, lineterminator='\n')

    entries = [('name', dataset.name), ('checksum', file_checksum(path))]
    entries += [('meta.' + key, value) for key, value in sorted(dataset.metadata.items())]
    _write_sidecar(path + CONSTANTS.SIDECAR_SUFFIX, entries)
    logger.debug('cached %s to %s', dataset.name, path)


def load_cached(path):
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetParseError('{0}: {1}'.format(path, exc)) from exc

    name = CONSTANTS.CUSTOM_DATASET
    metadata = {}
    sidecar = path + CONSTANTS.SIDECAR_SUFFIX
    if os.path.exists(sidecar):
        entries = read_key_value_file(sidecar)
        name = entries.get('name', name)
        metadata = {key[len('meta.'):]: value for key, value in entries.items() if key.startswith('meta.')}
        recorded = entries.get('checksum')
        if recorded and recorded != file_checksum(path):
            logger.warning('%s changed since it was cached (checksum mismatch)', path)
    return _frame_to_dataset(frame, name, strict=True, metadata=metadata)
