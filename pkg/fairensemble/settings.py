"""Experiment settings: ``NAME = literal`` config files and alpha grid strings.

A config file looks like a tiny Python module:

    DATASET = 'fixture:german'
    BASE_METHOD = 'greedy'
    ALPHA_GRID = 'log:20:1e-3:1e3'
    WEIGHTED_F1 = True

Only literal values are allowed. Command-line flags override file values.
"""

from __future__ import annotations

import ast
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

import fairensemble.CONSTANTS as CONSTANTS
from fairensemble.errors import InvalidConfigError

logger = logging.getLogger(__name__)

_NUMBER = (int, float)

# config file name -> (ExperimentConfig field, accepted literal types)
CONFIG_KEYS = {
    'DATASET': ('dataset', (str,)),
    'SOURCE': ('source', (str, type(None))),
    'BASE_METHOD': ('base_method', (str,)),
    'FAIRNESS': ('fairness_kind', (str,)),
    'WEIGHTED_F1': ('weighted_f1', (bool,)),
    'ALPHA_GRID': ('alpha_grid', (str, list, tuple)),
    'SEED': ('seed', (int,)),
    'OUT': ('output_dir', (str,)),
    'COF_SAMPLES': ('cof_samples', (int,)),
    'V_GROUPS': ('v_groups', (int, type(None))),
    'BIAS_STRENGTH': ('bias_strength', _NUMBER + (type(None),)),
    'STANDARDIZE': ('standardize', (bool,)),
    'JOBS': ('n_jobs', (int,)),
}


@dataclass(frozen=True)
class AlphaGrid:
    """ Either an explicit list of alpha values or a log-spaced grid with 0 prepended """

    explicit: Optional[Tuple[float, ...]] = None
    count: int = CONSTANTS.ALPHA_LOG_COUNT
    lo: float = CONSTANTS.ALPHA_MIN
    hi: float = CONSTANTS.ALPHA_MAX

    def __post_init__(self):
        if self.explicit is not None:
            values = tuple(float(a) for a in self.explicit)
            if not values:
                raise InvalidConfigError('alpha grid is empty')
            if any(not math.isfinite(a) or a < 0 for a in values):
                raise InvalidConfigError('alpha values must be finite and >= 0, got {0}'.format(list(values)))
            object.__setattr__(self, 'explicit', values)
            return
        if self.count < 1:
            raise InvalidConfigError('log alpha grid needs at least one point')
        if not (0 < self.lo <= self.hi) or not math.isfinite(self.hi):
            raise InvalidConfigError('log alpha grid needs 0 < min <= max, got {0}..{1}'.format(self.lo, self.hi))

    def values(self):
        """ Sorted, de-duplicated alpha values """
        if self.explicit is not None:
            return tuple(sorted(set(self.explicit)))
        grid = np.logspace(math.log10(self.lo), math.log10(self.hi), self.count)
        return (0.0,) + tuple(sorted(set(float(a) for a in grid)))

    def __str__(self):
        if self.explicit is not None:
            return ','.join(repr(a) for a in self.explicit)
        return 'log:{0}:{1!r}:{2!r}'.format(self.count, self.lo, self.hi)


def parse_alpha_grid(text):
    """ '0,0.1,1' -> explicit grid; 'log:COUNT:MIN:MAX' -> log grid; lists pass through """
    if isinstance(text, AlphaGrid):
        return text
    if isinstance(text, (list, tuple)):
        return AlphaGrid(explicit=tuple(text))
    text = str(text).strip()
    try:
        if text.startswith('log:'):
            parts = text.split(':')
            if len(parts) != 4:
                raise InvalidConfigError('log alpha grid must look like log:COUNT:MIN:MAX, got {0!r}'.format(text))
            return AlphaGrid(count=int(parts[1]), lo=float(parts[2]), hi=float(parts[3]))
        return AlphaGrid(explicit=tuple(float(part) for part in text.split(',') if part.strip()))
    except InvalidConfigError:
        raise
    except ValueError as exc:
        raise InvalidConfigError('cannot parse alpha grid {0!r}: {1}'.format(text, exc)) from exc


def parse_config_text(text, origin='<config>'):
    """ Parse ``NAME = literal`` statements into {ExperimentConfig field: value} """
    try:
        tree = ast.parse(text, filename=origin)
    except SyntaxError as exc:
        raise InvalidConfigError('{0}:{1}: {2}'.format(origin, exc.lineno, exc.msg)) from exc

    values = {}
    for node in tree.body:
        if not (isinstance(node, ast.Assign) and len(node.targets) == 1 and isinstance(node.targets[0], ast.Name)):
            raise InvalidConfigError('{0}:{1}: expected NAME = value'.format(origin, node.lineno))
        name = node.targets[0].id
        if name not in CONFIG_KEYS:
            raise InvalidConfigError('{0}:{1}: unknown setting {2}'.format(origin, node.lineno, name))
        try:
            value = ast.literal_eval(node.value)
        except ValueError:
            raise InvalidConfigError('{0}:{1}: {2} must be a literal'.format(origin, node.lineno, name)) from None
        field_name, types = CONFIG_KEYS[name]
        # bool is an int subclass; keep SEED = True out
        if not isinstance(value, types) or (isinstance(value, bool) and bool not in types):
            raise InvalidConfigError('{0}:{1}: {2} has the wrong type ({3})'.format(
                origin, node.lineno, name, type(value).__name__))
        values[field_name] = value
    return values


def read_config_file(path):
    with open(path) as handle:
        values = parse_config_text(handle.read(), origin=path)
    logger.debug('read %d settings from %s', len(values), path)
    return values


def merge_settings(file_values, flag_values):
    """ Flags that were given (not None) win over file values """
    merged = dict(file_values)
    merged.update({key: value for key, value in flag_values.items() if value is not None})
    return merged
