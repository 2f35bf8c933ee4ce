import contextlib
import io
import os
import unittest

import numpy as np
import pandas as pd

import fairensemble.CONSTANTS as CONSTANTS
from database.database import SQLConnection, fetch_errors, fetch_runs
from fairensemble.detectors import DetectorConfig
from fairensemble.errors import InvalidConfigError, StageError
from fairensemble.experiments import (SUMMARY_COLUMNS, ExperimentConfig, cof_alphas, fixture_manifest, prepare,
                                      run_all, run_cof, run_sweep)
from fairensemble.ingestion import save_dataset
from fairensemble.solver import FairnessKind
from tests.helpers import TempDirMixin, make_dataset

SMALL_DETECTORS = (DetectorConfig('knn', 5), DetectorConfig('lof', 10), DetectorConfig('iforest', 50, 3))


def small_config(**kwargs):
    defaults = {'dataset': 'fixture:german', 'alpha_grid': '0,0.1,1', 'cof_samples': 4,
                'detectors': SMALL_DETECTORS}
    defaults.update(kwargs)
    return ExperimentConfig(**defaults)


def read_bytes(path):
    with open(path, 'rb') as handle:
        return handle.read()


class TestExperimentConfig(unittest.TestCase):
    def test_coerces_fields(self):
        config = ExperimentConfig(base_method='greedy', fairness_kind='individual', alpha_grid='1,0')
        self.assertIs(config.fairness_kind, FairnessKind.INDIVIDUAL)
        self.assertEqual(config.alpha_grid.values(), (0.0, 1.0))
        self.assertEqual(config.config_id, 'fixture_german-greedy-individual-weighted')
        self.assertEqual(len(config.detector_configs()), 18)

    def test_rejects(self):
        with self.assertRaises(InvalidConfigError):
            ExperimentConfig(cof_samples=-1)
        with self.assertRaises(InvalidConfigError):
            ExperimentConfig.from_settings({'colour': 'blue'})
        with self.assertRaises(ValueError):
            ExperimentConfig(base_method='median')

    def test_cost_of_fairness_needs_alpha_zero(self):
        with self.assertRaises(InvalidConfigError):
            ExperimentConfig(alpha_grid='1,10', cof_samples=5)
        config = ExperimentConfig(alpha_grid='1,10', cof_samples=0)
        self.assertEqual(config.alpha_grid.values(), (1.0, 10.0))
        self.assertIn(0.0, ExperimentConfig(alpha_grid='log:5:1e-2:1e2', cof_samples=5).alpha_grid.values())


class TestSweep(TempDirMixin, unittest.TestCase):
    def test_sorted_alpha_and_columns(self):
        config = small_config(alpha_grid='1,0,0.5', output_dir=self.path('sweep'))
        records = run_sweep(config)
        self.assertEqual([rec.alpha for rec in records], [0.0, 0.5, 1.0])
        frame = pd.read_csv(self.path('sweep', CONSTANTS.SWEEP_FILE))
        self.assertEqual(list(frame.columns)[:7], ['alpha', 'f1', 'f2', 'dp', 'if', 'auc', 'ridge_triggered'])
        self.assertEqual(list(frame.columns)[7:], ['w_0', 'w_1', 'w_2'])
        self.assertEqual(frame['alpha'].tolist(), [0.0, 0.5, 1.0])
        self.assertTrue(((frame['auc'] >= 0) & (frame['auc'] <= 1)).all())
        np.testing.assert_allclose(frame['f2'], frame['dp'], rtol=1e-12, atol=1e-15)
        self.assertTrue(os.path.exists(self.path('sweep', CONSTANTS.META_FILE)))

    def test_alpha_zero_only(self):
        records = run_sweep(small_config(alpha_grid=[0], output_dir=self.path('zero')))
        self.assertEqual(len(records), 1)
        self.assertEqual(records[0].alpha, 0.0)

    def test_large_alpha_trades_fidelity_for_fairness(self):
        for kind in FairnessKind:
            with self.subTest(kind=kind):
                config = small_config(alpha_grid=[0, 1e6], fairness_kind=kind, output_dir=self.path(kind.value))
                start, end = run_sweep(config)
                self.assertLess(end.f2, start.f2)
                self.assertGreater(end.f1, start.f1)

    def test_byte_identical_reruns(self):
        first = small_config(output_dir=self.path('a'))
        second = small_config(output_dir=self.path('b'))
        run_sweep(first)
        run_sweep(second)
        run_cof(first)
        run_cof(second)
        for name in (CONSTANTS.SWEEP_FILE, CONSTANTS.COF_FILE, CONSTANTS.META_FILE):
            with self.subTest(name=name):
                self.assertEqual(read_bytes(self.path('a', name)), read_bytes(self.path('b', name)))

    def test_meta_echoes_config(self):
        run_sweep(small_config(seed=3, output_dir=self.path('meta')))
        with open(self.path('meta', CONSTANTS.META_FILE)) as handle:
            text = handle.read()
        self.assertIn('seed = 3\n', text)
        self.assertIn('dataset = fixture:german\n', text)
        self.assertIn('dataset_checksum = ', text)
        self.assertIn('alpha_grid = 0.0,0.1,1.0\n', text)

    def test_unlabelled_dataset_fails_in_dataset_stage(self):
        path = self.path('nolabels.csv')
        pd.DataFrame({'a': [1.0, 2.0, 3.0, 4.0], 'group': [0, 1, 0, 1]}).to_csv(path, index=False)
        with self.assertRaises(StageError) as ctx:
            prepare(small_config(dataset='custom', source=path))
        self.assertEqual(ctx.exception.stage, 'dataset')


class TestCostOfFairness(TempDirMixin, unittest.TestCase):
    def test_alpha_samples(self):
        alphas = cof_alphas(200, seed=1)
        self.assertTrue(np.all(np.diff(alphas) >= 0))
        self.assertGreaterEqual(alphas.min(), CONSTANTS.ALPHA_MIN)
        self.assertLessEqual(alphas.max(), CONSTANTS.ALPHA_MAX)
        np.testing.assert_array_equal(alphas, cof_alphas(200, seed=1))

    def test_cof_file(self):
        samples = run_cof(small_config(cof_samples=6, output_dir=self.path('cof')))
        self.assertEqual(len(samples), 6)
        frame = pd.read_csv(self.path('cof', CONSTANTS.COF_FILE))
        self.assertEqual(list(frame.columns), ['alpha', 'cof_weighted', 'cof_unweighted', 'weighted_undefined',
                                               'unweighted_undefined'])
        self.assertEqual(frame['weighted_undefined'].tolist(), frame['cof_weighted'].isna().astype(int).tolist())
        self.assertEqual(frame['unweighted_undefined'].tolist(),
                         frame['cof_unweighted'].isna().astype(int).tolist())
        self.assertTrue(frame['alpha'].is_monotonic_increasing)

    def test_needs_samples(self):
        with self.assertRaises(InvalidConfigError):
            run_cof(small_config(cof_samples=0, output_dir=self.path('none')))


class TestRunAll(TempDirMixin, unittest.TestCase):
    def test_empty_manifest(self):
        summary = run_all([], self.path('empty'))
        self.assertEqual(len(summary), 0)
        frame = pd.read_csv(self.path('empty', CONSTANTS.SUMMARY_FILE))
        self.assertEqual(list(frame.columns), SUMMARY_COLUMNS)
        self.assertTrue(os.path.exists(self.path('empty', CONSTANTS.LEDGER_FILE)))

    def test_two_configs(self):
        manifest = [small_config(base_method='max'), small_config(base_method='greedy')]
        summary = run_all(manifest, self.path('runs'))
        self.assertEqual(summary['status'].tolist(), ['ok', 'ok'])
        self.assertEqual(summary['config_id'].tolist(), sorted(summary['config_id']))
        self.assertEqual(summary['output_dir'].tolist(), summary['config_id'].tolist())
        for config_id in summary['config_id']:
            self.assertTrue(os.path.exists(self.path('runs', config_id, CONSTANTS.SWEEP_FILE)))
            self.assertTrue(os.path.exists(self.path('runs', config_id, CONSTANTS.COF_FILE)))
        with SQLConnection(self.path('runs', CONSTANTS.LEDGER_FILE)) as ledger:
            self.assertEqual([row[5] for row in fetch_runs(ledger)], ['ok', 'ok'])
            self.assertEqual(fetch_errors(ledger), [])

    def test_failure_is_recorded(self):
        broken = small_config(dataset='pima', source=self.path('missing.csv'))
        summary = run_all([broken, small_config()], self.path('runs'))
        status = dict(zip(summary['config_id'], summary['status']))
        self.assertEqual(status[broken.config_id], 'failed')
        self.assertEqual(status[small_config().config_id], 'ok')
        with SQLConnection(self.path('runs', CONSTANTS.LEDGER_FILE)) as ledger:
            (error,) = fetch_errors(ledger)
        self.assertEqual(error[0], broken.config_id)
        self.assertEqual(error[1], 'dataset')
        self.assertIn('DatasetParseError', error[3])
        self.assertIn('dataset=pima', error[4])

    def test_rerun_replaces_recorded_errors(self):
        broken = small_config(dataset='pima', source=self.path('missing.csv'))
        run_all([broken], self.path('runs'))
        run_all([broken], self.path('runs'))
        with SQLConnection(self.path('runs', CONSTANTS.LEDGER_FILE)) as ledger:
            self.assertEqual(len(fetch_runs(ledger)), 1)
            self.assertEqual(len(fetch_errors(ledger)), 1)

    def test_rerun_after_fix_clears_errors(self):
        source = self.path('data.csv')
        config = small_config(dataset='custom', source=source)
        run_all([config], self.path('runs'))
        save_dataset(make_dataset(), source)
        summary = run_all([config], self.path('runs'))
        self.assertEqual(summary['status'].tolist(), ['ok'])
        with SQLConnection(self.path('runs', CONSTANTS.LEDGER_FILE)) as ledger:
            self.assertEqual(fetch_errors(ledger), [])

    def test_duplicate_configs(self):
        with self.assertRaises(InvalidConfigError):
            run_all([small_config(), small_config()], self.path('dup'))

    def test_fixture_manifest(self):
        manifest = fixture_manifest(self.path('fixtures'), seed=2, alpha_grid='0,1', cof_samples=3)
        self.assertEqual(len(manifest), 32)
        self.assertEqual(len({config.config_id for config in manifest}), 32)
        self.assertTrue(all(config.seed == 2 for config in manifest))


class TestRunner(TempDirMixin, unittest.TestCase):
    def run_main(self, *argv):
        import FairEnsemble
        stdout, stderr = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            code = FairEnsemble.main(list(argv))
        return code, stdout.getvalue(), stderr.getvalue()

    def test_sweep_command(self):
        config_path = self.path('run.cfg')
        with open(config_path, 'w') as handle:
            handle.write("DATASET = 'fixture:vowels'\nALPHA_GRID = '0,1'\n")
        code, _, _ = self.run_main('sweep', '--config', config_path, '--seed', '1', '--out', self.path('out'))
        self.assertEqual(code, 0)
        frame = pd.read_csv(self.path('out', CONSTANTS.SWEEP_FILE))
        self.assertEqual(frame['alpha'].tolist(), [0.0, 1.0])
        self.assertEqual(len([c for c in frame.columns if c.startswith('w_')]), 18)

    def test_bad_alpha_grid(self):
        code, _, stderr = self.run_main('sweep', '--alpha-grid', '0,-1', '--out', self.path('out'))
        self.assertEqual(code, 1)
        self.assertIn('InvalidConfigError', stderr)
        self.assertIn(CONSTANTS.BUG_REPORT_HINT, stderr)

    def test_errors_command(self):
        code, stdout, _ = self.run_main('errors', '--out', self.path('nothing'))
        self.assertEqual(code, 1)
        run_all([small_config(dataset='pima', source=self.path('missing.csv'))], self.path('runs'))
        code, stdout, _ = self.run_main('errors', '--out', self.path('runs'))
        self.assertEqual(code, 0)
        self.assertIn('StageError', stdout)
        self.assertIn('(stage: dataset)', stdout)


if __name__ == '__main__':
    unittest.main()
