import argparse
import logging
import os
import sys

import fairensemble.CONSTANTS as CONSTANTS
from database.database import DatabaseInitializeError, SQLConnection, fetch_errors
from fairensemble import __version__
from fairensemble.errors import FairEnsembleError, backtrace_of, format_error, format_report
from fairensemble.experiments import ExperimentConfig, fixture_manifest, run_all, run_cof, run_sweep
from fairensemble.settings import merge_settings, read_config_file

"""Subcommands the runner knows about"""
commands = ['sweep', 'cof', 'all', 'errors']

logger = logging.getLogger(CONSTANTS.PROJECT_NAME)


def setup_logging(verbose):
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter('[%(name)s] %(levelname)s: %(message)s'))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def add_experiment_flags(parser):
    parser.add_argument('--config', help='settings file of NAME = value lines; flags override it')
    parser.add_argument('--dataset', help="benchmark name, 'custom' or 'fixture:<benchmark>'")
    parser.add_argument('--source', help='local data file for benchmarks and custom datasets')
    parser.add_argument('--base-method', dest='base_method', choices=['max', 'average', 'greedy'])
    parser.add_argument('--fairness', dest='fairness_kind', choices=['group', 'individual'])
    parser.add_argument('--alpha-grid', dest='alpha_grid', help="'0,0.1,1' or 'log:COUNT:MIN:MAX'")
    parser.add_argument('--unweighted-f1', dest='weighted_f1', action='store_const', const=False,
                        help='plain squared error instead of the rank-weighted fidelity term')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--out', dest='output_dir', help='output directory')
    parser.add_argument('--cof-samples', dest='cof_samples', type=int)
    parser.add_argument('--v-groups', dest='v_groups', type=int, help='inject this many synthetic groups')
    parser.add_argument('--bias-strength', dest='bias_strength', type=float)
    parser.add_argument('--no-standardize', dest='standardize', action='store_const', const=False)
    parser.add_argument('--jobs', dest='n_jobs', type=int, help='joblib workers')


EXPERIMENT_FIELDS = ('dataset', 'source', 'base_method', 'fairness_kind', 'alpha_grid', 'weighted_f1', 'seed',
                     'output_dir', 'cof_samples', 'v_groups', 'bias_strength', 'standardize', 'n_jobs')


def build_parser():
    parser = argparse.ArgumentParser(prog='FairEnsemble',
                                     description='Fairness-aware outlier ensembles: alpha sweeps and cost of fairness')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging and full backtraces')
    parser.add_argument('--version', action='version', version='%(prog)s {0}'.format(__version__))
    sub = parser.add_subparsers(dest='command', required=True)

    add_experiment_flags(sub.add_parser('sweep', help='solve over the alpha grid and write sweep.csv'))
    add_experiment_flags(sub.add_parser('cof', help='sample the cost of fairness and write cof.csv'))

    run_all_parser = sub.add_parser('all', help='run a manifest of configs and write summary.csv')
    run_all_parser.add_argument('--manifest', nargs='*', default=[], help='settings files, one config each')
    run_all_parser.add_argument('--fixtures', action='store_true',
                                help='add every bundled fixture x fairness kind x {max, greedy}')
    run_all_parser.add_argument('--out', default='runs')
    run_all_parser.add_argument('--seed', type=int, default=0)
    run_all_parser.add_argument('--alpha-grid', dest='alpha_grid')
    run_all_parser.add_argument('--cof-samples', dest='cof_samples', type=int, default=CONSTANTS.COF_SAMPLES)
    run_all_parser.add_argument('--jobs', type=int, default=1, help='configs run in parallel')

    errors_parser = sub.add_parser('errors', help='print failures recorded in a run ledger')
    errors_parser.add_argument('--out', default='runs')
    errors_parser.add_argument('--config-id', dest='config_id')
    return parser


def experiment_config(args):
    file_values = read_config_file(args.config) if args.config else {}
    flags = {name: getattr(args, name) for name in EXPERIMENT_FIELDS}
    return ExperimentConfig.from_settings(merge_settings(file_values, flags))


def manifest_from(args):
    manifest = [ExperimentConfig.from_settings(read_config_file(path)) for path in args.manifest]
    if args.fixtures:
        manifest += fixture_manifest(args.out, args.seed, args.alpha_grid, args.cof_samples)
    return manifest


def show_errors(args):
    path = os.path.join(args.out, CONSTANTS.LEDGER_FILE)
    if not os.path.exists(path):
        logger.error('no ledger at %s', path)
        return 1
    with SQLConnection(path) as ledger:
        rows = fetch_errors(ledger, args.config_id)
    if not rows:
        print('no recorded failures')
    for config_id, stage_name, error_name, error_text, full_command, full_backtrace in rows:
        print(format_report(config_id, error_name, error_text, full_command, full_backtrace, stage_name))
        print()
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    command_string = ' '.join(sys.argv if argv is None else ['FairEnsemble.py'] + list(argv))
    try:
        if args.command == 'sweep':
            run_sweep(experiment_config(args))
        elif args.command == 'cof':
            run_cof(experiment_config(args))
        elif args.command == 'all':
            summary = run_all(manifest_from(args), args.out, args.jobs)
            return 0 if (summary['status'] == 'ok').all() else 2
        else:
            return show_errors(args)
    except (FairEnsembleError, DatabaseInitializeError, OSError) as exc:
        backtrace = backtrace_of(exc) if args.verbose else None
        print(format_error(args.command, exc, command_string, backtrace), file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
