import contextlib
import logging
import traceback

import fairensemble.CONSTANTS as CONSTANTS

logger = logging.getLogger(__name__)


class FairEnsembleError(Exception):
    """ Base class for every error raised by the package """
    pass


class InvalidInputError(FairEnsembleError, ValueError):
    """ Raised for NaN/Inf values and malformed vectors or matrices """
    pass


class InvalidConfigError(FairEnsembleError, ValueError):
    """ Raised when detector, solver or experiment settings are out of range """
    pass


class FairnessUndefinedError(FairEnsembleError, ValueError):
    """ Raised when fewer than two protected groups are present """
    pass


class DimensionMismatchError(FairEnsembleError, ValueError):
    pass


class InternalError(FairEnsembleError):
    """ Raised when internal bookkeeping is inconsistent, e.g. a missing pair block """
    pass


class SingularSystemError(FairEnsembleError):
    """ Raised when a linear system stays singular after the ridge fallback """
    pass


class DatasetParseError(FairEnsembleError):
    """ Raised when a dataset file is missing columns or has a malformed header """
    pass


class DatasetSizeMismatchError(FairEnsembleError):
    """ Raised when a loaded benchmark does not match its published inlier/outlier counts """

    def __init__(self, name, expected, actual):
        self.name = name
        self.expected = expected
        self.actual = actual
        super().__init__(self.diff_report())

    def __reduce__(self):
        return type(self), (self.name, self.expected, self.actual)

    def diff_report(self):
        lines = ['{0}: loaded dataset does not match the published sizes'.format(self.name)]
        for field in ('inliers', 'outliers', 'groups'):
            want = self.expected[field]
            got = self.actual.get(field)
            marker = ' ' if want == got else '!'
            lines.append('{0} {1:<9} expected {2:>6}  got {3:>6}'.format(marker, field, want, got))
        return '\n'.join(lines)


class DetectorError(FairEnsembleError):
    """ Raised when a base detector fails; names the offending config """

    def __init__(self, config, cause):
        self.config = config
        self.cause = cause
        super().__init__('{0} failed: {1}: {2}'.format(config, type(cause).__name__, cause))

    def __reduce__(self):
        return type(self), (self.config, self.cause)


class StageError(FairEnsembleError):
    """ Wraps any failure inside a pipeline stage so reports can name the stage """

    def __init__(self, stage_name, cause):
        self.stage = stage_name
        self.cause = cause
        super().__init__('[{0}] {1}: {2}'.format(stage_name, type(cause).__name__, cause))

    def __reduce__(self):
        return type(self), (self.stage, self.cause)


@contextlib.contextmanager
def stage(name):
    """ Run a block as the named pipeline stage.

    To use:
        with stage('detectors'):
            S = build_score_matrix(dataset, configs)

    Any exception other than StageError leaving the block is re-raised as
    StageError(name, cause); nested stages keep the innermost name.
    """
    logger.debug('entering stage %s', name)
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


def backtrace_of(error):
    return ''.join(traceback.format_exception(type(error), error, error.__traceback__))


def format_error(command_name, error, full_command_string, full_backtrace=None):
    """ Build the plain-text error report printed by the runner.

    Parameters:
      command_name = subcommand being processed ('sweep', 'cof', ...)
      error = the exception instance
      full_command_string = the command line or config id that was running
      full_backtrace = if given, appended in 512-character chunks
    """
    return format_report(command_name, type(error).__name__, str(error), full_command_string, full_backtrace,
                         getattr(error, 'stage', None))


def format_report(command_name, error_name, error_text, full_command_string, full_backtrace=None,
                  stage_name=None):
    """ format_error() for an error stored as text, e.g. a ledger row """
    title = 'An error was encountered while processing the {0} command'.format(command_name)
    if stage_name:
        title += ' (stage: {0})'.format(stage_name)
    lines = [title, '{0}: {1}'.format(error_name, error_text),
             'While processing the command: {0}'.format(full_command_string)]
    if full_backtrace:
        chunks = [full_backtrace[i:i + 512] for i in range(0, len(full_backtrace), 512)]
        for itr, chunk in enumerate(chunks, start=1):
            lines.append('Backtrace ({0} of {1}):'.format(itr, len(chunks)))
            lines.append(chunk)
    else:
        lines.append('Run with --verbose or the errors subcommand for the full backtrace')
    lines.append(CONSTANTS.BUG_REPORT_HINT)
    return '\n'.join(lines)
