"""Exception hierarchy; each error carries the process exit code the CLI reports."""

import enum


class ExitCode(enum.IntEnum):
    SUCCESS = 0
    USAGE = 1
    INPUT_ERROR = 2
    COMPUTE_GUARD = 3


class PbncError(Exception):
    """Base error with a human readable detail and an exit code."""

    exit_code = ExitCode.USAGE

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UsageError(PbncError):
    exit_code = ExitCode.USAGE


class InputError(PbncError):
    """Invalid file contents or parameters."""

    exit_code = ExitCode.INPUT_ERROR


class ComputeGuardError(PbncError):
    """A computation refused to run or gave up after its budget."""

    exit_code = ExitCode.COMPUTE_GUARD


class GridTooLargeError(ComputeGuardError):
    pass


class RetryCapExceededError(ComputeGuardError):
    pass


class InconsistentSystemError(PbncError):
    """A linear system built from simulated data has no solution."""

    exit_code = ExitCode.USAGE
