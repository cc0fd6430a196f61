"""Exception hierarchy and the CLI exit code each class maps to."""


class NavDistillError(Exception):
    exit_code = 1


class ConfigError(NavDistillError, ValueError):
    """Invalid or unparseable configuration."""

    exit_code = 1


class ContractError(NavDistillError, ValueError):
    """A caller violated an operation precondition (shapes, lengths, stages)."""

    exit_code = 3


class StageMismatchError(ContractError):
    """A checkpoint carries the wrong training-stage tag for the requested use."""


class ConfigHashMismatchError(ContractError):
    pass


class DegenerateBatchError(NavDistillError, ValueError):
    """A batch dimension has zero variance, so cross-correlation is undefined."""

    exit_code = 4


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_CONTRACT = 3
EXIT_DEGENERATE = 4
