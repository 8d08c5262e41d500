"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericalError -> 4.
"""


class GraphControlError(Exception):
    """Base class for all package errors."""


class ConfigError(GraphControlError):
    """Invalid configuration: unknown keys, bad values, mode mismatches."""


class DataError(GraphControlError):
    """Invalid or inconsistent input data (files, graphs, splits)."""


class NumericalError(GraphControlError):
    """Numerical failure: non-finite values, eigensolver breakdown."""


class StructureOnlyError(GraphControlError):
    """Raised when node attributes are accessed through a structure-only view."""
