"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes (config 2, data 3, numeric 4),
so library code should raise the most specific class that applies.
"""


class ViewgramError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatchError(ViewgramError, ValueError):
    """Operands have incompatible shapes; the message names both."""


class ConfigurationError(ViewgramError, ValueError):
    """Invalid model, branch, or run configuration."""


class DataError(ViewgramError, ValueError):
    """Invalid dataset contents (labels, dimensions, non-finite values)."""


class FormatError(DataError):
    """Malformed binary file: bad magic, bad version, or truncation."""


class NumericError(ViewgramError, ArithmeticError):
    """A computation produced or encountered a non-finite value."""


class UndefinedMetricError(ViewgramError, ValueError):
    """A metric is undefined for the given relevance pattern."""


class TapeConsumedError(ViewgramError, RuntimeError):
    """A gradient tape was replayed more than once."""
