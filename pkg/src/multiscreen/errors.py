"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit codes: bad inputs
(:class:`InputError` and subclasses, exit code 2) and numerical failures
(:class:`NumericalError` and subclasses, exit code 3).
"""


class MultiscreenError(Exception):
    """Base class for all package-specific errors."""


class InputError(MultiscreenError, ValueError):
    """Invalid argument, option, or data file supplied by the caller."""


class ManifestError(InputError):
    """A study manifest or one of its data files could not be used."""


class NumericalError(MultiscreenError):
    """A computation could not be carried out on the given data."""


class DegenerateColumnError(NumericalError):
    """A feature (or response) has no usable variation, so the
    self-normalized statistic is undefined."""


class SingularDesignError(NumericalError):
    """A regression design matrix is rank deficient."""


class BudgetExceededError(NumericalError):
    """An iterative stage would enumerate more conditioning sets than the
    configured budget allows."""


class SelectionError(NumericalError):
    """No usable model could be produced during penalty tuning."""
