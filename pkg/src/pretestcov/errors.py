"""Exception hierarchy for pretestcov."""


class PretestCovError(Exception):
    """Base class for all errors raised by this package."""


class InadmissibleParameterError(PretestCovError):
    """A parameter combination implies an invalid (non-PSD) model."""


class DegenerateDesignError(PretestCovError):
    """A covariate/response configuration makes an estimator undefined.

    Raised for SSW = 0 or SSB = 0 designs and for variance estimates that
    collapse to zero.  Under the continuous data-generating process these
    events have probability zero; they can only arise from pathological
    user-supplied input.
    """


class UnsupportedStructureError(PretestCovError):
    """An operation was requested for a correlation structure it does not
    support (e.g. exact conditional coverage under AR(1))."""


class MleConvergenceError(PretestCovError):
    """The profile-likelihood search failed to produce a usable optimum.

    Carries the best iterate found so far in ``best_pair``.
    """

    def __init__(self, message, best_pair=None):
        super().__init__(message)
        self.best_pair = best_pair


class ConfigError(PretestCovError):
    """Invalid command-line or config-file input (CLI exit code 2)."""
