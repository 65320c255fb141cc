"""Exception taxonomy shared across the library."""


class QlimitsError(Exception):
    """Base class for all library-specific errors."""


class ConfigurationError(QlimitsError):
    """Invalid scenario configuration (bad weights, reducible chain, ...)."""


class WindowExhaustedError(QlimitsError):
    """A computation stepped outside the realized symbol window.

    Regenerate the path with a larger window; the window is never silently
    extended because the realization must stay fixed within one experiment.
    """


class UsageError(QlimitsError):
    """Caller-side contract violation (e.g. resolution mismatch)."""


class NumericError(QlimitsError):
    """A numeric routine failed to converge or produced garbage."""


class DegeneracyError(QlimitsError):
    """Twisted eigendata degenerated (twist outside the analytic window)."""


class ConvexityError(QlimitsError):
    """The rate-function input violates convexity beyond tolerance."""


class AperiodicityError(QlimitsError):
    """The local-CLT harness was invoked without an aperiodicity certificate."""
