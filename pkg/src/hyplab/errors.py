"""Exception hierarchy shared across the package.

Following common practice in numerical libraries, errors are split by the
caller's ability to react: configuration mistakes are programming errors,
numerical failures carry diagnostic payloads so a driver can retry with a
different discretization.
"""


class HyplabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(HyplabError):
    """Invalid or inconsistent configuration (bad keys, out-of-range values)."""


class RegimeError(HyplabError):
    """Requested evaluation point lies outside the validity regime of a bound."""


class FlowExitsGrid(HyplabError):
    """A transported function would need values beyond the radial grid."""


class NumericalFailure(HyplabError):
    """An iterative numerical procedure failed to converge.

    Parameters
    ----------
    message : str
        Human-readable description.
    history : list or None
        Iteration history (e.g. Rayleigh quotient or residual values) for
        post-mortem analysis.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else None
