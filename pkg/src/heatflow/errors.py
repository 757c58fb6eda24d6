"""Exception hierarchy shared across the package."""


class HeatflowError(Exception):
    """Base class for all package-specific errors."""


class RegimeError(HeatflowError, ValueError):
    """Parameters fall outside the regime in which a bound is valid.

    Distinct from a verification failure: the requested quantity is simply
    not defined for the given (kappa, sigma, beta, R).
    """


class NumericsError(HeatflowError, RuntimeError):
    """A numerical procedure failed to converge or produced non-finite values."""


class FlowDivergenceError(NumericsError):
    """A flow trajectory escaped the safety ball around the support."""
