"""Exception types shared across the package."""


class BanditRouteError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefiniteError(BanditRouteError):
    """Cholesky factorization hit a non-positive pivot (input not SPD)."""


class SchemaError(BanditRouteError):
    """A dataset file or record violates the logged-record schema."""


class EvalCapabilityError(BanditRouteError):
    """Full-information access was attempted without an evaluation capability."""


class NumericalDivergenceError(BanditRouteError):
    """Training produced a non-finite loss, gradient, or parameter."""
