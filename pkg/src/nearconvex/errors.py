"""Exception hierarchy shared by the Python code and the compiled kernel."""


class NearConvexError(Exception):
    """Base class for all library errors."""


class InvalidInputError(NearConvexError, ValueError):
    """Non-finite coordinates, malformed shapes and similar caller mistakes."""


class PreconditionError(NearConvexError, ValueError):
    """An operation was called outside its domain (e.g. a point outside the body)."""


class GeometryError(NearConvexError):
    """Chord search failed, or a rounding map degenerated."""


class SamplerError(NearConvexError):
    """The one-dimensional sampler exceeded an iteration cap or met a degenerate target.

    ``best_point`` carries the best offset found so far when meaningful, and
    ``stats`` the acceptance statistics at the time of failure.
    """

    def __init__(self, message, best_point=None, stats=None):
        super().__init__(message)
        self.best_point = best_point
        self.stats = stats


class RoundingError(NearConvexError):
    """Sample covariance is rank deficient beyond tolerance."""


class DegenerateError(NearConvexError, ValueError):
    """A density is identically zero (log-density all -inf) on its domain."""


class PrecisionError(NearConvexError):
    """A quadrature estimate is not accurate to the requested tolerance."""


class ConfigurationError(NearConvexError, ValueError):
    """Inconsistent parameters (degenerate net, invalid plan, bad config document)."""


class SolverError(NearConvexError):
    """A scalar root finder could not bracket a sign change."""


class AnnealingError(NearConvexError):
    """A strand failed during an annealing epoch; carries the partial result."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
