"""Exception types shared across the package."""


class TorusDynError(Exception):
    """Base class for all package errors."""


class NotHyperbolic(TorusDynError):
    """An eigenvalue modulus is within tolerance of 1 (or exactly 1)."""


class NotUnimodular(TorusDynError):
    """The integer matrix does not have determinant +-1."""


class WindowTooShort(TorusDynError):
    """A truncation tail exceeds the requested precision."""


class PrecisionUnreachable(TorusDynError):
    """No window below the cap makes the geometric tail small enough."""


class StrengthTooWeak(TorusDynError):
    """A perturbation strength is below its bifurcation threshold."""


class C0Violation(TorusDynError):
    """Measured sup displacement of a perturbation reaches the ball radius."""


class MapConstructionError(TorusDynError):
    """A constructed map fails a structural validity check (e.g. a fold)."""


class NoFiniteM(TorusDynError):
    """The central contraction bound sigma vanishes within tolerance."""


class EnumerationOverflow(TorusDynError):
    """A periodic-point count exceeds the configured enumeration cap."""


class RefinementFailed(TorusDynError):
    """Newton refinement of a periodic point did not converge."""


class PeriodMismatch(TorusDynError):
    """A refined periodic point has a smaller period than requested."""


class ExplosionGuard(TorusDynError):
    """Fiber-class exploration exceeded its member cap."""


class BudgetExceeded(TorusDynError):
    """A compute budget (samples x iterations) was exceeded."""


class NonpositiveHeight(TorusDynError):
    """A suspension height is not strictly positive."""


class ConfigError(TorusDynError):
    """A run configuration is missing keys or has out-of-range values."""
