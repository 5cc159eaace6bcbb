"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, the DomainError
family -> 3. Everything else is a genuine bug and propagates.
"""


class PolyfractError(Exception):
    """Base class for all package errors."""


class ConfigError(PolyfractError):
    """Invalid or unknown configuration input."""


class DomainError(PolyfractError):
    """Numeric-domain failure: the requested computation is not defined
    on the given truncation or parameter range."""


class BoundaryError(DomainError):
    """A walk-driven operation would touch the truncation frontier."""


class SizeLimitError(DomainError):
    """A product state space or buffer would exceed the configured cap."""


class TubeStarvationError(DomainError):
    """A tube-restricted evolution lost all mass."""


class DegenerateFitError(DomainError):
    """Too few usable points, or a degenerate system, for a regression."""
