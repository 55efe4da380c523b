"""Exception hierarchy shared by all layers."""


class CasimirSphereError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(CasimirSphereError):
    """An argument lies outside the mathematical domain of an operation."""


class AccuracyError(CasimirSphereError):
    """A truncated expansion cannot reach the requested tolerance."""


class DegenerateDenominator(CasimirSphereError):
    """A scattering denominator vanished; cannot happen for passive media on
    the imaginary axis, so this signals an internal inconsistency."""


class SideMismatch(CasimirSphereError):
    """Radial points straddle the sphere surface where a single-side mode
    function was requested."""


class SurfaceSingularity(CasimirSphereError):
    """Stress evaluation requested too close to the surface, where the
    renormalized stress diverges."""


class ConvergenceFailure(CasimirSphereError):
    """Quadrature or mode summation failed to meet tolerance under its caps."""


class IllConditioned(CasimirSphereError):
    """The fit matrix is too ill-conditioned for the requested model order."""


class NoConvergence(CasimirSphereError):
    """The fit-order ladder did not converge to the requested accuracy."""


class NoiseDominated(CasimirSphereError):
    """Extraction uncertainty exceeds the magnitude of the extracted value."""


class ConfigError(CasimirSphereError):
    """Invalid or contradictory run configuration."""
