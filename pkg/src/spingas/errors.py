"""Exception types shared across the package."""


class SpinGasError(Exception):
    """Base class for all package-specific errors."""


class NonConvergence(SpinGasError):
    """A bracketed root failed to refine within the iteration budget."""


class InvalidSymmetry(SpinGasError, ValueError):
    """Symmetry labels incompatible with the requested cell geometry."""


class OutOfDomain(SpinGasError, ValueError):
    """Evaluation point lies outside the cell."""


class GeometryMismatch(SpinGasError, ValueError):
    """Two objects refer to different cell geometries."""


class AxisMismatch(SpinGasError, ValueError):
    """Probe axis does not match a geometry axis."""


class FlatSpectrum(SpinGasError):
    """The spectrum has no resolvable half-maximum width on the grid."""


class StiffnessFailure(SpinGasError):
    """The coupled-mode propagator could not be constructed."""


class FitFailure(SpinGasError):
    """A regression fit did not reach the required quality."""


class InsufficientSamples(SpinGasError):
    """Too few periodogram segments for a meaningful average."""


class ConfigError(SpinGasError, ValueError):
    """Invalid or incomplete run configuration."""
