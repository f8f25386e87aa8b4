"""Exception hierarchy shared by all dollardlab modules."""


class DollardLabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(DollardLabError, ValueError):
    """Input outside the mathematical domain of an operation (non-finite, xi = 0, ...)."""


class ConfigurationError(DollardLabError, ValueError):
    """A model, grid or experiment configuration is inconsistent or incomplete."""


class UnsupportedConfigurationError(ConfigurationError):
    """Configuration is valid in general but not supported by this operation."""


class QuadratureError(DollardLabError, ArithmeticError):
    """Adaptive quadrature failed to reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class OutsideClosedFormError(DollardLabError, ValueError):
    """Homogeneous closed form requested where |t xi| is below the homogeneity radius."""


class IntegrationError(DollardLabError, ArithmeticError):
    """ODE integration aborted (step-size underflow or a failing right-hand side)."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class NontrappingError(DollardLabError):
    """Trajectory does not escape to infinity at the required rate."""


class ConvergenceError(DollardLabError, ArithmeticError):
    """A limit extrapolation did not converge (tail exponent not negative)."""


class SolverError(DollardLabError, ArithmeticError):
    """Newton shooting failed; carries the last residual norm."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class LatticeMismatchError(DollardLabError, ValueError):
    """A multiplier was tabulated on a different lattice than the state."""


class BoundaryMassError(DollardLabError):
    """Wavefunction mass reached the absorbing layer or the periodic seam."""


class BandError(DollardLabError, ValueError):
    """A probe's frequency content does not fit inside the lattice Nyquist band."""
