"""Exception hierarchy. Numerical failures map to CLI exit code 1, config errors to 2."""


class LatticeTrapError(Exception):
    """Base class for numerical / physical failures."""


class GeometryError(LatticeTrapError):
    """Invalid electrode geometry (overlapping holes, non-positive lengths)."""


class ResolutionError(LatticeTrapError):
    """Grid spacing too coarse to resolve the geometry."""


class MemoryEstimateError(LatticeTrapError):
    """Requested grid exceeds the configured node cap."""


class ConvergenceError(LatticeTrapError):
    """Iterative solve did not reach tolerance; carries the achieved residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class FitRankError(LatticeTrapError):
    """Fit region degenerate / under-determined."""


class NoMinimumError(LatticeTrapError):
    """No confined pseudopotential minimum at the requested site."""


class UnboundedWellError(LatticeTrapError):
    """Well connects to the domain boundary at the minimum level."""


class MissingZ1Error(LatticeTrapError):
    """Top-plate bias requested but the z1 geometric factor is not available."""


class AntiTrappingError(LatticeTrapError):
    """Biased axial frequency is imaginary (static bias destroys confinement)."""


class BracketError(LatticeTrapError):
    """Root/transition bracketing failed."""


class RegimeError(LatticeTrapError):
    """Closed-form model used outside its validity regime."""


class MergeError(LatticeTrapError):
    """Equilibrium iterates collapsed into a single well."""


class DegenerateDataError(LatticeTrapError):
    """Input data insufficient or degenerate for the requested fit."""


class NoPeakError(LatticeTrapError):
    """Spectrum carries no usable secular peak."""


class StepSizeError(LatticeTrapError):
    """Integration time step too large for the drive period."""


class UnknownVariableError(LatticeTrapError):
    """Scan specification names an unsupported variable or target."""


class ConfigError(Exception):
    """Invalid or incomplete run configuration (CLI exit code 2)."""
