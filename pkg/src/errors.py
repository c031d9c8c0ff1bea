"""Exception types raised by the laboratory."""


class LabError(Exception):
    """Base class for every error the laboratory raises on purpose."""


class GridError(LabError, ValueError):
    """Invalid grid construction or mismatched grids."""


class FieldFormatError(LabError):
    """Malformed NLSF file (magic, version or size mismatch)."""


class ProfileError(LabError, ValueError):
    """Invalid profile parameters."""


class ConfigError(LabError, ValueError):
    """Experiment configuration violates a hypothesis or cannot be parsed."""


class ResolutionError(LabError, ValueError):
    """Grid does not resolve the carrier wave or the profiles."""


class GeometryError(LabError, ValueError):
    """Direction is not a unit vector, or a point lies in the wrong place."""


class SolverError(LabError):
    """Time stepping produced non-finite values or drifted out of tolerance."""


class StabilityError(LabError):
    """Characteristic integration disagrees with its halved-step companion."""


class SamplingError(LabError, ValueError):
    """Samples are too few, too coarse or not uniformly spaced."""


class MeasurementError(LabError, ValueError):
    """Measurement point outside the computational box."""


class SignalLostError(MeasurementError):
    """Measured modulus too small for its phase to mean anything."""
