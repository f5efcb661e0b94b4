"""Exception hierarchy shared by the estimation pipeline."""


class RigidLocError(ValueError):
    """Base class for all errors raised by rigidloc."""


class ConfigurationError(RigidLocError):
    """Invalid or unparseable experiment configuration."""


class DegenerateInputError(RigidLocError):
    """Input for which the requested quantity is not uniquely defined."""


class DegenerateMeasurementError(RigidLocError):
    """Measurements that cannot be pre-whitened (non-positive reference range)."""


class GeometryError(RigidLocError):
    """Anchor geometry leaves the projected design rank deficient."""


class TopologyError(RigidLocError):
    """Sensor topology too degenerate for the requested estimator."""


class InsufficientSensorsError(TopologyError):
    """Fewer sensors than the estimator needs."""


class NonUniqueSolutionError(RigidLocError):
    """Procrustes cross-product is singular, so the rotation is not unique."""


class UnidentifiableError(RigidLocError):
    """Reduced Fisher information is singular."""
