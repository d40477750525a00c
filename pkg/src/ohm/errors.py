"""Exception hierarchy shared by every module."""


class OhmError(Exception):
    """Base class for all errors raised by the package."""


class ParameterError(OhmError, ValueError):
    """A parameter is outside its admissible range."""


class GeometryError(OhmError):
    """The environment window does not cover the requested region."""


class ContractError(OhmError):
    """A precondition of an operation was violated by the caller."""


class EstimationError(OhmError):
    """An estimator was given an empty or unusable sample."""


class HypothesisError(OhmError):
    """The requested direction does not satisfy the scaling-limit hypothesis."""


class PointLookupError(OhmError, KeyError):
    """A queried point is not part of the environment's point cloud."""


class ConfigParseError(OhmError):
    """The configuration file or an override is not well formed."""


class ConfigValidationError(OhmError):
    """The configuration is well formed but incomplete or out of range."""
