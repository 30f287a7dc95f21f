"""Exception hierarchy shared by every module."""


class BRCAError(Exception):
    """Base class for all package errors."""


class InvalidArgument(BRCAError, ValueError):
    pass


class ModelConfigError(BRCAError):
    """Model parameters are inconsistent or fail a required condition."""


class ConditionError(ModelConfigError):
    """Stationarity/moment conditions could not be confirmed."""


class NotInvertibleError(BRCAError):
    pass


class ConvergenceError(BRCAError):
    pass


class UnsupportedError(BRCAError):
    pass


class DegenerateProbeError(BRCAError):
    pass


class ConfigError(BRCAError):
    """A configuration file or override is malformed or names an unknown key."""
