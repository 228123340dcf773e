"""Exception hierarchy shared by all modules."""


class CwceLabError(Exception):
    pass


class ParameterError(CwceLabError, ValueError):
    """Invalid model parameters or arguments."""


class DimensionError(CwceLabError, ValueError):
    """Array or regime lengths do not line up."""


class UnsupportedError(CwceLabError, ValueError):
    """The requested combination of model kind and operation is not available."""


class SingularityError(CwceLabError, ArithmeticError):
    """A covariance block stayed singular after the jitter ladder."""


class IdentifiabilityError(CwceLabError, ValueError):
    """Design matrix cannot identify the requested model."""


class NotConvergedError(CwceLabError, RuntimeError):
    """A fit did not converge and cannot be used downstream."""


class ConfigError(CwceLabError, ValueError):
    """Malformed or unknown experiment configuration."""
