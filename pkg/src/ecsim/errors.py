"""Exception hierarchy shared across the package."""


class EcsimError(Exception):
    """Base class for every error raised by ecsim."""


class DomainError(EcsimError, ValueError):
    """A state or parameter lies outside its physical domain."""


class DegenerateParametersError(DomainError):
    """The requested closed form is undefined for these parameters."""


class NumericalAbort(EcsimError):
    """A numerical integration left its region of validity."""


class RiccatiBlowUpError(NumericalAbort):
    """A Riccati integration escaped (finite-time blow-up or step too large).

    Attributes
    ----------
    time : float
        Time at which the escape was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NormCollapseError(NumericalAbort):
    """The unnormalized wavefunction norm dropped too far in one step."""


class GridCoverageError(NumericalAbort):
    """The spatial grid does not resolve or contain the wavefunction."""


class SingularCostError(EcsimError, ValueError):
    """The control-cost matrix E is not invertible."""


class GridMismatchError(EcsimError, ValueError):
    """Two time grids that must coincide do not."""


class ConfigError(EcsimError):
    """A scenario configuration failed validation.

    Attributes
    ----------
    key : str
        Dotted path of the offending key.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class ConfigParseError(EcsimError):
    """A configuration file could not be read as a JSON document."""
