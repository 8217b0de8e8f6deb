"""Exception types raised across the package."""


class StructureError(ValueError):
    """Invalid combinatorial cell structure or harmonic structure."""


class InfeasibleCoefficientsError(ValueError):
    """Coefficients violate the coercivity requirements of the form.

    Parameters
    ----------
    message : str
        Human readable explanation.
    constants : dict, optional
        The offending constants (for example the Hardy constants and
        ``lambda0``), kept for programmatic inspection.
    """

    def __init__(self, message, constants=None):
        super().__init__(message)
        self.constants = dict(constants or {})


class HardyLevelError(ValueError):
    """No admissible cell level exists for the requested Hardy estimate."""

    def __init__(self, message, required_level=None):
        super().__init__(message)
        self.required_level = required_level


class ConvergenceError(RuntimeError):
    """An iterative procedure did not reach its tolerance."""


class BoundViolationError(AssertionError):
    """A runtime check of an a priori bound failed."""
