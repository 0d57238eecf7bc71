"""Exception hierarchy shared by all modules."""


class NCPickError(Exception):
    """Base class for library errors."""


class ShapeError(NCPickError, ValueError):
    """Matrix blocks do not conform to the correspondence model."""


class DegenerateCorrespondenceError(NCPickError, ValueError):
    pass


class CommutantError(NCPickError, ValueError):
    """A matrix that should lie in the commutant has off-vertex leakage."""

    def __init__(self, message, leakage):
        super().__init__(message)
        self.leakage = leakage


class NotHermitianError(NCPickError, ValueError):
    pass


class NotContractiveError(NCPickError, ValueError):
    """Point norm is not strictly below one."""


class IndefiniteError(NCPickError, ValueError):
    """A matrix required to be positive semidefinite is not."""

    def __init__(self, message, verdict):
        super().__init__(message)
        self.verdict = verdict


class InfeasibleError(IndefiniteError):
    """The Pick matrix is not positive semidefinite."""


class LevelCapError(NCPickError, MemoryError):
    """A truncation level would exceed the configured storage cap."""

    def __init__(self, message, required_level, cap):
        super().__init__(message)
        self.required_level = required_level
        self.cap = cap


class ResidualError(NCPickError, ArithmeticError):
    """A verified identity failed beyond tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class NonCentralError(NCPickError, ValueError):
    pass
