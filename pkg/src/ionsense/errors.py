"""Exception types shared across the package."""


class IonsenseError(Exception):
    """Base class for all numerical and configuration failures."""


class NonDiagonalizable(IonsenseError):
    """Eigendecomposition rejected: an eigenvector pair is too ill-conditioned
    (the operator sits at or near an exceptional point)."""


class DimensionMismatch(IonsenseError):
    """Operand dimensions are incompatible."""


class DegenerateKernel(IonsenseError):
    """The kernel of the generator is not one-dimensional within tolerance."""


class InvalidParams(IonsenseError):
    """Model parameters violate their invariants."""


class UnknownPreset(IonsenseError):
    """Requested parameter preset does not exist."""


class InvalidEfficiency(IonsenseError):
    """Detection efficiency outside [0, 1]."""


class TruncationFailure(IonsenseError):
    """Waiting-time grid could not be extended far enough to capture the
    distribution's mass."""


class NegativeDensity(IonsenseError):
    """Spectral evaluation of the waiting-time density returned a value more
    negative than roundoff allows (broken decomposition)."""


class StepTooLarge(IonsenseError):
    """Finite-difference step failed its halving validation."""


class AnsatzInvalid(IonsenseError):
    """Two-exponential emission ansatz is outside its validity regime."""


class RegimeViolation(IonsenseError):
    """Closed-form approximation evaluated outside its derivation regime."""


class ZeroState(IonsenseError):
    """State vector has (numerically) zero norm."""


class EmptyRecords(IonsenseError):
    """No emission records were supplied."""


class InsufficientRepeats(IonsenseError):
    """Too few repeated fits to form estimator statistics."""
