"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented invariant or precondition."""


class CorruptFileError(IOError):
    """A snapshot file pair is internally inconsistent."""


class RankDeficiencyError(ValueError):
    """The requested truncation rank exceeds the numerical rank of the data."""


class DivergentBasisError(FloatingPointError):
    """exp(alpha * t) would overflow for some eigenvalue/time pair."""


class InitializationError(ValueError):
    """No eigenvalue initial guess could be built; pass alpha0 explicitly."""
