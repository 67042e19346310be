"""Exception types raised across the package."""


class RankUnitRootError(Exception):
    """Base class for package errors."""


class DomainError(RankUnitRootError, ValueError):
    """Argument outside the mathematical domain of a function."""


class DegenerateSampleError(RankUnitRootError, ValueError):
    """Sample carries no variation (constant residuals, zero scale, ...)."""


class RankDeficiencyError(RankUnitRootError, ValueError):
    """Regression design matrix is singular."""


class IllConditionedError(RankUnitRootError, ArithmeticError):
    """Orthogonalization prefactor diverges; clamp the cross moment or use the AHRT."""


class NumericalError(RankUnitRootError, ArithmeticError):
    """Quadrature or root finding failed to converge."""


class ContractViolation(RankUnitRootError, ValueError):
    """Caller requested an operation outside its contract (e.g. asymmetric g for a signed test)."""


class ParameterError(RankUnitRootError, ValueError):
    """Invalid parameter combination (non-PSD covariance, bad grid, ...)."""
