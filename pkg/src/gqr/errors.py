"""Exception hierarchy for gqr."""


class GqrError(Exception):
    """Base class for all errors raised by this package."""


class LabelError(GqrError, KeyError):
    """Unknown, duplicate or colliding mode label."""

    def __str__(self):
        return Exception.__str__(self)


class DomainError(GqrError, ValueError):
    """A parameter lies outside its physical domain."""


class DimensionError(GqrError, ValueError):
    pass


class PhysicalityError(GqrError, ValueError):
    """Covariance matrix violates the uncertainty relation."""


class StepTooLargeError(GqrError, ValueError):
    """Finite-difference stencil leaves the parameter domain."""


class NumericalFailure(GqrError, ArithmeticError):
    pass


class ContractError(GqrError, ValueError):
    """An argument violates a structural contract (e.g. a mixer acting on S)."""


class CutoffTooSmallError(GqrError):
    """Fock truncation leaks more probability than the allowed budget."""

    def __init__(self, message, leakage=None, suggested_cutoff=None):
        super().__init__(message)
        self.leakage = leakage
        self.suggested_cutoff = suggested_cutoff
