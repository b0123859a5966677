"""Shared exception types."""


class DimensionError(ValueError):
    """Operands have incompatible or unsupported dimensions."""


class ValidationError(ValueError):
    """Input violates a declared invariant (hermiticity, isometry, normalization, ...)."""


class InfeasibleError(ValueError):
    """Requested object lies outside the feasible set."""


class StepSizeError(RuntimeError):
    """Integration step rejected because the proposed state collapsed; dt is too large."""
