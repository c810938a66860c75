"""Exception types raised across the package."""


class DuseError(Exception):
    pass


class DimensionError(DuseError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(DuseError, ValueError):
    """A configuration value violates a constraint."""


class CapacityError(DuseError, ValueError):
    """A token sequence does not fit the encoder's maximum length."""


class ContractError(DuseError, ValueError):
    """A call-site precondition was violated (non-scalar loss, bad label, ...)."""


class NumericalError(DuseError, ArithmeticError):
    """A computation produced a non-finite value."""
