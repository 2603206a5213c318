"""Exception types shared across the package.

Contract violations (bad shapes, bad configs, unusable inputs) derive from
ContractError and map to CLI exit code 2; non-finite numerics map to exit 1.
"""


class CsdkitError(Exception):
    """Base class for all csdkit errors."""


class ContractError(CsdkitError):
    """A call violated an interface contract."""


class ShapeError(ContractError):
    """Operand shapes or dimensions are incompatible."""


class ConfigError(ContractError):
    """A configuration value is invalid or inconsistent."""


class InputError(ContractError):
    """External input (file, format, sample rate) is unusable."""


class NumericError(CsdkitError):
    """A computation produced non-finite values."""
