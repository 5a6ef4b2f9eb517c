"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, ArtifactError -> 3,
ContractError -> 4. Everything else is a plain crash.
"""


class AdmnError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(AdmnError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(AdmnError):
    """A configuration value is missing, malformed, or inconsistent."""


class BudgetError(AdmnError):
    """A layer budget is infeasible or cannot be exhausted exactly."""


class ContractError(AdmnError):
    """A caller or invariant contract was violated."""


class RangeError(AdmnError):
    """A scalar argument lies outside its documented domain."""


class NumericError(AdmnError):
    """A forward computation produced a non-finite value."""


class TensorFormatError(AdmnError):
    """A tensor file has the wrong magic bytes or version."""


class ArtifactError(AdmnError):
    """A required on-disk artifact (dataset, checkpoint) is missing."""
