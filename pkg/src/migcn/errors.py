"""Exception types raised across the package."""


class MIGCNError(Exception):
    """Base class for all package errors."""


class DimensionError(MIGCNError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(MIGCNError, ValueError):
    """An operation is undefined for the given input (e.g. a fully masked softmax row)."""


class ContractError(MIGCNError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(MIGCNError, ValueError):
    """Invalid hyperparameter or run configuration."""


class InputError(MIGCNError, ValueError):
    """Invalid data handed to a model-level operation."""


class LoadError(MIGCNError, ValueError):
    """A file on disk is missing or malformed."""


class TrainingError(MIGCNError, RuntimeError):
    """Training diverged (non-finite loss)."""
