"""Shared exception types."""


class ShapeMismatchError(ValueError):
    """Raised when tensor shapes are incompatible for an operation."""


class ConfigurationError(ValueError):
    """Raised for invalid hyperparameter or config values."""


class DegenerateSliceError(ValueError):
    """Raised when a softmax slice is fully masked."""


class VocabularyError(KeyError):
    """Raised for token ids outside the vocabulary."""


class GenerationError(ValueError):
    """Raised when synthetic data constraints are infeasible."""


class CheckpointError(IOError):
    """Raised for malformed or mismatched checkpoint files."""
