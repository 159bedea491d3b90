"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes: configuration problems -> 2,
file/format problems -> 3, model validation problems -> 4.
"""


class QuantevoError(Exception):
    """Base class for all package errors."""


class DimensionError(QuantevoError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(QuantevoError):
    """A parameter is outside its documented range."""


class ModelValidationError(QuantevoError):
    """A model violates its structural invariants (names, shapes, layout)."""


class ContainerFormatError(QuantevoError):
    """A model container file is corrupt or not a container at all."""


class TruncatedBlobError(QuantevoError):
    """The weight payload ends before a declared segment does."""


class DatasetFormatError(QuantevoError):
    """An IDX or CSV dataset file cannot be parsed."""


class EvaluationError(QuantevoError):
    """An evaluator raised; carries the layer context it was scoring."""
