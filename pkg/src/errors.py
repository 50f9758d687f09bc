"""
Error Hierarchy
Exceptions shared by every minet-ctr module. Each one also derives from the
closest builtin so callers may catch either the specific or the generic type.
"""

from typing import Optional


class MiNetError(Exception):
    """Base class for all minet-ctr errors"""


class DimensionError(MiNetError, ValueError):
    """Operand shapes do not agree"""


class EmptySequenceError(MiNetError, ValueError):
    """Softmax requested over zero scores"""


class ArgumentError(MiNetError, ValueError):
    """Invalid argument value"""


class GradientStateError(MiNetError, RuntimeError):
    """Optimizer step requested on a tensor with no gradient"""


class ParseError(MiNetError, ValueError):
    """Malformed input record"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.message = message
        self.line_number = line_number
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}:"
        if line_number is not None:
            location += f"line {line_number}: "
        elif location:
            location += " "
        super().__init__(f"{location}{message}")


class FeatureIndexError(MiNetError, IndexError):
    """Feature id outside the vocabulary"""


class SchemaError(MiNetError, ValueError):
    """Instance field layout does not match the representation spec"""


class DomainError(MiNetError, ValueError):
    """Instance routed to the tower of the other domain"""


class ConfigurationError(MiNetError, ValueError):
    """Invalid or inconsistent configuration"""


class UndefinedMetricError(MiNetError, ValueError):
    """Metric is undefined for the given input"""


class CheckpointError(MiNetError, ValueError):
    """Checkpoint container is unreadable or incompatible"""
