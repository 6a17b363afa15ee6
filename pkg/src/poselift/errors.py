"""Exception types shared across the package.

Every error raised by poselift code derives from PoseliftError so callers
(and the CLI) can distinguish bad input data from numerical failures.
"""

from __future__ import annotations


class PoseliftError(Exception):
    """Base class for all poselift errors."""


class ConfigError(PoseliftError):
    """A configuration object violates one of its invariants."""


class ShapeMismatch(PoseliftError):
    """Array arguments have incompatible shapes."""

    def __init__(self, message: str, *shapes) -> None:
        if shapes:
            message = f"{message}: {' vs '.join(str(s) for s in shapes)}"
        super().__init__(message)


class DataError(PoseliftError):
    """Base class for errors caused by bad input data."""


class NonPositiveDepth(DataError):
    """A joint ended up at or behind the camera plane during projection."""

    def __init__(self, joint_index: int, depth: float) -> None:
        super().__init__(f"joint {joint_index} has non-positive depth {depth:g}")
        self.joint_index = joint_index
        self.depth = depth


class DegenerateSegment(DataError):
    """A body segment collapsed to (near) zero length in 2D."""

    def __init__(self, segment, length: float) -> None:
        super().__init__(f"segment {segment} has length {length:g} <= 1e-12")
        self.segment = segment
        self.length = length


class NoVisibleJoints(DataError):
    """Every joint of a pose is occluded; a crop window cannot be formed."""


class ParseError(DataError):
    """A sequence file line could not be parsed."""

    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class TopologyMismatch(DataError):
    """Data does not match the expected skeleton topology."""


class SequenceTooShort(DataError):
    """A sequence has fewer frames than the network's receptive field."""


class EmptyEvaluation(DataError):
    """An evaluation was requested over zero frames."""


class NumericalError(PoseliftError):
    """Base class for numerical failures during training/optimization."""


class NonFiniteGradient(NumericalError):
    """A gradient became NaN or infinite."""

    def __init__(self, name: str, context: str = "") -> None:
        msg = f"non-finite gradient for parameter '{name}'"
        if context:
            msg += f" ({context})"
        super().__init__(msg)
        self.name = name
