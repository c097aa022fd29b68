"""Exceptions raised by snowprobe."""

from typing import Optional, Tuple


class InputError(ValueError):
    """Malformed input: bad matrices, indices, files or space specs."""

    def __init__(self, message: str, offset: Optional[int] = None):
        """
        Parameters
        ----------
        message : str
        offset : Optional[int]
          Byte offset into the parsed text, when the error comes from a
          parser. Default is None.
        """
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class DomainError(ValueError):
    """A parameter lies outside its mathematical domain."""


class InvalidMetricError(ValueError):
    """The input violates the metric axioms."""

    def __init__(self, message: str, triple: Optional[Tuple[int, ...]] = None):
        """
        Parameters
        ----------
        message : str
        triple : Optional[Tuple[int, ...]]
          The offending point indices, when known.
        """
        super().__init__(message)
        self.triple = triple


class OracleViolationError(ValueError):
    """A placement oracle returned a point off its distance equations."""

    def __init__(self, message: str, step: object = None, residual=None):
        """
        Parameters
        ----------
        message : str
        step : object
          Where the construction failed (depth/index or interval).
        residual : Optional[float]
          Relative residual of the worst distance equation.
        """
        super().__init__(message)
        self.step = step
        self.residual = residual


class ResourceLimitError(ValueError):
    """A request exceeds the sizes the exhaustive algorithms accept."""
