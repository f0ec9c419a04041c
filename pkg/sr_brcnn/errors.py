"""
Module: sr_brcnn.errors
Purpose: Exception hierarchy shared by the library and the CLI

The CLI maps these onto exit codes: data and schema problems exit with 1,
numeric failures (non-finite values, failed gradient checks) exit with 3.
"""

from pathlib import Path
from typing import Optional, Sequence, Union


class SrBrcnnError(Exception):
    """Base class for all SR-BRCNN errors."""

    exit_code = 1


class DataError(SrBrcnnError, ValueError):
    """
    Malformed or inconsistent input data.

    Attributes:
        path: Source file, if known
        line: 1-based line number within the source, if known
    """

    def __init__(
        self,
        message: str,
        path: Optional[Union[str, Path]] = None,
        line: Optional[int] = None,
    ):
        self.message = message
        self.path = str(path) if path is not None else None
        self.line = line
        super().__init__(self._render())

    def _render(self) -> str:
        if self.path and self.line is not None:
            return f"{self.path}:{self.line}: {self.message}"
        if self.path:
            return f"{self.path}: {self.message}"
        if self.line is not None:
            return f"line {self.line}: {self.message}"
        return self.message

    def with_path(self, path: Union[str, Path]) -> "DataError":
        """Return a copy of this error that names the source file."""
        return type(self)(self.message, path=path, line=self.line)


class ConlluParseError(DataError):
    """CoNLL-U text that cannot be read as dependency trees."""


class InstanceError(DataError):
    """Relation instance record that does not fit its sentence or label set."""


class DegeneratePairError(DataError):
    """Both entities resolve to the same token, so no path exists."""


class EmbeddingFormatError(DataError):
    """Word-vector file that is not valid word2vec text format."""


class SchemaError(SrBrcnnError):
    """Checkpoint or label schema that does not match what the caller expects."""


class ShapeError(SrBrcnnError, ValueError):
    """Tensor shapes that do not conform for the requested operation."""

    def __init__(self, op: str, *shapes: Sequence[int], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        rendered = " vs ".join(str(s) for s in self.shapes)
        message = f"{op}: shape mismatch {rendered}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class NumericError(SrBrcnnError, ArithmeticError):
    """Non-finite values or failed gradient checks."""

    exit_code = 3
