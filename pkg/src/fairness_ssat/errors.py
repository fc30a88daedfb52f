"""Exception hierarchy shared by the solver, encoders, data layer and CLI."""

from typing import Optional


class FairnessSsatError(Exception):
    """Base class for every error raised by fairness_ssat."""


class StructuralError(FairnessSsatError, ValueError):
    """A formula, model or feature map violates a structural invariant."""


class InputValidationError(FairnessSsatError, ValueError):
    """An input value is out of range, missing or of the wrong kind."""


class ParseError(FairnessSsatError, ValueError):
    """A text input could not be parsed.

    Attributes:
        line: 1-based line number of the offending token, if known
        column: 1-based column number of the offending token, if known
        source: file name or other label for the parsed text
    """

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[int] = None,
        source: Optional[str] = None,
    ):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(str(self))

    @classmethod
    def from_decode(cls, data: bytes, error: UnicodeDecodeError, source: str) -> "ParseError":
        """Locate an invalid UTF-8 byte in ``data`` by line and column."""
        line = data.count(b"\n", 0, error.start) + 1
        column = error.start - (data.rfind(b"\n", 0, error.start) + 1) + 1
        return cls(f"invalid UTF-8 byte 0x{data[error.start]:02x}", line, column, source)

    def __str__(self) -> str:
        location = self.source or "<input>"
        if self.line is not None:
            location += f":{self.line}"
            if self.column is not None:
                location += f":{self.column}"
        return f"{location}: {self.message}"


class EmptyGroupError(FairnessSsatError):
    """No dataset rows fall into a conditioning context."""

    def __init__(self, group: str):
        self.group = group
        super().__init__(f"No rows in conditioning context {group}")


class ContractViolation(FairnessSsatError):
    """A metric precondition or a verification cross-check failed."""
