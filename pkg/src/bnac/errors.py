"""Exception types shared across the package."""


class BnacError(Exception):
    """Base class for all package errors."""

    category = "error"


class ModelError(BnacError):
    """A network or evidence object violates a structural invariant."""

    category = "invalid-network"


class EnumerationBoundError(BnacError):
    """An exhaustive oracle was asked to enumerate more states than allowed."""

    category = "enumeration-bound"


class InconsistentEvidenceError(BnacError):
    """Evidence has probability zero, so conditional queries are undefined."""

    category = "inconsistent-evidence"


class UnsupportedQueryError(BnacError):
    """Query references a variable or form the compiled circuit cannot serve."""

    category = "unsupported-query"


class CompileBudgetError(BnacError):
    """Compilation exceeded its node/edge budget and was aborted cleanly."""

    category = "budget-exceeded"


class ParseError(BnacError):
    """Text input could not be parsed; carries line and column positions."""

    category = "parse-error"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" at line {line}"
            if column is not None:
                where += f", column {column}"
        super().__init__(f"{message}{where}")
