"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`MosFuseError`; the CLI
maps the three families below onto its exit codes.
"""

from __future__ import annotations


class MosFuseError(Exception):
    """Base class for all toolkit errors."""


class DataError(MosFuseError, ValueError):
    """Input data violates a contract (exit code 4)."""


class NumericalError(MosFuseError, ArithmeticError):
    """A fit or solve could not produce finite parameters (exit code 5)."""


class FileFormatError(DataError):
    """A file could not be parsed."""


# -- data errors ------------------------------------------------------------


def _preview(ids, limit=5) -> str:
    shown = ", ".join(ids[:limit])
    return f"{len(ids)} ({shown}{', ...' if len(ids) > limit else ''})"


class MissingUtterance(DataError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"utterances missing from scores: {_preview(self.ids)}")


class ExtraUtterance(DataError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"utterances not present in dataset: {_preview(self.ids)}")


class DuplicateUtterance(DataError):
    def __init__(self, utterance_id, line=None):
        self.utterance_id = utterance_id
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate utterance id {utterance_id!r}{where}")


class LengthMismatch(DataError):
    pass


class EmptyInput(DataError):
    pass


class UnlabeledDataset(DataError):
    pass


class NonFiniteScore(DataError):
    pass


class ColumnMismatch(DataError):
    pass


class MissingAux(DataError):
    pass


class EmptyCandidates(DataError):
    pass


class InvalidConfig(DataError):
    pass


class SubsystemMismatch(ColumnMismatch):
    pass


class InsufficientLabeledData(DataError):
    pass


class ConstantInput(DataError):
    """A correlation is undefined because one input has zero variance."""


class ParseError(FileFormatError):
    def __init__(self, line, reason, path=None):
        self.line = line
        self.reason = reason
        prefix = f"{path}:" if path is not None else "line "
        super().__init__(f"{prefix}{line}: {reason}")


class NonFiniteValue(ParseError):
    pass


class RaggedRow(ParseError):
    pass


class OutOfRangeMos(ParseError):
    pass


class VersionMismatch(FileFormatError):
    pass


class CorruptModel(FileFormatError):
    def __init__(self, field, reason=""):
        self.field = field
        super().__init__(f"corrupt model field {field!r}" + (f": {reason}" if reason else ""))


# -- numerical errors ---------------------------------------------------------


class SingularSystem(NumericalError):
    pass


class NonFiniteGradient(NumericalError):
    pass
