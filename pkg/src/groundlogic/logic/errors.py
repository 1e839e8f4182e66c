"""Exceptions raised by the logic engine."""

from __future__ import annotations


class LogicError(Exception):
    """Base class for every logic-engine failure."""


class ProgramSyntaxError(LogicError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.message = message
        self.line = line
        self.column = column


class UnsupportedConstruct(ProgramSyntaxError):
    """Negation, disjunction, cut or ``is`` arithmetic found in the source."""

    def __init__(self, construct: str, line: int, column: int):
        super().__init__(f"unsupported construct {construct!r}", line, column)
        self.construct = construct


class ProbabilityRange(ProgramSyntaxError):
    def __init__(self, value: float, line: int, column: int):
        super().__init__(f"probability {value} outside [0, 1]", line, column)
        self.value = value


class GroundingBlowup(LogicError):
    pass


class ComparisonTypeError(LogicError):
    pass


class UnknownPredicate(LogicError):
    pass


class OracleTooLarge(LogicError):
    pass


class ProofBlowup(LogicError):
    pass
