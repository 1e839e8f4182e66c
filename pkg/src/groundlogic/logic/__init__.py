"""Probabilistic logic engine: parsing, grounding and exact inference."""

from .errors import (
    ComparisonTypeError,
    GroundingBlowup,
    LogicError,
    OracleTooLarge,
    ProbabilityRange,
    ProgramSyntaxError,
    ProofBlowup,
    UnknownPredicate,
    UnsupportedConstruct,
)
from .grounding import GroundProgram, GroundRule, ground_program
from .inference import ProofDNF, oracle_probability, probability_of, prove
from .parser import parse_program, parse_rule
from .query import QueryAnswer, answer_query
from .terms import (
    Atom,
    Comparison,
    Int,
    ProbFact,
    Program,
    Rule,
    Str,
    Sym,
    Var,
    format_probability,
    format_program,
)
from .validate import Violation, validate_program

__all__ = [
    "Atom",
    "Comparison",
    "ComparisonTypeError",
    "GroundProgram",
    "GroundRule",
    "GroundingBlowup",
    "Int",
    "LogicError",
    "OracleTooLarge",
    "ProbFact",
    "ProbabilityRange",
    "Program",
    "ProgramSyntaxError",
    "ProofBlowup",
    "ProofDNF",
    "QueryAnswer",
    "Rule",
    "Str",
    "Sym",
    "UnknownPredicate",
    "UnsupportedConstruct",
    "Var",
    "Violation",
    "answer_query",
    "format_probability",
    "format_program",
    "ground_program",
    "oracle_probability",
    "parse_program",
    "parse_rule",
    "probability_of",
    "prove",
    "validate_program",
]
