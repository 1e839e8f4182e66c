"""Immutable syntax tree for the probabilistic logic subset."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

COMPARISON_OPS = ("<", "<=", ">", ">=", "==", "!=")
ORDERING_OPS = frozenset({"<", "<=", ">", ">="})


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    @property
    def anonymous(self) -> bool:
        return self.name == "_"

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Sym:
    """Bare lowercase identifier used as a constant."""

    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Str:
    value: str

    def __str__(self) -> str:
        escaped = (
            self.value.replace("\\", "\\\\")
            .replace('"', '\\"')
            .replace("\n", "\\n")
            .replace("\t", "\\t")
        )
        return f'"{escaped}"'


@dataclass(frozen=True, slots=True)
class Int:
    value: int

    def __post_init__(self):
        if not INT64_MIN <= self.value <= INT64_MAX:
            raise ValueError(f"integer {self.value} does not fit in 64 bits")

    def __str__(self) -> str:
        return str(self.value)


Term = Union[Var, Sym, Str, Int]
Constant = Union[Sym, Str, Int]


def is_ground(term: Term) -> bool:
    return not isinstance(term, Var)


def term_sort_key(term: Term) -> tuple:
    """Total order over terms: integers, then symbols, then strings."""
    if isinstance(term, Int):
        return (0, term.value, "")
    if isinstance(term, Sym):
        return (1, 0, term.name)
    if isinstance(term, Str):
        return (2, 0, term.value)
    return (3, 0, term.name)


@dataclass(frozen=True, slots=True)
class Atom:
    predicate: str
    args: tuple[Term, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def signature(self) -> tuple[str, int]:
        return (self.predicate, len(self.args))

    @property
    def ground(self) -> bool:
        return all(is_ground(a) for a in self.args)

    def variables(self) -> Iterator[Var]:
        for a in self.args:
            if isinstance(a, Var):
                yield a

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({', '.join(str(a) for a in self.args)})"


@dataclass(frozen=True, slots=True)
class Comparison:
    left: Term
    op: str
    right: Term

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise ValueError(f"unknown comparison operator {self.op!r}")

    def variables(self) -> Iterator[Var]:
        for t in (self.left, self.right):
            if isinstance(t, Var):
                yield t

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


BodyLiteral = Union[Atom, Comparison]


@dataclass(frozen=True, slots=True)
class ProbFact:
    probability: float
    atom: Atom

    def __str__(self) -> str:
        return f"{format_probability(self.probability)}::{self.atom}."


@dataclass(frozen=True, slots=True)
class Rule:
    head: Atom
    body: tuple[BodyLiteral, ...]

    @property
    def atoms(self) -> tuple[Atom, ...]:
        return tuple(lit for lit in self.body if isinstance(lit, Atom))

    @property
    def comparisons(self) -> tuple[Comparison, ...]:
        return tuple(lit for lit in self.body if isinstance(lit, Comparison))

    def __str__(self) -> str:
        return f"{self.head} :- {', '.join(str(lit) for lit in self.body)}."


@dataclass(frozen=True, slots=True)
class Program:
    facts: tuple[ProbFact, ...] = ()
    rules: tuple[Rule, ...] = ()
    queries: tuple[Atom, ...] = ()
    # Source order of clauses as ("fact"|"rule"|"query", index); not part of equality.
    order: tuple[tuple[str, int], ...] = field(default=(), compare=False, repr=False)

    def clauses(self) -> Iterator[ProbFact | Rule | Atom]:
        order = self.order or (
            [("fact", i) for i in range(len(self.facts))]
            + [("rule", i) for i in range(len(self.rules))]
            + [("query", i) for i in range(len(self.queries))]
        )
        for kind, i in order:
            if kind == "fact":
                yield self.facts[i]
            elif kind == "rule":
                yield self.rules[i]
            else:
                yield self.queries[i]

    def __str__(self) -> str:
        return format_program(self)


def format_probability(p: float) -> str:
    text = f"{p:.4f}"
    if float(text) == p:
        return text
    return repr(float(p))


def format_program(program: Program) -> str:
    """Serialize a program to source text (comments are not preserved)."""
    lines = []
    for clause in program.clauses():
        if isinstance(clause, Atom):
            lines.append(f"query({clause}).")
        else:
            lines.append(str(clause))
    return "\n".join(lines) + ("\n" if lines else "")
