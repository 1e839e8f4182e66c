"""Static checks run before a program is grounded."""

from __future__ import annotations

from dataclasses import dataclass

from .terms import ORDERING_OPS, Int, Program, Var


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def validate_program(program: Program) -> list[Violation]:
    """Return every violation found; an empty list means the program is evaluable."""
    violations: list[Violation] = []

    arities: dict[str, int] = {}

    def check_arity(predicate: str, arity: int, where: str):
        known = arities.setdefault(predicate, arity)
        if known != arity:
            violations.append(
                Violation(
                    "ArityMismatch",
                    f"{predicate} used with arity {arity} in {where}, earlier with arity {known}",
                )
            )

    for fact in program.facts:
        check_arity(fact.atom.predicate, fact.atom.arity, f"fact {fact.atom}")
        if not fact.atom.ground:
            violations.append(Violation("NonGroundFact", f"fact {fact.atom} contains variables"))

    fact_predicates = {f.atom.predicate for f in program.facts}
    for rule in program.rules:
        check_arity(rule.head.predicate, rule.head.arity, f"head of {rule}")
        for atom in rule.atoms:
            check_arity(atom.predicate, atom.arity, f"body of {rule}")
        if rule.head.predicate in fact_predicates:
            violations.append(
                Violation(
                    "IntensionalFact",
                    f"predicate {rule.head.predicate} is defined by both facts and rules",
                )
            )
        bound = {v.name for atom in rule.atoms for v in atom.variables() if not v.anonymous}
        for v in rule.head.variables():
            if v.anonymous:
                violations.append(Violation("UnsafeRule", f"anonymous variable in head of {rule}"))
            elif v.name not in bound:
                violations.append(
                    Violation("UnsafeRule", f"head variable {v.name} unbound in {rule}")
                )
        for cmp in rule.comparisons:
            for v in cmp.variables():
                if v.anonymous or v.name not in bound:
                    violations.append(
                        Violation(
                            "UnsafeRule",
                            f"comparison variable {v.name} unbound in {rule}",
                        )
                    )
            if cmp.op in ORDERING_OPS:
                for side in (cmp.left, cmp.right):
                    if not isinstance(side, (Int, Var)):
                        violations.append(
                            Violation(
                                "ComparisonType",
                                f"ordering comparison {cmp} needs integer operands",
                            )
                        )

    for query in program.queries:
        check_arity(query.predicate, query.arity, f"query {query}")
    if not program.queries:
        violations.append(Violation("MissingQuery", "program has no query directive"))
    return violations
