"""Semi-naive bottom-up grounding."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ComparisonTypeError, GroundingBlowup, LogicError
from .terms import (
    ORDERING_OPS,
    Atom,
    Comparison,
    Int,
    ProbFact,
    Program,
    Rule,
    Term,
    Var,
    term_sort_key,
)

DEFAULT_GROUNDING_CAP = 100_000

Bindings = Mapping[str, Term]


@dataclass(frozen=True, slots=True)
class GroundRule:
    head: Atom
    body: tuple[Atom, ...]

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(map(str, self.body))}."


@dataclass(frozen=True)
class GroundProgram:
    facts: tuple[ProbFact, ...]
    rules: tuple[GroundRule, ...]
    queries: tuple[Atom, ...]
    # Ground atom -> indices into ``facts`` (an atom may be labelled more than once).
    fact_index: Mapping[Atom, tuple[int, ...]] = field(repr=False)
    atoms: frozenset[Atom] = field(repr=False)
    defined: frozenset[tuple[str, int]] = field(repr=False)
    by_head: Mapping[Atom, tuple[GroundRule, ...]] = field(repr=False)

    def rules_for(self, atom: Atom) -> tuple[GroundRule, ...]:
        return self.by_head.get(atom, ())

    def matching(self, pattern: Atom) -> list[Atom]:
        """Derivable ground atoms unifying with ``pattern``, in sorted order."""
        found = [a for a in self.atoms if match(pattern, a, {}) is not None]
        return sorted(found, key=_atom_key)


def _atom_key(atom: Atom):
    return (atom.predicate, tuple(term_sort_key(t) for t in atom.args))


def match(pattern: Atom, ground: Atom, bindings: Bindings) -> dict[str, Term] | None:
    """Extend ``bindings`` so that ``pattern`` equals ``ground``; None when impossible."""
    if pattern.predicate != ground.predicate or len(pattern.args) != len(ground.args):
        return None
    out = dict(bindings)
    for p, g in zip(pattern.args, ground.args):
        if isinstance(p, Var):
            if p.anonymous:
                continue
            bound = out.get(p.name)
            if bound is None:
                out[p.name] = g
            elif bound != g:
                return None
        elif p != g:
            return None
    return out


def substitute(atom: Atom, bindings: Bindings) -> Atom:
    args = []
    for a in atom.args:
        if isinstance(a, Var):
            if a.anonymous or a.name not in bindings:
                raise LogicError(f"variable {a.name} unbound while instantiating {atom}")
            args.append(bindings[a.name])
        else:
            args.append(a)
    return Atom(atom.predicate, tuple(args))


def _resolve(term: Term, bindings: Bindings) -> Term:
    if isinstance(term, Var):
        return bindings[term.name]
    return term


def evaluate_comparison(cmp: Comparison, bindings: Bindings) -> bool:
    left, right = _resolve(cmp.left, bindings), _resolve(cmp.right, bindings)
    if cmp.op == "==":
        return left == right
    if cmp.op == "!=":
        return left != right
    if not (isinstance(left, Int) and isinstance(right, Int)):
        raise ComparisonTypeError(f"{cmp} compares non-integers {left} and {right}")
    a, b = left.value, right.value
    if cmp.op == "<":
        return a < b
    if cmp.op == "<=":
        return a <= b
    if cmp.op == ">":
        return a > b
    assert cmp.op in ORDERING_OPS
    return a >= b


class _Relations:
    def __init__(self):
        self.by_pred: dict[tuple[str, int], list[Atom]] = defaultdict(list)
        self.members: set[Atom] = set()

    def add(self, atom: Atom) -> bool:
        if atom in self.members:
            return False
        self.members.add(atom)
        self.by_pred[atom.signature].append(atom)
        return True

    def get(self, signature: tuple[str, int]) -> list[Atom]:
        return self.by_pred.get(signature, [])

    def copy(self) -> "_Relations":
        other = _Relations()
        for sig, atoms in self.by_pred.items():
            other.by_pred[sig] = list(atoms)
        other.members = set(self.members)
        return other


def _comparison_schedule(rule: Rule) -> list[list[Comparison]]:
    """For each body-atom position, the comparisons that become fully bound there."""
    atoms = rule.atoms
    schedule: list[list[Comparison]] = [[] for _ in range(max(len(atoms), 1))]
    bound: set[str] = set()
    first_bound: dict[str, int] = {}
    for i, atom in enumerate(atoms):
        for v in atom.variables():
            if not v.anonymous and v.name not in bound:
                bound.add(v.name)
                first_bound[v.name] = i
    for cmp in rule.comparisons:
        position = max((first_bound.get(v.name, len(atoms)) for v in cmp.variables()), default=0)
        schedule[min(position, len(schedule) - 1)].append(cmp)
    return schedule


def ground_program(program: Program, cap: int = DEFAULT_GROUNDING_CAP) -> GroundProgram:
    fact_index: dict[Atom, list[int]] = defaultdict(list)
    for i, fact in enumerate(program.facts):
        if not fact.atom.ground:
            raise LogicError(f"fact {fact.atom} is not ground")
        fact_index[fact.atom].append(i)

    instances: dict[GroundRule, None] = {}
    everything = _Relations()
    delta = _Relations()
    for atom in fact_index:
        delta.add(atom)
    old = _Relations()
    for atom in fact_index:
        everything.add(atom)
    schedules = [_comparison_schedule(rule) for rule in program.rules]

    def emit(rule: Rule, bindings: Bindings, body: tuple[Atom, ...], fresh: set[Atom]):
        instance = GroundRule(substitute(rule.head, bindings), body)
        if instance not in instances:
            instances[instance] = None
            if len(instances) > cap:
                raise GroundingBlowup(f"more than {cap} ground rule instances")
            if instance.head not in everything.members:
                fresh.add(instance.head)

    first_round = True
    while True:
        fresh: set[Atom] = set()
        for rule, schedule in zip(program.rules, schedules):
            atoms = rule.atoms
            if not atoms:
                if first_round and all(evaluate_comparison(c, {}) for c in rule.comparisons):
                    emit(rule, {}, (), fresh)
                continue
            for pivot in range(len(atoms)):
                sources = [old if j < pivot else delta if j == pivot else everything
                           for j in range(len(atoms))]
                for bindings, body in _join(atoms, sources, schedule, 0, {}, ()):
                    emit(rule, bindings, body, fresh)
        first_round = False
        if not fresh:
            break
        old = everything.copy()
        delta = _Relations()
        for atom in sorted(fresh, key=_atom_key):
            delta.add(atom)
            everything.add(atom)

    by_head: dict[Atom, list[GroundRule]] = defaultdict(list)
    for instance in instances:
        by_head[instance.head].append(instance)
    defined = {a.signature for a in fact_index} | {r.head.signature for r in program.rules}
    return GroundProgram(
        facts=program.facts,
        rules=tuple(instances),
        queries=program.queries,
        fact_index={a: tuple(ix) for a, ix in fact_index.items()},
        atoms=frozenset(everything.members),
        defined=frozenset(defined),
        by_head={head: tuple(rs) for head, rs in by_head.items()},
    )


def _join(atoms, sources, schedule, i, bindings, body):
    if i == len(atoms):
        yield bindings, body
        return
    for candidate in sources[i].get(atoms[i].signature):
        extended = match(atoms[i], candidate, bindings)
        if extended is None:
            continue
        if all(evaluate_comparison(c, extended) for c in schedule[i]):
            yield from _join(atoms, sources, schedule, i + 1, extended, body + (candidate,))
