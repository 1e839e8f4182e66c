from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .grounding import DEFAULT_GROUNDING_CAP, ground_program, match
from .inference import probability_of, prove
from .terms import Atom, Program, Str, Term, term_sort_key

DEFAULT_CANDIDATE_FLOOR = 1e-6


@dataclass(frozen=True)
class QueryAnswer:
    atom: Atom
    binding: Mapping[str, Term]
    probability: float

    @property
    def entity_id(self) -> str | None:
        """The bound value when the binding is a single string constant."""
        if len(self.binding) != 1:
            return None
        (term,) = self.binding.values()
        return term.value if isinstance(term, Str) else None


def _entity_confidence(program: Program) -> dict[Term, float]:
    conf: dict[Term, float] = {}
    for fact in program.facts:
        atom = fact.atom
        if atom.predicate == "entity" and atom.args:
            key = atom.args[0]
            conf[key] = max(conf.get(key, 0.0), fact.probability)
    return conf


def answer_query(
    program: Program,
    candidate_floor: float = DEFAULT_CANDIDATE_FLOOR,
    grounding_cap: int = DEFAULT_GROUNDING_CAP,
) -> list[QueryAnswer]:
    """Rank every derivable instantiation of each query directive.

    Answers are sorted by probability (descending); ties go to the higher
    detector confidence of the bound entity, then to the lexicographically
    smaller binding.  Answers for several queries are concatenated in
    directive order.
    """
    g = ground_program(program, cap=grounding_cap)
    confidence = _entity_confidence(program)
    results: list[QueryAnswer] = []
    for query in program.queries:
        if query.signature not in g.defined:
            continue
        answers = []
        for atom in g.matching(query):
            binding = match(query, atom, {})
            p = probability_of(prove(g, atom), program.facts)
            if p < candidate_floor:
                continue
            answers.append(QueryAnswer(atom, dict(sorted(binding.items())), p))

        def key(ans: QueryAnswer):
            conf = 0.0
            if len(ans.binding) == 1:
                conf = confidence.get(next(iter(ans.binding.values())), 0.0)
            binding_key = tuple((k, term_sort_key(v)) for k, v in ans.binding.items())
            return (-round(ans.probability, 12), -conf, binding_key)

        results.extend(sorted(answers, key=key))
    return results
