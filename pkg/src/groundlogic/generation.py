"""Turning perception output and a generated rule into an evaluable program.

Entities become ``entity/6`` facts, the language model's rule is extracted and
checked, the relation and attribute constants the rule mentions are scored by
the backends, and everything is assembled into one program text.
"""

from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from PIL import Image

from .backends import BackendSuite, CapabilityError, Detection
from .logic import (
    Atom,
    LogicError,
    ProbFact,
    Program,
    ProgramSyntaxError,
    Rule,
    Str,
    UnsupportedConstruct,
    Var,
    parse_program,
    parse_rule,
    validate_program,
)
from .spatial import (
    DEFAULT_STEEPNESS,
    DEPTH_RELATIONS,
    GEOMETRIC_RELATIONS,
    BoundingBox,
    DepthField,
    depth_relation,
    entity_depth,
    geometric_relation,
    normalize_relation,
)

PROB_FLOOR = 0.0001
PROB_CEIL = 0.9999

ENTITY_HEADER = "% entity(ID: str, category: str, x1: int, y1: int, x2: int, y2: int)."
RELATION_HEADER = "% relation(entity_a: str, entity_b: str, value: str)."
ATTRIBUTE_HEADER = "% attribute(entity: str, value: str)."
TARGET_QUERY = "query(target(ID))."

ALLOWED_BODY = {("entity", 6), ("relation", 3), ("attribute", 2)}


class GenerationError(Exception):
    pass


class EmptyOutput(GenerationError):
    pass


class RuleRejected(GenerationError):
    def __init__(self, reasons: Sequence[str]):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))


class MaterializationError(GenerationError):
    """A backend failed while scoring a relation or attribute; ``cause`` keeps the original."""

    def __init__(self, context: str, cause: CapabilityError):
        self.context, self.cause = context, cause
        super().__init__(f"{context}: {cause}")


@dataclass(frozen=True)
class EntityRecord:
    id: str
    category: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not self.category:
            raise ValueError("entity category must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


def entity_records(detections: Iterable[Detection]) -> list[EntityRecord]:
    """Assign ``{category}_{k}`` ids, k counting detections per category."""
    counts: dict[str, int] = {}
    out = []
    for det in detections:
        k = counts.get(det.category, 0)
        counts[det.category] = k + 1
        out.append(EntityRecord(f"{det.category}_{k}", det.category, det.box, det.confidence))
    return out


@dataclass(frozen=True)
class SymbolRequirements:
    relations: tuple[str, ...] = ()
    attributes: tuple[str, ...] = ()
    # Body atoms whose phrase position held a variable; nothing is materialized for them.
    variable_positions: tuple[str, ...] = ()


@dataclass(frozen=True)
class GenerationConfig:
    max_pairs: int = 30
    geometric_relations: frozenset[str] = GEOMETRIC_RELATIONS
    depth_relations: frozenset[str] = DEPTH_RELATIONS
    steepness: float = DEFAULT_STEEPNESS
    workers: int = 1


def clamp_fact_probability(p: float) -> float:
    return round(min(PROB_CEIL, max(PROB_FLOOR, p)), 4)


def emit_entity_facts(entities: Sequence[EntityRecord]) -> str:
    if not entities:
        raise ValueError("no entities to emit")
    lines = [ENTITY_HEADER]
    for e in entities:
        b = e.box
        p = clamp_fact_probability(e.confidence)
        lines.append(
            f"{p:.4f}::entity({Str(e.id)}, {Str(e.category)}, {b.x1}, {b.y1}, {b.x2}, {b.y2})."
        )
    return "\n".join(lines) + "\n"


_FENCE = re.compile(r"```[^\n`]*\n?(.*?)```", re.DOTALL)


def extract_rule_block(llm_text: str) -> str:
    m = _FENCE.search(llm_text)
    body = (m.group(1) if m else llm_text).strip()
    if not body:
        raise EmptyOutput("the model returned no code")
    return body


def validate_rule(rule_text: str, known_categories: Sequence[str]) -> Rule:
    """Parse and check a generated rule; every problem found is reported at once."""
    try:
        rule = parse_rule(rule_text)
    except UnsupportedConstruct as exc:
        raise RuleRejected([f"UnsupportedConstruct: {exc.construct} is not supported"]) from exc
    except ProgramSyntaxError as exc:
        raise RuleRejected([f"SyntaxError: {exc}"]) from exc

    reasons = []
    if rule.head.signature != ("target", 1):
        reasons.append(f"WrongHead: the head must be target(ID), got {rule.head}")
    known = {c.lower() for c in known_categories}
    for atom in rule.atoms:
        if atom.signature not in ALLOWED_BODY:
            reasons.append(
                f"UnknownPredicate: {atom.predicate}/{atom.arity} is not one of "
                "entity/6, relation/3, attribute/2"
            )
            continue
        if atom.predicate == "entity":
            cat = atom.args[1]
            if isinstance(cat, Str):
                if cat.value.lower() not in known:
                    reasons.append(f"UnknownCategory: {cat} is not one of {sorted(known)}")
            elif not isinstance(cat, Var):
                reasons.append(f"NotAString: category {cat} must be a double-quoted string")
        phrase_pos = {"relation": 2, "attribute": 1}.get(atom.predicate)
        if phrase_pos is not None:
            phrase = atom.args[phrase_pos]
            if not isinstance(phrase, (Str, Var)):
                reasons.append(f"NotAString: {phrase} in {atom} must be a double-quoted string")
            elif isinstance(phrase, Str) and not phrase.value.replace("_", " ").strip():
                reasons.append(f"EmptyPhrase: {atom} needs a non-blank phrase")
    if not reasons:
        probe = Program(rules=(rule,), queries=(Atom("target", (Var("ID"),)),))
        reasons.extend(
            str(v) for v in validate_program(probe) if v.kind in ("UnsafeRule", "ComparisonType")
        )
    if reasons:
        raise RuleRejected(reasons)
    return rule


def extract_symbols(rule: Rule) -> SymbolRequirements:
    relations: dict[str, None] = {}
    attributes: dict[str, None] = {}
    flags = []
    for atom in rule.atoms:
        if atom.signature == ("relation", 3):
            target, pos = relations, 2
        elif atom.signature == ("attribute", 2):
            target, pos = attributes, 1
        else:
            continue
        phrase = atom.args[pos]
        if isinstance(phrase, Str):
            target.setdefault(phrase.value, None)
        else:
            flags.append(str(atom))
    return SymbolRequirements(tuple(relations), tuple(attributes), tuple(flags))


class DepthCache:
    """Estimates the depth field at most once per image."""

    def __init__(self):
        self._lock = threading.Lock()
        self._field: DepthField | None = None

    def get(self, image: Image.Image, suite: BackendSuite) -> DepthField:
        with self._lock:
            if self._field is None:
                self._field = suite.estimate_depth(image)
            return self._field


def _run_tasks(tasks, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [t() for t in tasks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: t(), tasks))


def _relation_fact(a: EntityRecord, b: EntityRecord, phrase: str, p: float) -> ProbFact:
    return ProbFact(
        clamp_fact_probability(p), Atom("relation", (Str(a.id), Str(b.id), Str(phrase)))
    )


def select_pairs(entities: Sequence[EntityRecord], max_pairs: int) -> list[tuple[int, int]]:
    """Ordered pairs of distinct entities, capped by descending confidence product.

    The result is listed in entity order (subject, then object).
    """
    pairs = [(i, j) for i in range(len(entities)) for j in range(len(entities)) if i != j]
    ranked = sorted(
        pairs, key=lambda ij: (-(entities[ij[0]].confidence * entities[ij[1]].confidence), ij)
    )
    return sorted(ranked[:max_pairs])


def materialize_relations(
    image: Image.Image,
    entities: Sequence[EntityRecord],
    req: SymbolRequirements,
    suite: BackendSuite,
    config: GenerationConfig = GenerationConfig(),
    depth_cache: DepthCache | None = None,
) -> list[ProbFact]:
    if len(entities) < 2:
        raise ValueError("relations need at least two entities")
    if not req.relations:
        return []
    depth_cache = depth_cache or DepthCache()
    pairs = select_pairs(entities, config.max_pairs)
    width, height = image.size

    def task(phrase: str, a: EntityRecord, b: EntityRecord):
        def run() -> ProbFact:
            route = normalize_relation(phrase)
            try:
                if route in config.geometric_relations:
                    p = geometric_relation(a.box, b.box, route, width, height, config.steepness)
                elif route in config.depth_relations and suite.has("depth"):
                    field_ = depth_cache.get(image, suite)
                    p = depth_relation(
                        entity_depth(field_, a.box), entity_depth(field_, b.box), route, config.steepness
                    )
                else:
                    p = suite.score_relation_vlm(image, (a.category, a.box), (b.category, b.box), phrase)
            except CapabilityError as exc:
                raise MaterializationError(f"relation {phrase!r} for ({a.id}, {b.id})", exc) from exc
            return _relation_fact(a, b, phrase, p)

        return run

    tasks = [task(phrase, entities[i], entities[j]) for phrase in req.relations for i, j in pairs]
    return _run_tasks(tasks, config.workers)


def materialize_attributes(
    image: Image.Image,
    entities: Sequence[EntityRecord],
    req: SymbolRequirements,
    suite: BackendSuite,
    config: GenerationConfig = GenerationConfig(),
) -> list[ProbFact]:
    def task(phrase: str, e: EntityRecord):
        def run() -> ProbFact:
            try:
                p = suite.score_attribute(image, e.box, phrase)
            except CapabilityError as exc:
                raise MaterializationError(f"attribute {phrase!r} for {e.id}", exc) from exc
            return ProbFact(clamp_fact_probability(p), Atom("attribute", (Str(e.id), Str(phrase))))

        return run

    tasks = [task(phrase, e) for phrase in req.attributes for e in entities]
    return _run_tasks(tasks, config.workers)


def assemble_source(
    entity_facts: str,
    relation_facts: Sequence[ProbFact],
    attribute_facts: Sequence[ProbFact],
    rule: Rule,
    query_comment: str,
) -> str:
    comment = " ".join(query_comment.split())
    lines = [entity_facts.rstrip("\n"), RELATION_HEADER]
    lines += [str(f) for f in relation_facts]
    lines.append(ATTRIBUTE_HEADER)
    lines += [str(f) for f in attribute_facts]
    lines += [f"% find {comment}", str(rule), TARGET_QUERY]
    return "\n".join(lines) + "\n"


def assemble_program(
    entity_facts: str,
    relation_facts: Sequence[ProbFact],
    attribute_facts: Sequence[ProbFact],
    rule: Rule,
    query_comment: str,
) -> tuple[Program, str]:
    """Concatenate the components, reparse and revalidate; returns (program, source)."""
    source = assemble_source(entity_facts, relation_facts, attribute_facts, rule, query_comment)
    program = parse_program(source)
    problems = validate_program(program)
    if problems:
        raise LogicError("assembled program is invalid: " + "; ".join(map(str, problems)))
    return program, source


__all__ = [
    "ALLOWED_BODY",
    "ATTRIBUTE_HEADER",
    "DepthCache",
    "ENTITY_HEADER",
    "EmptyOutput",
    "EntityRecord",
    "GenerationConfig",
    "GenerationError",
    "MaterializationError",
    "PROB_CEIL",
    "PROB_FLOOR",
    "RELATION_HEADER",
    "RuleRejected",
    "SymbolRequirements",
    "assemble_program",
    "assemble_source",
    "clamp_fact_probability",
    "emit_entity_facts",
    "entity_records",
    "extract_rule_block",
    "extract_symbols",
    "materialize_attributes",
    "materialize_relations",
    "select_pairs",
    "validate_rule",
]
