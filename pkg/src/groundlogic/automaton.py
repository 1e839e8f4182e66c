"""The five-state grounding automaton.

Every transition the machine takes is one row of :data:`TABLE`.  Within a
state the row conditions partition the observations, so exactly one row fires
(:func:`select_row`).  Rows 1, 4, 6, 9 and 10 return to an earlier or the same
state with feedback; each of them has its own retry budget, and a failure that
would exceed the budget ends the run with a best-effort answer instead.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

from PIL import Image

from .backends import MALFORMED, BackendSuite, CapabilityError
from .generation import (
    DepthCache,
    EmptyOutput,
    EntityRecord,
    GenerationConfig,
    MaterializationError,
    RuleRejected,
    assemble_program,
    emit_entity_facts,
    entity_records,
    extract_rule_block,
    extract_symbols,
    materialize_attributes,
    materialize_relations,
    validate_rule,
)
from .logic import LogicError, Program, answer_query
from .spatial import DEPTH_RELATIONS, GEOMETRIC_RELATIONS, Bitmask, BoundingBox
from .validation import Verdict, annotate_candidate, decide

log = logging.getLogger(__name__)


class StateId(str, enum.Enum):
    PERCEPTION = "Perception"
    LOGIC_GENERATION = "LogicGeneration"
    LOGIC_REASONING = "LogicReasoning"
    ANSWERING = "Answering"
    RETURN_TARGET = "ReturnTarget"


class Status(str, enum.Enum):
    VALIDATED = "Validated"
    BEST_EFFORT = "BestEffort"
    FALLBACK = "Fallback"


P, L, R, A, F = (
    StateId.PERCEPTION,
    StateId.LOGIC_GENERATION,
    StateId.LOGIC_REASONING,
    StateId.ANSWERING,
    StateId.RETURN_TARGET,
)


@dataclass(frozen=True)
class Observation:
    """What a state has measured when it picks its outgoing row."""

    n_categories: int = 0
    n_entities: int = 0
    rule_ok: bool = False
    n_results: int = 0
    answer_yes: bool = False
    n_alternatives: int = 0


@dataclass(frozen=True)
class TableRow:
    row: int
    source: StateId
    target: StateId
    condition: str
    holds: Callable[[Observation], bool] = field(compare=False, repr=False)


TABLE: tuple[TableRow, ...] = (
    TableRow(1, P, P, "|C| = 0: no entity categories extracted", lambda o: o.n_categories == 0),
    TableRow(2, P, A, "|C| > 0 and |E| < 2", lambda o: o.n_categories > 0 and o.n_entities < 2),
    TableRow(3, P, L, "|C| > 0 and |E| >= 2", lambda o: o.n_categories > 0 and o.n_entities >= 2),
    TableRow(4, L, L, "generated rule rejected", lambda o: not o.rule_ok),
    TableRow(5, L, R, "generated rule accepted, program assembled", lambda o: o.rule_ok),
    TableRow(6, R, L, "|Y_L| = 0: query has no candidates", lambda o: o.n_results == 0),
    TableRow(7, R, A, "|Y_L| > 0", lambda o: o.n_results > 0),
    TableRow(8, A, F, "answer Yes", lambda o: o.answer_yes),
    TableRow(9, A, A, "answer No and |Y_L'| > 0", lambda o: not o.answer_yes and o.n_alternatives > 0),
    TableRow(10, A, P, "answer No and |Y_L'| = 0", lambda o: not o.answer_yes and o.n_alternatives == 0),
)
ROWS = {r.row: r for r in TABLE}
SELF_CORRECTION_ROWS = (1, 4, 6, 9, 10)


def select_row(state: StateId, obs: Observation) -> TableRow:
    matching = [r for r in TABLE if r.source is state and r.holds(obs)]
    if len(matching) != 1:
        raise AssertionError(f"{len(matching)} rows hold in {state.value} for {obs}")
    return matching[0]


def transition_bound(max_retries: int) -> int:
    """Upper bound on trace length.

    Self-correction rows fire at most m times each (5m).  Perception is left
    at most m + 1 times (rows 2/3), LogicGeneration is entered at most
    (m + 1) + m times so rows 5 and 7 each fire at most 2m + 1 times, and
    row 8 fires once.
    """
    m = max_retries
    return 5 * m + (m + 1) + 2 * (2 * m + 1) + 1


FEEDBACK_NO_CATEGORIES = "no relevant categories found, reconsider the query"
FEEDBACK_NO_CANDIDATES = "query produced no candidates; relax or correct the rule"


@dataclass(frozen=True)
class AutomatonConfig:
    max_retries: int = 6
    confidence_floor: float = 0.05
    max_pairs: int = 30
    candidate_floor: float = 1e-6
    workers: int = 1
    # Ablation switches.
    self_correction: bool = True
    use_logic: bool = True
    use_answerer: bool = True
    use_captioner: bool = True
    geometric_relations: frozenset[str] = GEOMETRIC_RELATIONS
    depth_relations: frozenset[str] = DEPTH_RELATIONS

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if not 0.0 <= self.confidence_floor < 1.0:
            raise ValueError("confidence_floor must lie in [0, 1)")
        if self.max_pairs < 1 or self.workers < 1:
            raise ValueError("max_pairs and workers must be positive")
        if not 0.0 <= self.candidate_floor < 1.0:
            raise ValueError("candidate_floor must lie in [0, 1)")

    @property
    def budget(self) -> int:
        return self.max_retries if self.self_correction else 0

    def generation(self) -> GenerationConfig:
        return GenerationConfig(
            max_pairs=self.max_pairs,
            geometric_relations=frozenset(self.geometric_relations),
            depth_relations=frozenset(self.depth_relations),
            workers=self.workers,
        )


@dataclass(frozen=True)
class TransitionEvent:
    step: int
    row: int
    source: StateId
    target: StateId
    condition: str
    snapshot: str
    feedback: str | None = None

    def to_dict(self) -> dict:
        d = {
            "step": self.step,
            "row": self.row,
            "from": self.source.value,
            "to": self.target.value,
            "condition": self.condition,
            "snapshot": self.snapshot,
        }
        if self.feedback is not None:
            d["feedback"] = self.feedback
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TransitionEvent":
        return cls(
            d["step"], d["row"], StateId(d["from"]), StateId(d["to"]),
            d["condition"], d["snapshot"], d.get("feedback"),
        )


@dataclass(frozen=True)
class Candidate:
    entity_id: str
    box: BoundingBox
    probability: float

    def to_dict(self) -> dict:
        return {"id": self.entity_id, "box": self.box.as_list(), "probability": self.probability}


@dataclass
class PipelineContext:
    image: Image.Image
    query: str
    state: StateId = P
    caption: str | None = None
    categories: list[str] = field(default_factory=list)
    entities: list[EntityRecord] = field(default_factory=list)
    fallback_used: bool = False
    program: Program | None = None
    program_source: str | None = None
    candidates: list[Candidate] = field(default_factory=list)
    # Rejections in the current Answering episode, and over the whole run.
    episode_rejected: list[Candidate] = field(default_factory=list)
    rejected: list[Candidate] = field(default_factory=list)
    accepted: Candidate | None = None
    answer_probability: float | None = None
    counters: dict[int, int] = field(default_factory=lambda: {r: 0 for r in SELF_CORRECTION_ROWS})
    retries_into: dict[StateId, int] = field(default_factory=lambda: {P: 0, L: 0})
    feedback: dict[StateId, str] = field(default_factory=dict)
    trace: list[TransitionEvent] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    stop_reason: str | None = None
    reentry_signature: tuple | None = None
    depth_cache: DepthCache = field(default_factory=DepthCache)

    def entity(self, entity_id: str) -> EntityRecord | None:
        return next((e for e in self.entities if e.id == entity_id), None)


def _fire(
    ctx: PipelineContext, obs: Observation, snapshot: str, config: AutomatonConfig,
    feedback: str | None = None,
) -> TransitionEvent | None:
    row = select_row(ctx.state, obs)
    if row.row in SELF_CORRECTION_ROWS:
        if ctx.counters[row.row] >= config.budget:
            ctx.stop_reason = f"retry budget of row {row.row} exhausted ({row.condition})"
            return None
        ctx.counters[row.row] += 1
        if row.target in ctx.retries_into:
            ctx.retries_into[row.target] += 1
            if feedback is not None:
                feedback = f"{feedback} (retry {ctx.retries_into[row.target]})"
                ctx.feedback[row.target] = feedback
    event = TransitionEvent(len(ctx.trace) + 1, row.row, row.source, row.target, row.condition, snapshot, feedback)
    ctx.trace.append(event)
    return event


# -- states -------------------------------------------------------------------


def step_perception(ctx: PipelineContext, suite: BackendSuite, config: AutomatonConfig):
    feedback = ctx.feedback.pop(P, None)
    if ctx.caption is None and config.use_captioner and suite.has("captioner"):
        ctx.caption = suite.caption(ctx.image)
    try:
        categories = suite.extract_categories(ctx.caption, ctx.query, feedback)
    except CapabilityError as exc:
        if exc.kind != MALFORMED:
            raise
        ctx.flags.append(f"category output unparseable: {exc.detail}")
        categories = []
    ctx.categories = categories
    ctx.candidates = []
    ctx.fallback_used = False
    if not categories:
        ctx.entities = []
        return _fire(ctx, Observation(n_categories=0), "|C|=0", config, FEEDBACK_NO_CATEGORIES)

    detections = [
        d for d in suite.detect_entities(ctx.image, categories) if d.confidence >= config.confidence_floor
    ]
    ctx.entities = entity_records(detections)
    n_detected = len(ctx.entities)
    if n_detected == 0:
        fallback = suite.detect_fallback(ctx.image, ctx.query)
        if fallback is not None:
            ctx.entities = [EntityRecord("fallback_0", "fallback", fallback.box, fallback.confidence)]
            ctx.fallback_used = True
    if len(ctx.entities) < 2:
        ctx.candidates = [Candidate(e.id, e.box, e.confidence) for e in ctx.entities]
    ctx.episode_rejected = []
    snapshot = f"|C|={len(categories)}, |E|={n_detected}" + (", fallback adopted" if ctx.fallback_used else "")
    return _fire(ctx, Observation(len(categories), len(ctx.entities)), snapshot, config)


def step_logic_generation(ctx: PipelineContext, suite: BackendSuite, config: AutomatonConfig):
    feedback = ctx.feedback.pop(L, None)
    if not config.use_logic:
        ctx.program = ctx.program_source = None
        return _fire(ctx, Observation(rule_ok=True), "logic disabled", config)

    facts = emit_entity_facts(ctx.entities)
    text = suite.generate_logic(ctx.query, facts, ctx.categories, feedback)
    try:
        rule = validate_rule(extract_rule_block(text), ctx.categories)
    except EmptyOutput as exc:
        reasons = [f"EmptyOutput: {exc}"]
    except RuleRejected as exc:
        reasons = exc.reasons
    else:
        reasons = []
    if reasons:
        message = "the rule was rejected: " + "; ".join(reasons)
        return _fire(ctx, Observation(rule_ok=False), f"{len(reasons)} problem(s)", config, message)

    req = extract_symbols(rule)
    for atom in req.variable_positions:
        ctx.flags.append(f"variable phrase position, nothing materialized: {atom}")
    gen = config.generation()
    try:
        relations = materialize_relations(ctx.image, ctx.entities, req, suite, gen, ctx.depth_cache)
        attributes = materialize_attributes(ctx.image, ctx.entities, req, suite, gen)
    except MaterializationError as exc:
        raise exc.cause from exc
    ctx.program, ctx.program_source = assemble_program(facts, relations, attributes, rule, ctx.query)
    snapshot = f"{len(relations)} relation fact(s), {len(attributes)} attribute fact(s)"
    return _fire(ctx, Observation(rule_ok=True), snapshot, config)


def step_logic_reasoning(ctx: PipelineContext, suite: BackendSuite, config: AutomatonConfig):
    if not config.use_logic:
        ranked = sorted(ctx.entities, key=lambda e: (-e.confidence, e.id))
        ctx.candidates = [Candidate(e.id, e.box, e.confidence) for e in ranked]
        return _fire(ctx, Observation(n_results=len(ctx.candidates)), f"|Y_L|={len(ctx.candidates)}", config)

    error = None
    try:
        answers = answer_query(ctx.program, candidate_floor=config.candidate_floor)
    except LogicError as exc:
        answers, error = [], f"{type(exc).__name__}: {exc}"
    candidates = []
    for ans in answers:
        ent = ctx.entity(ans.entity_id) if ans.entity_id is not None else None
        if ent is None:
            ctx.flags.append(f"answer {ans.atom} is not a detected entity")
            continue
        candidates.append(Candidate(ent.id, ent.box, ans.probability))
    ctx.candidates = candidates
    ctx.episode_rejected = []
    if candidates:
        return _fire(ctx, Observation(n_results=len(candidates)), f"|Y_L|={len(candidates)}", config)
    message = f"inference failed ({error}); correct the rule" if error else FEEDBACK_NO_CANDIDATES
    return _fire(ctx, Observation(n_results=0), "|Y_L|=0", config, message)


def step_answering(ctx: PipelineContext, suite: BackendSuite, config: AutomatonConfig):
    if not ctx.candidates:
        return _reperceive(ctx, config, "no candidate to validate")
    top = ctx.candidates[0]
    if not config.use_answerer:
        ctx.stop_reason = "answerer disabled"
        return None
    annotated = annotate_candidate(ctx.image, top.box)
    try:
        p_yes = suite.validate_answer(annotated, ctx.query)
    except CapabilityError as exc:
        if exc.kind != MALFORMED:
            raise
        ctx.flags.append(f"answer for {top.entity_id} unparseable, treated as No: {exc.detail}")
        p_yes = 0.0
    ctx.answer_probability = p_yes
    if decide(p_yes) is Verdict.YES:
        ctx.accepted = top
        return _fire(ctx, Observation(answer_yes=True), f"P(Yes)={p_yes:.4f} for {top.entity_id}", config)

    ctx.candidates = ctx.candidates[1:]
    ctx.episode_rejected.append(top)
    ctx.rejected.append(top)
    snapshot = f"P(Yes)={p_yes:.4f} for {top.entity_id}, |Y_L'|={len(ctx.candidates)}"
    if ctx.candidates:
        return _fire(ctx, Observation(n_alternatives=len(ctx.candidates)), snapshot, config)
    return _reperceive(ctx, config, snapshot)


def _reperceive(ctx: PipelineContext, config: AutomatonConfig, snapshot: str):
    signature = (
        tuple(ctx.categories),
        tuple((e.id, e.box) for e in ctx.entities),
        tuple(c.entity_id for c in ctx.episode_rejected),
    )
    if signature == ctx.reentry_signature:
        ctx.stop_reason = "re-perception produced no new evidence"
        return None
    ctx.reentry_signature = signature
    rejected = ", ".join(c.entity_id for c in ctx.episode_rejected) or "none"
    used = ", ".join(ctx.categories) or "none"
    message = (
        f"the candidates {rejected} were rejected; categories already used: {used}; "
        "consider other objects mentioned or implied by the query"
    )
    return _fire(ctx, Observation(), snapshot, config, message)


STEPS = {
    P: step_perception,
    L: step_logic_generation,
    R: step_logic_reasoning,
    A: step_answering,
}


# -- result --------------------------------------------------------------------

RESULT_SCHEMA_VERSION = 1


@dataclass
class GroundingResult:
    query: str
    status: Status
    target_id: str | None
    target_box: BoundingBox | None
    probability: float | None
    answer_probability: float | None
    alternatives: list[Candidate]
    trace: list[TransitionEvent]
    mask: Bitmask | None = None
    stop_reason: str | None = None
    error: dict | None = None
    categories: list[str] = field(default_factory=list)
    entities: list[EntityRecord] = field(default_factory=list)
    program: str | None = None
    flags: list[str] = field(default_factory=list)

    @property
    def rows(self) -> list[int]:
        return [e.row for e in self.trace]

    def to_dict(self) -> dict:
        return {
            "schema_version": RESULT_SCHEMA_VERSION,
            "query": self.query,
            "status": self.status.value,
            "target": None
            if self.target_box is None
            else {
                "id": self.target_id,
                "box": self.target_box.as_list(),
                "mask": None if self.mask is None else self.mask.to_rle(),
            },
            "probability": self.probability,
            "answer_probability": self.answer_probability,
            "alternatives": [c.to_dict() for c in self.alternatives],
            "trace": [e.to_dict() for e in self.trace],
            "stop_reason": self.stop_reason,
            "error": self.error,
            "categories": list(self.categories),
            "entities": [
                {"id": e.id, "category": e.category, "box": e.box.as_list(), "confidence": e.confidence}
                for e in self.entities
            ],
            "program": self.program,
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "GroundingResult":
        target = d.get("target")
        return cls(
            query=d["query"],
            status=Status(d["status"]),
            target_id=target["id"] if target else None,
            target_box=BoundingBox(*target["box"]) if target else None,
            probability=d.get("probability"),
            answer_probability=d.get("answer_probability"),
            alternatives=[Candidate(c["id"], BoundingBox(*c["box"]), c["probability"]) for c in d["alternatives"]],
            trace=[TransitionEvent.from_dict(e) for e in d["trace"]],
            mask=Bitmask.from_rle(target["mask"]) if target and target.get("mask") else None,
            stop_reason=d.get("stop_reason"),
            error=d.get("error"),
            categories=list(d.get("categories", [])),
            entities=[
                EntityRecord(e["id"], e["category"], BoundingBox(*e["box"]), e["confidence"])
                for e in d.get("entities", [])
            ],
            program=d.get("program"),
            flags=list(d.get("flags", [])),
        )


def _best_effort(ctx: PipelineContext) -> Candidate | None:
    if ctx.candidates:
        return ctx.candidates[0]
    if ctx.rejected:
        return ctx.rejected[0]
    if ctx.entities:
        # Highest detector confidence; the first detection wins ties.
        top = max(reversed(ctx.entities), key=lambda e: e.confidence)
        return Candidate(top.id, top.box, top.confidence)
    return None


def _result(ctx: PipelineContext, suite: BackendSuite, status: Status, target: Candidate | None,
            error: dict | None = None) -> GroundingResult:
    mask = None
    if target is not None and error is None and suite.has("segmenter"):
        try:
            mask = suite.segment_region(ctx.image, target.box)
        except CapabilityError as exc:
            ctx.flags.append(f"segmentation failed, box only: {exc}")
    alternatives = [c for c in ctx.candidates if target is None or c.entity_id != target.entity_id]
    return GroundingResult(
        query=ctx.query,
        status=status,
        target_id=None if target is None else target.entity_id,
        target_box=None if target is None else target.box,
        probability=None if target is None else target.probability,
        answer_probability=ctx.answer_probability if status is Status.VALIDATED else None,
        alternatives=alternatives,
        trace=list(ctx.trace),
        mask=mask,
        stop_reason=ctx.stop_reason,
        error=error,
        categories=list(ctx.categories),
        entities=list(ctx.entities),
        program=ctx.program_source,
        flags=list(ctx.flags),
    )


def run(
    image: Image.Image, query: str, suite: BackendSuite, config: AutomatonConfig = AutomatonConfig()
) -> GroundingResult:
    """Ground ``query`` in ``image``; never raises for backend failures."""
    if not query.strip():
        raise ValueError("query must be non-empty")
    ctx = PipelineContext(image.convert("RGB"), query)
    try:
        while ctx.state is not F:
            event = STEPS[ctx.state](ctx, suite, config)
            if event is None:
                break
            ctx.state = event.target
    except CapabilityError as exc:
        log.warning("run aborted: %s", exc)
        fallback = None
        try:
            det = suite.detect_fallback(ctx.image, query)
            if det is not None:
                fallback = Candidate("fallback_0", det.box, det.confidence)
        except CapabilityError as inner:
            ctx.flags.append(f"fallback detection failed: {inner}")
        return _result(ctx, suite, Status.FALLBACK, fallback, error=exc.to_dict())

    if ctx.state is F:
        return _result(ctx, suite, Status.VALIDATED, ctx.accepted)
    return _result(ctx, suite, Status.BEST_EFFORT, _best_effort(ctx))
