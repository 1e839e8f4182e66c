import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from groundlogic.logic import (
    Atom,
    GroundingBlowup,
    Int,
    OracleTooLarge,
    ProbFact,
    ProbabilityRange,
    Program,
    ProgramSyntaxError,
    Str,
    UnknownPredicate,
    UnsupportedConstruct,
    answer_query,
    format_program,
    ground_program,
    oracle_probability,
    parse_program,
    probability_of,
    prove,
    validate_program,
)

from .programs import BLUE_SHIRT_PROBABILITY, BLUE_SHIRT_PROGRAM
from .progen import random_program


def facts(*probs):
    return [ProbFact(p, Atom(f"f{i}")) for i, p in enumerate(probs)]


def dnf(*proofs):
    return frozenset(frozenset(p) for p in proofs)


# -- parsing -----------------------------------------------------------------


def test_parse_entity_fact():
    program = parse_program('0.7435::entity("person_0","person",360,171,480,386).')
    assert len(program.facts) == 1
    fact = program.facts[0]
    assert fact.probability == 0.7435
    assert fact.atom.arity == 6
    assert fact.atom.args[4] == Int(480)


def test_parse_empty():
    program = parse_program("")
    assert program == Program()


def test_parse_comments_and_order():
    program = parse_program(BLUE_SHIRT_PROGRAM)
    assert len(program.facts) == 6
    assert len(program.rules) == 1
    assert program.queries == (Atom("target", (program.queries[0].args[0],)),)
    assert [f.atom.predicate for f in program.facts] == ["entity"] * 2 + ["relation"] * 2 + [
        "attribute"
    ] * 2


@pytest.mark.parametrize(
    "source, construct",
    [
        ('target(ID) :- entity(ID,"person",_,_,_,_), \\+ attribute(ID,"x").', "\\+"),
        ("t(X) :- a(X) ; b(X).", ";"),
        ("t(X) :- a(X), !.", "!"),
        ("t(X) :- a(Y), X is Y + 1.", "is"),
        ("t(X) :- a(X), not(b(X)).", "not"),
    ],
)
def test_unsupported_constructs(source, construct):
    with pytest.raises(UnsupportedConstruct) as info:
        parse_program(source)
    assert info.value.construct == construct


def test_probability_range():
    with pytest.raises(ProbabilityRange):
        parse_program("1.5::a(1).")


def test_syntax_error_position():
    with pytest.raises(ProgramSyntaxError) as info:
        parse_program('0.5::a("x").\nt(X) :- a(X)\n')
    assert info.value.line == 3


def test_plain_fact_rejected():
    with pytest.raises(ProgramSyntaxError):
        parse_program("a(1).")


def test_not_equal_is_not_a_cut():
    program = parse_program('t(X) :- a(X), X != "b".\nquery(t(X)).')
    assert program.rules[0].comparisons[0].op == "!="


def test_roundtrip_blue_shirt():
    once = parse_program(BLUE_SHIRT_PROGRAM)
    assert parse_program(format_program(once)) == once


def test_string_escapes_roundtrip():
    program = parse_program('0.5::a("say \\"hi\\" \\\\ ok").\nquery(a(X)).')
    assert program.facts[0].atom.args[0] == Str('say "hi" \\ ok')
    assert parse_program(format_program(program)) == program


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_roundtrip_random(seed):
    program = random_program(random.Random(seed))
    text = format_program(program)
    assert parse_program(text) == program
    assert format_program(parse_program(text)) == text


# -- validation ----------------------------------------------------------------


def test_validate_blue_shirt():
    assert validate_program(parse_program(BLUE_SHIRT_PROGRAM)) == []


def test_validate_unsafe_head():
    program = parse_program('target(X) :- entity(Y,"person",_,_,_,_).\nquery(target(X)).')
    kinds = [v.kind for v in validate_program(program)]
    assert kinds == ["UnsafeRule"]
    assert "X" in validate_program(program)[0].message


def test_validate_missing_query():
    program = parse_program("0.5::a(1).")
    assert [v.kind for v in validate_program(program)] == ["MissingQuery"]


def test_validate_arity_and_separation():
    program = parse_program("0.5::a(1).\n0.5::a(1, 2).\na(X) :- a(X).\nquery(a(X)).")
    kinds = {v.kind for v in validate_program(program)}
    assert {"ArityMismatch", "IntensionalFact"} <= kinds


def test_validate_ordering_comparison_on_string():
    program = parse_program('t(X) :- a(X), X < "abc".\nquery(t(X)).')
    assert [v.kind for v in validate_program(program)] == ["ComparisonType"]


# -- grounding -----------------------------------------------------------------


def test_ground_blue_shirt_single_target_instance():
    g = ground_program(parse_program(BLUE_SHIRT_PROGRAM))
    targets = [r for r in g.rules if r.head.predicate == "target"]
    assert len(targets) == 1
    assert targets[0].head.args == (Str("person_0"),)


def test_ground_without_facts():
    g = ground_program(parse_program('t(X) :- a(X).\nquery(t(X)).'))
    assert g.rules == ()


def test_ground_comparison_filters():
    source = (
        '0.9::entity("p0", "person", 360, 0, 400, 10).\n'
        '0.8::entity("p1", "person", 0, 0, 50, 10).\n'
        "left(ID) :- entity(ID, _, X1, _, _, _), X1 < 200.\n"
        "query(left(ID)).\n"
    )
    g = ground_program(parse_program(source))
    assert [r.head.args[0] for r in g.rules] == [Str("p1")]


def test_ground_cap():
    source = "\n".join(f"0.5::n({i})." for i in range(30)) + "\np(X, Y) :- n(X), n(Y).\nquery(p(X, Y))."
    with pytest.raises(GroundingBlowup):
        ground_program(parse_program(source), cap=500)


def test_ground_recursive_closure():
    source = (
        "0.5::edge(1, 2).\n0.5::edge(2, 3).\n0.5::edge(3, 1).\n"
        "path(X, Y) :- edge(X, Y).\npath(X, Y) :- edge(X, Z), path(Z, Y).\n"
        "query(path(1, Y)).\n"
    )
    g = ground_program(parse_program(source))
    assert {a.args for a in g.atoms if a.predicate == "path"} == {
        (Int(x), Int(y)) for x in (1, 2, 3) for y in (1, 2, 3)
    }


def test_safety_soundness_random():
    rng = random.Random(7)
    for _ in range(100):
        g = ground_program(random_program(rng))
        for rule in g.rules:
            assert rule.head.ground
            assert all(b.ground for b in rule.body)


# -- proofs and probabilities ---------------------------------------------------


def test_prove_two_single_fact_proofs():
    program = parse_program("0.5::a.\n0.5::b.\nt :- a.\nt :- b.\nquery(t).")
    g = ground_program(program)
    assert prove(g, Atom("t")) == dnf({0}, {1})


def test_prove_blue_shirt():
    program = parse_program(BLUE_SHIRT_PROGRAM)
    g = ground_program(program)
    proofs = prove(g, Atom("target", (Str("person_0"),)))
    assert len(proofs) == 1
    (proof,) = proofs
    assert sorted(str(program.facts[i].atom) for i in proof) == [
        'attribute("person_0", "wearing_blue_shirt")',
        'entity("person_0", "person", 360, 171, 480, 386)',
        'relation("person_0", "person_1", "left of")',
    ]


def test_prove_underivable_and_unknown():
    program = parse_program("0.5::a.\nt :- a.\nquery(t).")
    g = ground_program(program)
    assert prove(g, Atom("a", ())) == dnf({0})
    with pytest.raises(UnknownPredicate):
        prove(g, Atom("nothing"))
    g2 = ground_program(parse_program('t(X) :- a(X).\n0.5::a("x").\nquery(t(X)).'))
    assert prove(g2, Atom("t", (Str("y"),))) == frozenset()


def test_prove_recursive_cycle_is_minimal():
    source = (
        "0.5::edge(1, 2).\n0.5::edge(2, 1).\n"
        "path(X, Y) :- edge(X, Y).\npath(X, Y) :- edge(X, Z), path(Z, Y).\n"
        "query(path(X, Y)).\n"
    )
    g = ground_program(parse_program(source))
    assert prove(g, Atom("path", (Int(1), Int(1)))) == dnf({0, 1})
    assert prove(g, Atom("path", (Int(1), Int(2)))) == dnf({0})


# Expected values below were obtained by enumerating all possible worlds by hand.
@pytest.mark.parametrize(
    "formula, probs, expected",
    [
        (dnf({0}, {1}), (0.5, 0.5), 0.75),
        (dnf({0, 1}, {0, 2}), (0.5, 0.8, 0.8), 0.48),
        (dnf(), (0.5,), 0.0),
        (dnf(set(), {0}), (0.5,), 1.0),
        (dnf({0}), (0.7435,), 0.7435),
        (dnf({0}, {0}), (0.3,), 0.3),
    ],
)
def test_probability_examples(formula, probs, expected):
    fs = facts(*probs)
    assert probability_of(formula, fs) == pytest.approx(expected, abs=1e-12)
    assert oracle_probability(formula, fs) == pytest.approx(expected, abs=1e-12)


def test_oracle_too_large():
    fs = facts(*([0.5] * 25))
    with pytest.raises(OracleTooLarge):
        oracle_probability(dnf(set(range(25))), fs)


def _brute(formula, probs):
    total = 0.0
    for world in itertools.product([False, True], repeat=len(probs)):
        if any(all(world[i] for i in proof) for proof in formula):
            weight = 1.0
            for p, on in zip(probs, world):
                weight *= p if on else 1 - p
            total += weight
    return total


formulas = st.lists(
    st.frozensets(st.integers(min_value=0, max_value=7), min_size=0, max_size=4),
    min_size=0,
    max_size=6,
).map(lambda ps: frozenset(ps))
probability_lists = st.lists(
    st.integers(min_value=0, max_value=10_000).map(lambda k: k / 10_000), min_size=8, max_size=8
)


@settings(max_examples=200, deadline=None)
@given(formulas, probability_lists)
def test_shannon_matches_oracle(formula, probs):
    fs = facts(*probs)
    assert abs(probability_of(formula, fs) - oracle_probability(formula, fs)) <= 1e-9
    assert abs(oracle_probability(formula, fs) - _brute(formula, probs)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(formulas, st.frozensets(st.integers(0, 7), max_size=4), probability_lists)
def test_adding_proof_is_monotone(formula, extra, probs):
    fs = facts(*probs)
    assert probability_of(formula | {extra}, fs) >= probability_of(formula, fs) - 1e-12


def test_degenerate_labels():
    fs = facts(1.0, 0.0, 0.4)
    assert probability_of(dnf({0, 2}), fs) == pytest.approx(0.4)
    assert probability_of(dnf({1, 2}), fs) == 0.0
    assert probability_of(dnf({1}, {2}), fs) == pytest.approx(0.4)


# -- answer_query -----------------------------------------------------------------


def test_answer_blue_shirt():
    answers = answer_query(parse_program(BLUE_SHIRT_PROGRAM))
    assert len(answers) == 1
    assert answers[0].entity_id == "person_0"
    assert answers[0].probability == pytest.approx(BLUE_SHIRT_PROBABILITY, abs=1e-12)


def test_answer_empty():
    program = parse_program('0.5::a("x").\nt(X) :- a(X), b(X).\n0.5::b("y").\nquery(t(X)).')
    assert answer_query(program) == []


def test_answer_ordering():
    program = parse_program(
        '0.4::ok("e1").\n0.9::ok("e2").\nt(X) :- ok(X).\nquery(t(X)).'
    )
    answers = answer_query(program)
    assert [a.entity_id for a in answers] == ["e2", "e1"]
    assert [a.probability for a in answers] == [0.9, 0.4]


def test_answer_tie_broken_by_confidence_then_binding():
    program = parse_program(
        '0.5::entity("b", "x", 0, 0, 1, 1).\n'
        '0.9::entity("c", "x", 0, 0, 1, 1).\n'
        '0.5::entity("a", "x", 0, 0, 1, 1).\n'
        '0.5::ok("a").\n0.5::ok("b").\n0.5::ok("c").\n'
        "t(X) :- ok(X).\nquery(t(X))."
    )
    assert [a.entity_id for a in answer_query(program)] == ["c", "a", "b"]


def test_answer_floor_drops_impossible():
    program = parse_program('0.0::ok("a").\n0.5::ok("b").\nt(X) :- ok(X).\nquery(t(X)).')
    assert [a.entity_id for a in answer_query(program)] == ["b"]


def test_declaration_order_independence():
    rng = random.Random(11)
    for _ in range(50):
        program = random_program(rng)
        base = [(str(a.atom), round(a.probability, 12)) for a in answer_query(program)]
        facts_, rules_ = list(program.facts), list(program.rules)
        rng.shuffle(facts_)
        rng.shuffle(rules_)
        shuffled = Program(tuple(facts_), tuple(rules_), program.queries)
        # Tie order can depend on fact order only through entity confidences, absent here.
        again = [(str(a.atom), round(a.probability, 12)) for a in answer_query(shuffled)]
        assert again == base


def test_random_programs_answers_match_oracle():
    rng = random.Random(3)
    for _ in range(60):
        program = random_program(rng)
        g = ground_program(program)
        for query in program.queries:
            for atom in g.matching(query):
                proofs = prove(g, atom)
                assert abs(
                    probability_of(proofs, program.facts) - oracle_probability(proofs, program.facts)
                ) <= 1e-9
