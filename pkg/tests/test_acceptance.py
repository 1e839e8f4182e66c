"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criterion 9 (whole suite under five minutes, no network) is completed by the
terminal-summary hook in conftest.py, which knows the session wall time.
"""

import json
import random
import socket
import time
from collections import Counter
from fractions import Fraction

import numpy as np
from PIL import Image

from groundlogic.automaton import (
    SELF_CORRECTION_ROWS,
    TABLE,
    AutomatonConfig,
    GroundingResult,
    Observation,
    StateId,
    Status,
    run,
    select_row,
    transition_bound,
)
from groundlogic.backends import BackendSuite, ReplayStore, replay_suite
from groundlogic.backends.scripted import SceneEntity, ScriptedWorld
from groundlogic.harness import DatasetEntry, evaluate, load_dataset
from groundlogic.logic import (
    Atom,
    answer_query,
    format_program,
    ground_program,
    oracle_probability,
    parse_program,
    probability_of,
    prove,
    validate_program,
)
from groundlogic.spatial import Bitmask, BoundingBox, box_iou, depth_relation, geometric_relation

from .adversary import Adversary
from .build_fixtures import ROOT
from .conftest import VERDICTS
from .progen import random_program
from .programs import BLUE_SHIRT_PROGRAM
from .scenes import FIG1, FIXTURE_SCENES, LONE_DOG, MUG
from .test_automaton import _scene


def verdict(capsys, n, ok, detail):
    VERDICTS[n] = (bool(ok), detail)
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_inference_matches_oracle(capsys):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    checked, worst = 0, 0.0
    for _ in range(500):
        program = random_program(rng, max_facts=12, max_rules=6, max_body=3)
        assert len(program.facts) <= 12 and len(program.rules) <= 6
        assert all(sum(isinstance(b, Atom) for b in r.body) <= 3 for r in program.rules)
        assert all(round(f.probability, 4) == f.probability for f in program.facts)
        g = ground_program(program)
        for query in program.queries:
            for atom in g.matching(query):
                dnf = prove(g, atom)
                worst = max(worst, abs(probability_of(dnf, program.facts) - oracle_probability(dnf, program.facts)))
                checked += 1
    elapsed = time.perf_counter() - t0
    verdict(capsys, 1, worst <= 1e-9 and elapsed < 30.0,
            f"500 programs, {checked} ground queries, max |diff| {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_blue_shirt_program(capsys):
    program = parse_program(BLUE_SHIRT_PROGRAM)
    problems = validate_program(program)
    answers = answer_query(program)
    expected = 0.7435 * 0.9986 * 0.8711
    ok = (not problems and len(answers) == 1 and answers[0].entity_id == "person_0"
          and abs(answers[0].probability - 0.6468) <= 0.0005
          and abs(answers[0].probability - expected) <= 1e-9)
    got = [(a.entity_id, round(a.probability, 6)) for a in answers]
    verdict(capsys, 2, ok, f"answers {got}, product of labels {expected:.6f}, violations {len(problems)}")


# Each row is reached by some complete scripted run.
def _row_scenarios():
    return {
        1: _scene(categories=[[], ["car"]]),
        2: LONE_DOG,
        3: FIG1,
        4: MUG,
        5: FIG1,
        6: _scene(rules=[
            '```problog\ntarget(ID) :- entity(ID, _, X1, _, _, _), X1 > 100000.\n```',
            '```problog\ntarget(ID) :- entity(ID, "car", _, _, _, _), attribute(ID, "red").\n```',
        ]),
        7: FIG1,
        8: FIG1,
        9: _scene(entities=[
            SceneEntity("car", (10, 40, 60, 90), 0.9, {"red": 0.9}, answer=0.2),
            SceneEntity("car", (120, 40, 180, 90), 0.6, {"red": 0.6}, answer=0.9),
        ]),
        10: MUG,
    }


EXPECTED_EDGES = {
    1: ("Perception", "Perception"), 2: ("Perception", "Answering"), 3: ("Perception", "LogicGeneration"),
    4: ("LogicGeneration", "LogicGeneration"), 5: ("LogicGeneration", "LogicReasoning"),
    6: ("LogicReasoning", "LogicGeneration"), 7: ("LogicReasoning", "Answering"),
    8: ("Answering", "ReturnTarget"), 9: ("Answering", "Answering"), 10: ("Answering", "Perception"),
}


def _random_observation(rng):
    return Observation(
        n_categories=rng.choice([0, 0, 1, 2, 5]),
        n_entities=rng.choice([0, 1, 1, 2, 3, 10]),
        rule_ok=rng.random() < 0.5,
        n_results=rng.choice([0, 0, 1, 2, 7]),
        answer_yes=rng.random() < 0.5,
        n_alternatives=rng.choice([0, 0, 1, 3]),
    )


def test_criterion_3_transition_table(capsys):
    fired = {}
    for row, scene in _row_scenarios().items():
        world = ScriptedWorld([scene])
        result = run(world.images[scene.name], scene.query, world.suite())
        for event in result.trace:
            if event.row == row:
                fired[row] = (event.source.value, event.target.value)
                break
    conformant = fired == EXPECTED_EDGES

    rng = random.Random(7)
    exclusive = True
    states = [StateId.PERCEPTION, StateId.LOGIC_GENERATION, StateId.LOGIC_REASONING, StateId.ANSWERING]
    for state in states:
        rows = [r for r in TABLE if r.source is state]
        for _ in range(1000):
            obs = _random_observation(rng)
            holding = [r.row for r in rows if r.holds(obs)]
            if len(holding) != 1 or select_row(state, obs).row != holding[0]:
                exclusive = False
    verdict(capsys, 3, conformant and exclusive,
            f"rows fired with expected edges: {sorted(fired)}; exactly-one-row over 4 x 1000 contexts: {exclusive}")


def test_criterion_4_retry_bound_termination(capsys):
    bound = transition_bound(6)
    worst_edge, longest, statuses = 0, 0, Counter()
    ok = True
    for seed in range(100):
        adversary = Adversary(seed)
        image = Image.new("RGB", (adversary.width, adversary.height), (90, 90, 90))
        result = run(image, "the odd one", adversary.suite(), AutomatonConfig(max_retries=6))
        counts = Counter(result.rows)
        statuses[result.status.value] += 1
        edge_max = max(counts[r] for r in SELF_CORRECTION_ROWS)
        worst_edge = max(worst_edge, edge_max)
        longest = max(longest, len(result.rows))
        if result.status is not Status.BEST_EFFORT or edge_max > 6 or len(result.rows) >= bound:
            ok = False
    verdict(capsys, 4, ok,
            f"100 schedules, statuses {dict(statuses)}, max fires per self-correction edge {worst_edge} (<= 6), "
            f"longest trace {longest} (< bound {bound})")


def test_criterion_5_replay_determinism(capsys):
    identical = True
    for name, (scene, _, _) in FIXTURE_SCENES.items():
        directory = ROOT / name
        with Image.open(directory / "image.png") as img:
            image = img.convert("RGB")
        outputs = [run(image, scene.query, replay_suite(ReplayStore(directory))).to_json() for _ in range(2)]
        recorded = (directory / "result.json").read_text()
        identical &= outputs[0] == outputs[1] == recorded

    entries = load_dataset(ROOT / "dataset.json")
    dirs = [ROOT / name for name in FIXTURE_SCENES]
    reports = [
        evaluate(entries, replay_suite(ReplayStore(dirs[0], extra=dirs[1:])), parallelism=p).to_json()
        for p in (1, 8)
    ]
    same_report = reports[0] == reports[1]
    paths = {name: [e["row"] for e in json.loads((ROOT / name / "result.json").read_text())["trace"]]
             for name in FIXTURE_SCENES}
    shapes = paths == {FIG1.name: [3, 5, 7, 8], LONE_DOG.name: [2, 8], MUG.name: [2, 10, 3, 4, 5, 7, 8]}
    verdict(capsys, 5, identical and same_report and shapes,
            f"3 fixtures byte-identical across runs: {identical}; eval report p=1 vs p=8 identical: {same_report}; "
            f"row paths {paths}")


def test_criterion_6_spatial_properties(capsys):
    rng = np.random.default_rng(6)
    w, h = 1000, 800
    worst_complement = worst_depth = 0.0
    ok = True
    for _ in range(10_000):
        a, b = [
            BoundingBox(int(x), int(y), int(x + bw), int(y + bh))
            for x, y, bw, bh in zip(rng.integers(0, 700, 2), rng.integers(0, 500, 2),
                                    rng.integers(1, 250, 2), rng.integers(1, 250, 2))
        ]
        left_ab = geometric_relation(a, b, "left of", w, h)
        left_ba = geometric_relation(b, a, "left of", w, h)
        ok &= left_ab == geometric_relation(b, a, "right of", w, h)
        ok &= geometric_relation(a, b, "above", w, h) == geometric_relation(b, a, "below", w, h)
        worst_complement = max(worst_complement, abs(left_ab + left_ba - 1))
        iou = box_iou(a, b)
        ok &= iou == box_iou(b, a) and 0.0 <= iou <= 1.0
        dx, dy = int(rng.integers(0, 50)), int(rng.integers(0, 50))
        sa = BoundingBox(a.x1 + dx, a.y1 + dy, a.x2 + dx, a.y2 + dy)
        sb = BoundingBox(b.x1 + dx, b.y1 + dy, b.x2 + dx, b.y2 + dy)
        for rel in ("left of", "right of", "above", "below", "inside", "contains", "overlapping"):
            ok &= geometric_relation(sa, sb, rel, w, h) == geometric_relation(a, b, rel, w, h)
        ok &= box_iou(sa, sb) == iou
        da, db = rng.random(2)
        front = depth_relation(da, db, "in front of")
        worst_depth = max(worst_depth, abs(front + depth_relation(db, da, "in front of") - 1))
        ok &= front == depth_relation(db, da, "behind")
    ok = ok and worst_complement <= 1e-12 and worst_depth <= 1e-12
    verdict(capsys, 6, ok, f"10000 pairs, max complement error {worst_complement:.1e}, depth {worst_depth:.1e}")


def test_criterion_7_metrics(tmp_path, capsys):
    image = tmp_path / "blank.png"
    Image.new("RGB", (20, 20)).save(image)
    gt = BoundingBox(0, 0, 10, 10)
    gt_mask = Bitmask.from_box(gt, 20, 20)
    preds = [(0, 0, 10, 10), (0, 0, 10, 6), (0, 0, 10, 4), (5, 0, 15, 10), (0, 0, 10, 5), None]
    entries = [DatasetEntry(f"s{i}", image, f"q{i}", gt, gt_mask) for i in range(6)]
    by_query = dict(zip((e.query for e in entries), preds))

    def runner(img, query, suite, config):
        box = by_query[query]
        if box is None:
            raise RuntimeError("injected failure")
        return GroundingResult(query, Status.VALIDATED, "x_0", BoundingBox(*box), 0.9, 0.9, [], [])

    report = evaluate(entries, BackendSuite({}, {}), parallelism=3, runner=runner)
    m = report.metrics

    # Hand computation: IoUs 1, 3/5, 2/5, 1/3, 1/2 and one failure.
    ious = [Fraction(1), Fraction(3, 5), Fraction(2, 5), Fraction(1, 3), Fraction(1, 2)]
    inter, union = 100 + 60 + 40 + 50 + 50, 100 + 100 + 100 + 150 + 100
    expected = {
        "including_errors": {"n": 6, "accuracy_at_50": Fraction(3, 6), "mean_iou": sum(ious) / 6,
                             "ciou": Fraction(inter, union + 100)},
        "excluding_errors": {"n": 5, "accuracy_at_50": Fraction(3, 5), "mean_iou": sum(ious) / 5,
                             "ciou": Fraction(inter, union)},
    }
    ok = m["n_total"] == 6 and m["n_failed"] == 1 and m["failure_rate"] == 1 / 6
    for block, values in expected.items():
        got = m[block]
        ok &= got["n"] == values["n"]
        ok &= got["accuracy_at_50"] == float(values["accuracy_at_50"])
        ok &= got["ciou"] == float(values["ciou"])
        # Mean IoU is a float sum of five ratios; equal to the exact value to rounding.
        ok &= abs(got["mean_iou"] - float(values["mean_iou"])) <= 1e-15
    verdict(capsys, 7, ok,
            f"incl acc {m['including_errors']['accuracy_at_50']}, mIoU {m['including_errors']['mean_iou']:.6f}, "
            f"cIoU {m['including_errors']['ciou']:.6f}; excl acc {m['excluding_errors']['accuracy_at_50']}, "
            f"mIoU {m['excluding_errors']['mean_iou']:.6f}, cIoU {m['excluding_errors']['ciou']:.6f}")


def test_criterion_8_grammar_round_trip(capsys):
    rng = random.Random(8)
    failures = 0
    for _ in range(200):
        program = random_program(rng)
        once = parse_program(format_program(program))
        twice = parse_program(format_program(once))
        if not (once == program == twice and format_program(once) == format_program(twice)):
            failures += 1
    verdict(capsys, 8, failures == 0, f"200 programs, {failures} round-trip mismatches")


def test_criterion_9_hermetic_suite(capsys):
    blocked = False
    try:
        socket.create_connection(("93.184.216.34", 80), timeout=1)
    except OSError as exc:
        blocked = "disabled" in str(exc)
    VERDICTS[9] = (blocked, f"outbound network blocked: {blocked}; replay fixtures only")
    with capsys.disabled():
        print(f"\ncriterion 9: {'PASS' if blocked else 'FAIL'} so far (wall time checked at session end)")
    assert blocked
