"""One grounding run against a scripted, offline model world.

Builds a synthetic two-person scene, runs the automaton, prints the transition
trace and saves the annotated answer next to this script.

    python3 demos/grounding_walkthrough.py
"""

from pathlib import Path

from groundlogic.automaton import run
from groundlogic.backends.scripted import Scene, ScriptedWorld
from groundlogic.harness.cli import format_trace
from groundlogic.validation import annotate_candidate

scene = Scene.from_dict({
    "name": "street",
    "query": "the person on the left wearing a blue shirt",
    "width": 480,
    "height": 320,
    "entities": [
        {"category": "person", "box": [40, 90, 120, 300], "confidence": 0.81,
         "attributes": {"wearing a blue shirt": 0.35}, "answer": 0.2},
        {"category": "person", "box": [200, 80, 280, 300], "confidence": 0.77,
         "attributes": {"wearing a blue shirt": 0.9}, "answer": 0.93},
        {"category": "person", "box": [360, 100, 440, 300], "confidence": 0.7,
         "attributes": {"wearing a blue shirt": 0.85}, "answer": 0.1},
    ],
    "categories": [["person"]],
    # The first rule names a predicate that does not exist, so the generator
    # gets feedback and tries again.
    "rules": [
        '```problog\ntarget(ID) :- person(ID), color(ID, "blue").\n```',
        '```problog\ntarget(ID) :- entity(ID, "person", _, _, _, _), entity(O, "person", _, _, _, _), '
        'relation(ID, O, "left of"), attribute(ID, "wearing_a_blue_shirt").\n```',
    ],
})

# The accepted rule reads "left of some other person", so both the left and the
# middle person qualify; the blue-shirt scores decide the ranking.
world = ScriptedWorld([scene])
image = world.images[scene.name]
result = run(image, scene.query, world.suite())
print(format_trace(result))
print("program handed to the reasoner:\n" + result.program)

if result.target_box is not None:
    out = Path(__file__).with_name("grounding_walkthrough.png")
    annotate_candidate(image, result.target_box).image.save(out)
    print(f"annotated answer written to {out}")
