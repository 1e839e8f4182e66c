"""Exact inference on a small scene program, cross-checked against brute force.

    python3 demos/logic_engine.py
"""

from groundlogic.logic import answer_query, ground_program, oracle_probability, parse_program, probability_of, prove

SOURCE = """\
0.7435::entity("person_0", "person", 360, 171, 480, 386).
0.4134::entity("person_1", "person", 0, 142, 159, 478).
0.9986::relation("person_0", "person_1", "left of").
0.0120::relation("person_1", "person_0", "left of").
0.8711::attribute("person_0", "wearing_blue_shirt").
0.1468::attribute("person_1", "wearing_blue_shirt").
target(ID) :- entity(ID, "person", _, _, _, _), relation(ID, _, "left of"), attribute(ID, "wearing_blue_shirt").
query(target(ID)).
"""

program = parse_program(SOURCE)
print("ranked answers")
for answer in answer_query(program):
    print(f"  {answer.entity_id:10s} {answer.probability:.6f}")

# The same numbers from the proof formula, once by Shannon expansion and once
# by enumerating every possible world over the facts it mentions.
ground = ground_program(program)
for atom in ground.matching(program.queries[0]):
    dnf = prove(ground, atom)
    fast, slow = probability_of(dnf, program.facts), oracle_probability(dnf, program.facts)
    print(f"{atom}: {len(dnf)} proof(s), shannon {fast:.12f}, enumeration {slow:.12f}")
