"""Exact inference under distribution semantics.

A query's event is represented by its proof DNF: a set of minimal proofs, each
proof being the set of probabilistic-fact indices that must all be true.  The
probability of the DNF is computed by Shannon expansion with memoization on the
remaining formula, which is equivalent to compiling an ordered decision diagram
and evaluating it bottom-up.
"""

from __future__ import annotations

import itertools
from collections import Counter
from typing import Iterable, Sequence

import numpy as np

from .errors import OracleTooLarge, ProofBlowup, UnknownPredicate
from .grounding import GroundProgram
from .terms import Atom, ProbFact

ProofDNF = frozenset[frozenset[int]]

DEFAULT_PROOF_CAP = 50_000
ORACLE_MAX_FACTS = 24


def minimize(proofs: Iterable[frozenset[int]]) -> ProofDNF:
    """Drop every proof that is a superset of another one."""
    kept: list[frozenset[int]] = []
    for proof in sorted(set(proofs), key=lambda p: (len(p), sorted(p))):
        if not any(k <= proof for k in kept):
            kept.append(proof)
    return frozenset(kept)


def prove(g: GroundProgram, query: Atom, cap: int = DEFAULT_PROOF_CAP) -> ProofDNF:
    """Minimal proofs of a ground atom as sets of fact indices."""
    if query.signature not in g.defined:
        raise UnknownPredicate(f"{query.predicate}/{query.arity} is not defined")

    relevant: list[Atom] = []
    seen = {query}
    stack = [query]
    while stack:
        atom = stack.pop()
        relevant.append(atom)
        for rule in g.rules_for(atom):
            for b in rule.body:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)

    # Least fixpoint: only finite derivations survive, so recursive rules are safe.
    proofs: dict[Atom, ProofDNF] = {
        a: frozenset(frozenset((i,)) for i in g.fact_index.get(a, ())) for a in relevant
    }
    changed = True
    while changed:
        changed = False
        for atom in relevant:
            rules = g.rules_for(atom)
            if not rules:
                continue
            candidates = set(proofs[atom])
            for rule in rules:
                parts = [proofs[b] for b in rule.body]
                if any(not p for p in parts):
                    continue
                for combo in itertools.product(*parts):
                    candidates.add(frozenset().union(*combo))
                    if len(candidates) > cap:
                        raise ProofBlowup(f"more than {cap} proofs for {atom}")
            updated = minimize(candidates)
            if updated != proofs[atom]:
                proofs[atom] = updated
                changed = True
    return proofs[query]


def variable_order(dnf: ProofDNF) -> list[int]:
    """Facts by descending number of proofs they occur in, ties by index."""
    counts = Counter(i for proof in dnf for i in proof)
    return sorted(counts, key=lambda i: (-counts[i], i))


def probability_of(dnf: ProofDNF, facts: Sequence[ProbFact]) -> float:
    if not dnf:
        return 0.0
    rank = {v: r for r, v in enumerate(variable_order(dnf))}
    memo: dict[ProofDNF, float] = {}

    def expand(formula: ProofDNF) -> float:
        if not formula:
            return 0.0
        if frozenset() in formula:
            return 1.0
        cached = memo.get(formula)
        if cached is not None:
            return cached
        var = min((v for proof in formula for v in proof), key=rank.__getitem__)
        p = facts[var].probability
        high = frozenset(proof - {var} for proof in formula)
        low = frozenset(proof for proof in formula if var not in proof)
        result = p * expand(high) + (1.0 - p) * expand(low)
        memo[formula] = result
        return result

    return min(1.0, max(0.0, expand(dnf)))


def oracle_probability(dnf: ProofDNF, facts: Sequence[ProbFact]) -> float:
    """Sum of possible-world probabilities in which some proof holds."""
    if not dnf:
        return 0.0
    variables = sorted({i for proof in dnf for i in proof})
    n = len(variables)
    if n > ORACLE_MAX_FACTS:
        raise OracleTooLarge(f"{n} facts exceed the enumeration limit of {ORACLE_MAX_FACTS}")
    if n == 0:
        return 1.0
    position = {v: k for k, v in enumerate(variables)}
    masks = np.array(
        [sum(1 << position[v] for v in proof) for proof in dnf], dtype=np.int64
    )
    probs = np.array([facts[v].probability for v in variables], dtype=np.float64)

    total = 0.0
    chunk = 1 << min(n, 20)
    for start in range(0, 1 << n, chunk):
        worlds = np.arange(start, start + chunk, dtype=np.int64)
        weight = np.ones(chunk, dtype=np.float64)
        for k in range(n):
            bit = (worlds >> k) & 1
            weight *= np.where(bit == 1, probs[k], 1.0 - probs[k])
        satisfied = np.zeros(chunk, dtype=bool)
        for m in masks:
            satisfied |= (worlds & m) == m
        total += float(weight[satisfied].sum())
    return total
