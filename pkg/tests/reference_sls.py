"""Slow reference implementation of the local search solver, used as an
oracle in tests.

It consumes the identical splitmix64 stream as the production core but
recomputes everything the core tracks incrementally (break values,
true-literal counts, unsatisfied-clause membership) from scratch at every
step, and counts flip events with an explicit counter.  Agreement on
(solved, flips, assignment) therefore audits the incremental bookkeeping.
"""

from __future__ import annotations

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * MIX1) & MASK
        z = ((z ^ (z >> 27)) * MIX2) & MASK
        return z ^ (z >> 31)

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, n: int) -> int:
        return self.next_u64() % n


def _lit_true(lit: int, values: list[int]) -> bool:
    var = abs(lit)
    return values[var - 1] == (1 if lit > 0 else 0)


def _clause_true_count(clause, values) -> int:
    return sum(1 for lit in clause if _lit_true(lit, values))


def reference_solve(
    clauses: list[list[int]],
    n_vars: int,
    cb: float,
    cm: float,
    max_flips: int,
    seed: int,
):
    """Returns (solved, flip_count, values) for the break-only-poly walk."""
    rng = SplitMix64(seed)
    values = [int(rng.next_u64() >> 63) for _ in range(n_vars)]

    # unsatisfied clause list with the same append / swap-delete discipline
    # as the production core, so uniform index picks line up
    unsat = [ci for ci, cl in enumerate(clauses) if _clause_true_count(cl, values) == 0]
    pos = {ci: k for k, ci in enumerate(unsat)}

    def remove_unsat(ci):
        k = pos.pop(ci)
        last = unsat[-1]
        unsat[k] = last
        unsat.pop()
        if last != ci:
            pos[last] = k

    def add_unsat(ci):
        pos[ci] = len(unsat)
        unsat.append(ci)

    flip_events = 0
    while unsat and flip_events < max_flips:
        clause = clauses[unsat[rng.next_below(len(unsat))]]
        weights = []
        for lit in clause:
            var = abs(lit)
            # brute-force break: clauses that lose their sole true literal
            br = sum(
                1
                for other in clauses
                if any(abs(l) == var and _lit_true(l, values) for l in other)
                and _clause_true_count(other, values) == 1
            )
            w = (1.0 + br) ** (-cb)
            if cm != 0.0:
                mk = sum(
                    1
                    for other in clauses
                    if any(abs(l) == var and not _lit_true(l, values) for l in other)
                    and _clause_true_count(other, values) == 0
                )
                w *= float(mk) ** cm
            weights.append(w)
        r = rng.next_unit() * sum(weights)
        pick = len(weights) - 1
        acc = 0.0
        for k, w in enumerate(weights):
            acc += w
            if r < acc:
                pick = k
                break
        var = abs(clause[pick])
        values[var - 1] ^= 1
        flip_events += 1

        # mirror the core's update order: clauses gaining a true literal
        # first (ascending clause index), then clauses losing one
        now_true = var if values[var - 1] else -var
        for ci, cl in enumerate(clauses):
            if now_true in cl and ci in pos and _clause_true_count(cl, values) > 0:
                remove_unsat(ci)
        for ci, cl in enumerate(clauses):
            if -now_true in cl and ci not in pos and _clause_true_count(cl, values) == 0:
                add_unsat(ci)
    return not unsat, flip_events, tuple(bool(v) for v in values)
