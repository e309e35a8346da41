"""CNF data model, DIMACS round-tripping, random 3-SAT generation, and a
budgeted DPLL decision procedure used for satisfiability filtering.

Formulas are immutable; every operation here is pure.  This module is plain
Python: it is only used at instance-construction scale (a few hundred
variables), never inside solver hot loops.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .rngutil import make_generator


class CnfError(ValueError):
    """Malformed DIMACS input or invalid formula construction."""


class Literal(NamedTuple):
    variable: int
    negated: bool

    def to_int(self) -> int:
        return -self.variable if self.negated else self.variable

    @staticmethod
    def from_int(lit: int) -> "Literal":
        if lit == 0:
            raise CnfError("literal 0 is reserved as the clause terminator")
        return Literal(abs(lit), lit < 0)

    def __invert__(self) -> "Literal":
        return Literal(self.variable, not self.negated)


Clause = tuple[Literal, ...]


def clause(*lits: int) -> Clause:
    """Build a clause from signed DIMACS-style integers."""
    return tuple(Literal.from_int(x) for x in lits)


@dataclass(frozen=True)
class Formula:
    """A CNF formula over variables 1..num_vars."""

    num_vars: int
    clauses: tuple[Clause, ...]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.num_vars < 0:
            raise CnfError("negative variable count")
        for cl in self.clauses:
            if not cl:
                raise CnfError("empty clause")
            for lit in cl:
                if not 1 <= lit.variable <= self.num_vars:
                    raise CnfError(
                        f"variable {lit.variable} out of range 1..{self.num_vars}"
                    )

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @property
    def ratio(self) -> float:
        if self.num_vars == 0:
            return math.inf if self.clauses else 0.0
        return len(self.clauses) / self.num_vars

    def int_clauses(self) -> list[list[int]]:
        """Clauses as lists of signed integers (DIMACS convention)."""
        return [[lit.to_int() for lit in cl] for cl in self.clauses]


def evaluate(f: Formula, assignment: Iterable[bool]) -> bool:
    """True iff `assignment` (index 0 = variable 1) satisfies every clause."""
    values = tuple(assignment)
    if len(values) < f.num_vars:
        raise CnfError("assignment shorter than variable count")
    for cl in f.clauses:
        if not any(values[lit.variable - 1] != lit.negated for lit in cl):
            return False
    return True


# --------------------------------------------------------------------------
# DIMACS IO
# --------------------------------------------------------------------------

def parse_dimacs(text: str) -> Formula:
    """Parse DIMACS CNF text.

    Comment lines are skipped, but `key=value` pairs in comments are
    collected into formula metadata (the generator stores its seed and
    ratio that way).  Duplicate literals inside a clause are dropped;
    clauses containing both polarities of a variable are kept and their
    indices recorded under metadata["tautologies"].
    """
    metadata: dict = {}
    header: tuple[int, int] | None = None
    clauses: list[Clause] = []
    tautologies: list[int] = []
    current: list[int] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            for token in line[1:].split():
                if "=" in token:
                    key, _, value = token.partition("=")
                    metadata[key] = _coerce(value)
            continue
        if line.startswith("p"):
            if header is not None:
                raise CnfError(f"line {lineno}: duplicate header")
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise CnfError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]))
            except ValueError as exc:
                raise CnfError(f"line {lineno}: malformed header {line!r}") from exc
            if header[0] < 0 or header[1] < 0:
                raise CnfError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise CnfError(f"line {lineno}: clause before 'p cnf' header")
        for token in line.split():
            try:
                lit = int(token)
            except ValueError as exc:
                raise CnfError(f"line {lineno}: bad literal {token!r}") from exc
            if lit == 0:
                _close_clause(current, header[0], clauses, tautologies)
                current = []
            else:
                current.append(lit)

    if current:
        raise CnfError("unterminated clause at end of input")
    if header is None:
        raise CnfError("missing 'p cnf' header")
    if len(clauses) != header[1]:
        raise CnfError(
            f"clause count mismatch: header declares {header[1]}, found {len(clauses)}"
        )
    if tautologies:
        metadata["tautologies"] = tautologies
    return Formula(header[0], tuple(clauses), metadata)


def _close_clause(
    lits: list[int], num_vars: int, clauses: list[Clause], tautologies: list[int]
) -> None:
    if not lits:
        raise CnfError("empty clause")
    seen: dict[int, None] = {}
    for lit in lits:
        if abs(lit) > num_vars:
            raise CnfError(f"variable {abs(lit)} exceeds header count {num_vars}")
        if lit not in seen:
            seen[lit] = None
    deduped = list(seen)
    if any(-lit in seen for lit in deduped):
        tautologies.append(len(clauses))
    clauses.append(tuple(Literal.from_int(x) for x in deduped))


def _coerce(value: str):
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            continue
    return value


def write_dimacs(f: Formula) -> str:
    """Serialize a formula; parse_dimacs(write_dimacs(f)) == f structurally."""
    lines = []
    if "seed" in f.metadata and "ratio" in f.metadata:
        lines.append(f"c seed={f.metadata['seed']} ratio={f.metadata['ratio']}")
    lines.append(f"p cnf {f.num_vars} {len(f.clauses)}")
    for cl in f.clauses:
        lines.append(" ".join(str(lit.to_int()) for lit in cl) + " 0")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Random 3-SAT generation
# --------------------------------------------------------------------------

def generate_random_3sat(n: int, ratio: float, seed: int) -> Formula:
    """Uniform random 3-SAT: floor(ratio*n) clauses, each over 3 distinct
    variables drawn without replacement, each literal negated with
    probability 1/2.  Deterministic in (n, ratio, seed); duplicate clauses
    are permitted (uniform model).
    """
    if n < 3:
        raise CnfError("need at least 3 variables for 3-SAT")
    if not ratio > 0:
        raise CnfError("ratio must be positive")
    # nudge past float representation error so floor(4.27 * 1500) = 6405
    m = int(math.floor(ratio * n + 1e-9))
    rng = make_generator(seed)
    clauses = []
    for _ in range(m):
        variables = rng.choice(n, size=3, replace=False) + 1
        signs = rng.integers(0, 2, size=3)
        clauses.append(
            tuple(Literal(int(v), bool(s)) for v, s in zip(variables, signs))
        )
    meta = {"seed": seed, "ratio": ratio, "instance_id": f"rand3sat_n{n}_s{seed}"}
    return Formula(n, tuple(clauses), meta)


# --------------------------------------------------------------------------
# SAT verdicts and DPLL
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SatVerdict:
    status: str  # "sat" | "unsat" | "unknown"
    assignment: tuple[bool, ...] | None = None
    decisions: int = 0

    @property
    def is_sat(self) -> bool:
        return self.status == "sat"

    @property
    def is_unsat(self) -> bool:
        return self.status == "unsat"

    @property
    def is_unknown(self) -> bool:
        return self.status == "unknown"


class _BudgetExhausted(Exception):
    pass


class _Dpll:
    """Trail-based DPLL with unit propagation and pure-literal elimination.

    Branching picks the most frequent variable among the shortest active
    clauses; polarity with more active occurrences is tried first.
    """

    def __init__(self, f: Formula):
        self.n = f.num_vars
        self.clauses = f.int_clauses()
        m = len(self.clauses)
        self.assign = [0] * (self.n + 1)  # 0 unassigned, 1 true, -1 false
        self.n_true = [0] * m
        self.n_unassigned = [len(cl) for cl in self.clauses]
        self.pos_occ = [[] for _ in range(self.n + 1)]
        self.neg_occ = [[] for _ in range(self.n + 1)]
        for ci, cl in enumerate(self.clauses):
            for lit in cl:
                (self.pos_occ if lit > 0 else self.neg_occ)[abs(lit)].append(ci)
        # active occurrence counts per literal, over unsatisfied clauses
        self.act_pos = [len(o) for o in self.pos_occ]
        self.act_neg = [len(o) for o in self.neg_occ]
        self.num_sat = 0
        self.trail: list[int] = []
        self.decisions = 0

    def occ(self, lit: int) -> list[int]:
        return self.pos_occ[lit] if lit > 0 else self.neg_occ[-lit]

    def _set(self, lit: int) -> bool:
        """Assign literal true; returns False on conflict."""
        var = abs(lit)
        self.assign[var] = 1 if lit > 0 else -1
        self.trail.append(lit)
        for ci in self.occ(lit):
            self.n_true[ci] += 1
            if self.n_true[ci] == 1:
                self.num_sat += 1
                for other in self.clauses[ci]:
                    if other > 0:
                        self.act_pos[other] -= 1
                    else:
                        self.act_neg[-other] -= 1
        conflict = False
        for ci in self.occ(-lit):
            self.n_unassigned[ci] -= 1
            if self.n_true[ci] == 0 and self.n_unassigned[ci] == 0:
                conflict = True
        return not conflict

    def _unset(self, lit: int) -> None:
        var = abs(lit)
        self.assign[var] = 0
        for ci in self.occ(lit):
            if self.n_true[ci] == 1:
                self.num_sat -= 1
                for other in self.clauses[ci]:
                    if other > 0:
                        self.act_pos[other] += 1
                    else:
                        self.act_neg[-other] += 1
            self.n_true[ci] -= 1
        for ci in self.occ(-lit):
            self.n_unassigned[ci] += 1

    def _backtrack_to(self, mark: int) -> None:
        while len(self.trail) > mark:
            self._unset(self.trail.pop())

    def _propagate(self) -> bool:
        """Unit propagation + pure literals to fixpoint; False on conflict."""
        changed = True
        while changed:
            changed = False
            # unit clauses
            for ci, cl in enumerate(self.clauses):
                if self.n_true[ci] == 0 and self.n_unassigned[ci] == 1:
                    unit = next(l for l in cl if self.assign[abs(l)] == 0)
                    if not self._set(unit):
                        return False
                    changed = True
            if changed:
                continue
            # pure literals
            for var in range(1, self.n + 1):
                if self.assign[var] != 0:
                    continue
                pos, neg = self.act_pos[var], self.act_neg[var]
                if pos > 0 and neg == 0:
                    if not self._set(var):
                        return False
                    changed = True
                elif neg > 0 and pos == 0:
                    if not self._set(-var):
                        return False
                    changed = True
        return True

    def _pick_branch(self) -> int:
        shortest = min(
            self.n_unassigned[ci]
            for ci in range(len(self.clauses))
            if self.n_true[ci] == 0
        )
        counts: dict[int, int] = {}
        for ci, cl in enumerate(self.clauses):
            if self.n_true[ci] == 0 and self.n_unassigned[ci] == shortest:
                for lit in cl:
                    var = abs(lit)
                    if self.assign[var] == 0:
                        counts[var] = counts.get(var, 0) + 1
        var = min(v for v, c in counts.items() if c == max(counts.values()))
        return var if self.act_pos[var] >= self.act_neg[var] else -var

    def _search(self, budget: int) -> bool:
        mark = len(self.trail)
        if not self._propagate():
            self._backtrack_to(mark)
            return False
        if self.num_sat == len(self.clauses):
            return True
        self.decisions += 1
        if self.decisions > budget:
            raise _BudgetExhausted
        branch = self._pick_branch()
        for lit in (branch, -branch):
            sub = len(self.trail)
            if self._set(lit) and self._search(budget):
                return True
            self._backtrack_to(sub)
        self._backtrack_to(mark)
        return False

    def model(self) -> tuple[bool, ...]:
        return tuple(self.assign[v] == 1 for v in range(1, self.n + 1))


def dpll_satisfiable(f: Formula, node_budget: int = 10**6) -> SatVerdict:
    """Complete SAT decision within a decision-node budget.

    Returns Satisfiable with a model (verified against the formula),
    Unsatisfiable, or Unknown when the budget runs out.
    """
    if not f.clauses:
        return SatVerdict("sat", tuple([False] * f.num_vars), 0)
    if f.num_vars > sys.getrecursionlimit() - 200:
        sys.setrecursionlimit(f.num_vars + 500)
    solver = _Dpll(f)
    try:
        sat = solver._search(node_budget)
    except _BudgetExhausted:
        return SatVerdict("unknown", None, solver.decisions)
    if sat:
        model = solver.model()
        assert evaluate(f, model)
        return SatVerdict("sat", model, solver.decisions)
    return SatVerdict("unsat", None, solver.decisions)


# --------------------------------------------------------------------------
# Simplification (fixpoint of unit propagation + pure literals)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SimplifyResult:
    formula: Formula
    removed_vars: int
    removed_clauses: int
    conflict: bool

    @property
    def num_vars_remaining(self) -> int:
        return self.formula.num_vars - self.removed_vars

    @property
    def num_clauses_remaining(self) -> int:
        return len(self.formula.clauses)


def simplify(f: Formula) -> SimplifyResult:
    """Reduce `f` by unit propagation and pure-literal elimination.

    The returned formula keeps the original variable numbering.  Removed
    variables are those assigned or absent from every remaining clause.
    A conflict yields a marker result (conflict=True, zero clauses).
    """
    solver = _Dpll(f)
    ok = solver._propagate()
    if not ok:
        marker = Formula(f.num_vars, (), dict(f.metadata, conflict=True))
        return SimplifyResult(marker, f.num_vars, len(f.clauses), True)
    remaining: list[Clause] = []
    live_vars: set[int] = set()
    for ci, cl in enumerate(solver.clauses):
        if solver.n_true[ci] > 0:
            continue
        lits = tuple(
            Literal.from_int(l) for l in cl if solver.assign[abs(l)] == 0
        )
        remaining.append(lits)
        live_vars.update(lit.variable for lit in lits)
    reduced = Formula(f.num_vars, tuple(remaining), dict(f.metadata))
    return SimplifyResult(
        reduced,
        removed_vars=f.num_vars - len(live_vars),
        removed_clauses=len(f.clauses) - len(remaining),
        conflict=False,
    )
