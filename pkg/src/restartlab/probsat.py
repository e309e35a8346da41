"""Break-only-poly stochastic local search SAT solver with instrumented
flip counting and probing runs.

Each try starts from a uniformly random assignment.  While unsatisfied
clauses remain and the flip budget is not exhausted, an unsatisfied clause
is picked uniformly at random and one of its variables is flipped, chosen
with probability proportional to f(v) = make(v)^c_m / (1 + break(v))^c_b.
The default configuration (c_b = 2.3, c_m = 0) ignores make values.

A run is a pure function of (formula, config): identical seeds give
identical outcomes, which is what makes parallel runtime-distribution
sampling reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _probsat_core
from .cnf import Formula

DEFAULT_CB = 2.3
DEFAULT_CM = 0.0

# window of consecutive non-improving flips after which the incumbent best
# is declared the first local minimum of a probe
STALL_WINDOW = 50


@dataclass(frozen=True)
class SolverConfig:
    c_b: float = DEFAULT_CB
    c_m: float = DEFAULT_CM
    max_flips: int = 10**6
    seed: int = 0

    def __post_init__(self):
        if not self.c_b > 0:
            raise ValueError("c_b must be positive")
        if self.c_m < 0:
            raise ValueError("c_m must be non-negative")
        if self.max_flips < 1:
            raise ValueError("max_flips must be at least 1")

    def with_seed(self, seed: int) -> "SolverConfig":
        return replace(self, seed=seed)

    def with_max_flips(self, max_flips: int) -> "SolverConfig":
        return replace(self, max_flips=max_flips)


@dataclass(frozen=True)
class RunOutcome:
    solved: bool
    flips: int
    assignment: tuple[bool, ...] | None = None


@dataclass(frozen=True)
class ProbeTrace:
    best_unsat_trajectory: tuple[tuple[int, int], ...]
    first_local_min_step: int
    best_solution_unsat: int
    probe_flips: int
    solved: bool

    @property
    def initial_unsat(self) -> int:
        return int(self.best_unsat_trajectory[0][1])

    @property
    def best_step(self) -> int:
        return int(self.best_unsat_trajectory[-1][0])


def flip_probabilities(
    break_values: Sequence[int],
    make_values: Sequence[int],
    cfg: SolverConfig,
) -> np.ndarray:
    """Normalized flip distribution over a clause's variables.

    With c_m = 0 the make values are ignored entirely (0**0 is taken as 1),
    reducing f to the break-only polynomial form.
    """
    if len(break_values) == 0:
        raise ValueError("empty break-value list")
    if len(break_values) != len(make_values):
        raise ValueError("break and make lists must have equal length")
    br = np.asarray(break_values, dtype=float)
    weights = (1.0 + br) ** (-cfg.c_b)
    if cfg.c_m != 0.0:
        mk = np.asarray(make_values, dtype=float)
        weights = weights * mk**cfg.c_m
    return weights / weights.sum()


@lru_cache(maxsize=128)
def _compile(f: Formula):
    """Flatten a formula into the CSR arrays consumed by the jitted core."""
    n = f.num_vars
    m = len(f.clauses)
    clause_start = np.zeros(m + 1, np.int32)
    lits = []
    for ci, cl in enumerate(f.clauses):
        for lit in cl:
            lits.append(((lit.variable - 1) << 1) | int(lit.negated))
        clause_start[ci + 1] = len(lits)
    clause_lits = np.asarray(lits, dtype=np.int32) if lits else np.zeros(0, np.int32)

    counts = np.zeros(2 * n + 1, np.int64)
    for code in clause_lits:
        counts[code + 1] += 1
    occ_start = np.cumsum(counts).astype(np.int32)
    occ_clause = np.empty(len(clause_lits), np.int32)
    cursor = occ_start[:-1].copy()
    for ci in range(m):
        for k in range(clause_start[ci], clause_start[ci + 1]):
            code = clause_lits[k]
            occ_clause[cursor[code]] = ci
            cursor[code] += 1
    return n, clause_start, clause_lits, occ_start, occ_clause


def _run(f: Formula, cfg: SolverConfig, max_flips: int, record_trace: bool):
    n, clause_start, clause_lits, occ_start, occ_clause = _compile(f)
    return _probsat_core.run_probsat(
        n,
        clause_start,
        clause_lits,
        occ_start,
        occ_clause,
        float(cfg.c_b),
        float(cfg.c_m),
        int(max_flips),
        np.uint64(int(cfg.seed) & 0xFFFFFFFFFFFFFFFF),
        record_trace,
        STALL_WINDOW,
    )


def solve_once(f: Formula, cfg: SolverConfig) -> RunOutcome:
    """One independent probSAT try with budget cfg.max_flips."""
    solved, flips, values, *_ = _run(f, cfg, cfg.max_flips, False)
    assignment = tuple(bool(v) for v in values) if solved else None
    return RunOutcome(bool(solved), int(flips), assignment)


def probe_run(f: Formula, cfg: SolverConfig, probe_flips: int) -> ProbeTrace:
    """Run the solver for exactly probe_flips flips (or until solved),
    recording the best-so-far unsatisfied-clause trajectory."""
    if probe_flips < 1:
        raise ValueError("probe_flips must be at least 1")
    (
        solved,
        flips,
        _values,
        best_unsat,
        _best_step,
        first_local_min,
        traj_steps,
        traj_unsat,
        traj_len,
    ) = _run(f, cfg, probe_flips, True)
    trajectory = tuple(
        (int(traj_steps[i]), int(traj_unsat[i])) for i in range(traj_len)
    )
    return ProbeTrace(
        best_unsat_trajectory=trajectory,
        first_local_min_step=int(first_local_min),
        best_solution_unsat=int(best_unsat),
        probe_flips=int(flips),
        solved=bool(solved),
    )
