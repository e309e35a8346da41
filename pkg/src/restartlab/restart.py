"""Restart policies and the policy-executing run loop.

Three policies are supported: never restarting, restarting every t flips
(fixed cutoff), and the Luby universal schedule scaled by an init
multiplier.  Each try draws a fresh substream seed, so a restart genuinely
resamples the initial assignment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Union

from .cnf import Formula
from .probsat import RunOutcome, SolverConfig, solve_once
from .rngutil import substream_seed


@dataclass(frozen=True)
class NoRestart:
    def __str__(self) -> str:
        return "none"


@dataclass(frozen=True)
class FixedCutoff:
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise ValueError("cutoff must be at least 1")

    def __str__(self) -> str:
        return f"fixed:{self.t}"


@dataclass(frozen=True)
class Luby:
    a: int

    def __post_init__(self):
        if self.a < 1:
            raise ValueError("Luby init multiplier must be at least 1")

    def __str__(self) -> str:
        return f"luby:{self.a}"


RestartPolicy = Union[NoRestart, FixedCutoff, Luby]


def parse_policy(text: str) -> RestartPolicy:
    """Parse "none", "fixed:<t>" or "luby:<a>"."""
    if text == "none":
        return NoRestart()
    kind, _, arg = text.partition(":")
    if kind == "fixed" and arg:
        return FixedCutoff(int(arg))
    if kind == "luby" and arg:
        return Luby(int(arg))
    raise ValueError(f"unrecognized policy {text!r}")


def luby_term(i: int) -> int:
    """The i-th term (1-based) of the Luby sequence 1,1,2,1,1,2,4,...

    t_i = 2^(k-1) when i = 2^k - 1, otherwise t_{i - 2^(k-1) + 1} with k
    the smallest integer such that 2^k - 1 >= i.  Iterative, so deep
    indices cost O(log i) with no recursion.
    """
    if i < 1:
        raise ValueError("Luby index is 1-based")
    while i & (i + 1):
        k = i.bit_length()
        i -= (1 << (k - 1)) - 1
    return (i + 1) >> 1


def luby_schedule(a: int) -> Iterator[int]:
    """Restart times T_i = a * t_i for i = 1, 2, ..."""
    if a < 1:
        raise ValueError("Luby init multiplier must be at least 1")
    i = 1
    while True:
        yield a * luby_term(i)
        i += 1


@dataclass(frozen=True)
class RestartedRunOutcome:
    solved: bool
    total_flips: int
    restarts: int
    per_try_flips: tuple[int, ...]
    assignment: tuple[bool, ...] | None = None


def _try_budgets(policy: RestartPolicy, total_budget: int) -> Iterator[int]:
    if isinstance(policy, NoRestart):
        yield total_budget
    elif isinstance(policy, FixedCutoff):
        while True:
            yield policy.t
    elif isinstance(policy, Luby):
        yield from luby_schedule(policy.a)
    else:
        raise TypeError(f"unknown policy {policy!r}")


def run_with_policy(
    f: Formula,
    cfg: SolverConfig,
    policy: RestartPolicy,
    total_budget: int,
) -> RestartedRunOutcome:
    """Execute tries with per-try budgets drawn from the policy until the
    formula is solved or total_budget flips are spent.

    Try j runs with the substream seed derived from (cfg.seed, j); the
    final try is truncated so the total never exceeds the budget.
    """
    if total_budget < 1:
        raise ValueError("total_budget must be at least 1")
    per_try: list[int] = []
    spent = 0
    outcome: RunOutcome | None = None
    for try_index, budget in enumerate(_try_budgets(policy, total_budget)):
        budget = min(budget, total_budget - spent)
        try_cfg = cfg.with_seed(substream_seed(cfg.seed, try_index)).with_max_flips(
            budget
        )
        outcome = solve_once(f, try_cfg)
        per_try.append(outcome.flips)
        spent += outcome.flips
        if outcome.solved or spent >= total_budget:
            break
    assert outcome is not None
    return RestartedRunOutcome(
        solved=outcome.solved,
        total_flips=spent,
        restarts=len(per_try) - 1,
        per_try_flips=tuple(per_try),
        assignment=outcome.assignment,
    )
