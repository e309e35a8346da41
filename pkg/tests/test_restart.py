from functools import lru_cache

import pytest

from restartlab import cnf, probsat, restart
from restartlab.cnf import Formula, clause
from restartlab.probsat import SolverConfig
from restartlab.rngutil import substream_seed

UNSAT = Formula(1, (clause(1), clause(-1)))
CFG = SolverConfig(seed=42)


@lru_cache(maxsize=None)
def luby_bruteforce(i: int) -> int:
    """Literal recursive definition, memoized."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    if (1 << k) - 1 == i:
        return 1 << (k - 1)
    return luby_bruteforce(i - (1 << (k - 1)) + 1)


class TestLubyTerm:
    def test_first_fifteen(self):
        assert [restart.luby_term(i) for i in range(1, 16)] == [
            1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8,
        ]

    def test_power_positions(self):
        for k in range(1, 21):
            assert restart.luby_term((1 << k) - 1) == 1 << (k - 1)

    def test_matches_bruteforce_exhaustively(self):
        for i in range(1, 2**15 + 1):
            assert restart.luby_term(i) == luby_bruteforce(i)

    def test_self_similarity(self):
        for i in range(1, 2**15 + 1):
            if i & (i + 1):
                k = i.bit_length()
                assert restart.luby_term(i) == restart.luby_term(i - (1 << (k - 1)) + 1)

    def test_reduces_to_t1(self):
        assert restart.luby_term(4) == 1

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            restart.luby_term(0)


def test_luby_schedule_scales_by_init():
    sched = restart.luby_schedule(20)
    assert [next(sched) for _ in range(7)] == [20, 20, 40, 20, 20, 40, 80]


class TestRunWithPolicy:
    def test_norestart_equals_solve_once(self):
        f = cnf.generate_random_3sat(25, 4.2, seed=5)
        budget = 10**5
        got = restart.run_with_policy(f, CFG, restart.NoRestart(), budget)
        direct = probsat.solve_once(
            f, CFG.with_seed(substream_seed(CFG.seed, 0)).with_max_flips(budget)
        )
        assert got.solved == direct.solved
        assert got.total_flips == direct.flips
        assert got.per_try_flips == (direct.flips,)
        assert got.assignment == direct.assignment

    def test_fixed_cutoff_budget_arithmetic(self):
        out = restart.run_with_policy(UNSAT, CFG, restart.FixedCutoff(10), 35)
        assert not out.solved
        assert out.per_try_flips == (10, 10, 10, 5)
        assert out.restarts == 3
        assert out.total_flips == 35

    def test_luby_budget_truncation(self):
        out = restart.run_with_policy(UNSAT, CFG, restart.Luby(2), 12)
        assert out.per_try_flips == (2, 2, 4, 2, 2)
        assert out.total_flips == 12

    def test_total_never_exceeds_budget(self):
        f = cnf.generate_random_3sat(30, 4.2, seed=3)
        for policy in (restart.NoRestart(), restart.FixedCutoff(37), restart.Luby(11)):
            for budget in (1, 50, 1000):
                out = restart.run_with_policy(f, CFG, policy, budget)
                assert out.total_flips <= budget
                assert sum(out.per_try_flips) == out.total_flips
                assert out.restarts == len(out.per_try_flips) - 1
                if not out.solved:
                    assert out.total_flips == budget

    def test_cutoff_beyond_budget_is_norestart(self):
        f = cnf.generate_random_3sat(25, 4.2, seed=6)
        budget = 5000
        wide = restart.run_with_policy(f, CFG, restart.FixedCutoff(budget * 10), budget)
        none = restart.run_with_policy(f, CFG, restart.NoRestart(), budget)
        assert wide == none

    def test_deterministic(self):
        f = cnf.generate_random_3sat(25, 4.2, seed=7)
        a = restart.run_with_policy(f, CFG, restart.Luby(50), 10**5)
        b = restart.run_with_policy(f, CFG, restart.Luby(50), 10**5)
        assert a == b

    def test_solved_assignment_verifies(self):
        f = cnf.generate_random_3sat(25, 4.0, seed=8)
        out = restart.run_with_policy(f, CFG, restart.FixedCutoff(200), 10**6)
        if out.solved:
            assert cnf.evaluate(f, out.assignment)

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            restart.run_with_policy(UNSAT, CFG, restart.NoRestart(), 0)


def test_policy_serialization_round_trip():
    for policy in (restart.NoRestart(), restart.FixedCutoff(123), restart.Luby(3000)):
        assert restart.parse_policy(str(policy)) == policy
    assert str(restart.FixedCutoff(9)) == "fixed:9"
    assert str(restart.Luby(7)) == "luby:7"
    assert str(restart.NoRestart()) == "none"
    with pytest.raises(ValueError):
        restart.parse_policy("often")


def test_policy_validation():
    with pytest.raises(ValueError):
        restart.FixedCutoff(0)
    with pytest.raises(ValueError):
        restart.Luby(0)
