import sys
from pathlib import Path

import numpy as np
import pytest

from restartlab import cnf, probsat
from restartlab.cnf import Formula, clause
from restartlab.probsat import SolverConfig
from restartlab.rngutil import make_generator, substream_seed

sys.path.insert(0, str(Path(__file__).parent))
from reference_sls import reference_solve  # noqa: E402


CFG = SolverConfig(seed=42)


class TestFlipProbabilities:
    def test_break_only_derived_values(self):
        # f = (1, 2^-2.3, 3^-2.3), normalized
        raw = np.array([1.0, 2.0**-2.3, 3.0**-2.3])
        expected = raw / raw.sum()
        got = probsat.flip_probabilities([0, 1, 2], [0, 0, 0], CFG)
        assert np.allclose(got, expected, atol=1e-12)
        assert np.allclose(got, [0.7794, 0.1583, 0.0623], atol=1e-3)

    def test_symmetry(self):
        assert np.allclose(
            probsat.flip_probabilities([0, 0, 0], [0, 0, 0], CFG), [1 / 3] * 3
        )

    def test_single_literal(self):
        assert probsat.flip_probabilities([5], [0], CFG) == pytest.approx([1.0])

    def test_normalization(self):
        rng = make_generator(1)
        for _ in range(20):
            breaks = rng.integers(0, 30, size=int(rng.integers(1, 8)))
            p = probsat.flip_probabilities(breaks, np.zeros_like(breaks), CFG)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_scale_invariance_under_shift(self):
        # equal break vectors shifted by a constant change every f value by
        # the same factor only if f is a pure power; the invariance under
        # multiplying all f values is what normalization guarantees
        p1 = probsat.flip_probabilities([2, 2, 2], [0, 0, 0], CFG)
        assert np.allclose(p1, [1 / 3] * 3)

    def test_monotone_in_break(self):
        p = probsat.flip_probabilities([0, 1, 2, 5], [0] * 4, CFG)
        assert all(a > b for a, b in zip(p, p[1:]))

    def test_make_values_used_when_cm_positive(self):
        cfg = SolverConfig(c_m=1.0, seed=0)
        p = probsat.flip_probabilities([0, 0], [1, 3], cfg)
        assert p[1] == pytest.approx(3 * p[0])

    def test_make_zero_with_cm_zero_is_neutral(self):
        p = probsat.flip_probabilities([1, 1], [0, 7], CFG)
        assert p[0] == pytest.approx(p[1])

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            probsat.flip_probabilities([], [], CFG)


class TestSolveOnce:
    def test_single_clause_at_most_one_flip(self):
        for seed in range(20):
            out = probsat.solve_once(Formula(1, (clause(1),)), CFG.with_seed(seed))
            assert out.solved
            assert out.flips <= 1
            assert out.assignment == (True,)

    def test_unsat_exhausts_budget(self):
        f = Formula(1, (clause(1), clause(-1)))
        out = probsat.solve_once(f, SolverConfig(seed=5, max_flips=100))
        assert not out.solved
        assert out.flips == 100
        assert out.assignment is None

    def test_deterministic_in_seed(self):
        f = cnf.generate_random_3sat(30, 4.0, seed=2)
        a = probsat.solve_once(f, CFG)
        b = probsat.solve_once(f, CFG)
        assert a == b
        c = probsat.solve_once(f, CFG.with_seed(43))
        assert a != c

    def test_matches_reference_implementation(self):
        """The jitted core must agree flip-for-flip with a from-scratch
        reference that recomputes break values and clause states."""
        rng = make_generator(7)
        for _ in range(25):
            n = int(rng.integers(4, 14))
            f = cnf.generate_random_3sat(
                n, float(rng.uniform(1.5, 5.0)), seed=int(rng.integers(2**32))
            )
            seed = int(rng.integers(2**63))
            cm = float(rng.choice([0.0, 1.0]))
            cfg = SolverConfig(c_b=2.3, c_m=cm, max_flips=150, seed=seed)
            got = probsat.solve_once(f, cfg)
            solved, flips, values = reference_solve(
                f.int_clauses(), n, 2.3, cm, 150, seed
            )
            assert got.solved == solved
            assert got.flips == flips  # instrumented flip-event counter
            if solved:
                assert got.assignment == values

    def test_solved_assignment_verifies(self):
        rng = make_generator(3)
        for _ in range(20):
            f = cnf.generate_random_3sat(15, 3.0, seed=int(rng.integers(2**32)))
            out = probsat.solve_once(f, CFG.with_seed(int(rng.integers(2**32))))
            if out.solved:
                assert cnf.evaluate(f, out.assignment)

    def test_smoke_success_rate(self):
        """Satisfiable small formulas are solved in >= 99% of seeded runs."""
        rng = make_generator(11)
        formulas = []
        while len(formulas) < 10:
            f = cnf.generate_random_3sat(20, 3.5, seed=int(rng.integers(2**32)))
            if cnf.dpll_satisfiable(f).is_sat:
                formulas.append(f)
        successes = 0
        for i, f in enumerate(formulas):
            for j in range(10):
                cfg = SolverConfig(max_flips=10**6, seed=substream_seed(i, j))
                successes += probsat.solve_once(f, cfg).solved
        assert successes >= 99


class TestProbeRun:
    def test_trajectory_monotone_and_solved(self):
        f = cnf.generate_random_3sat(20, 3.0, seed=4)
        t = probsat.probe_run(f, CFG, 5000)
        unsats = [u for _s, u in t.best_unsat_trajectory]
        assert all(a > b for a, b in zip(unsats, unsats[1:]))
        if t.solved:
            assert t.best_solution_unsat == 0
            assert unsats[-1] == 0

    def test_single_flip_boundary(self):
        f = cnf.generate_random_3sat(10, 4.0, seed=9)
        t = probsat.probe_run(f, CFG, 1)
        assert len(t.best_unsat_trajectory) <= 2
        assert t.first_local_min_step in (0, 1)

    def test_first_local_min_after_stall(self):
        f = Formula(1, (clause(1), clause(-1)))  # never improves past 1
        t = probsat.probe_run(f, CFG, 200)
        assert t.best_solution_unsat == 1
        assert t.first_local_min_step == 0

    def test_probe_deterministic(self):
        f = cnf.generate_random_3sat(25, 4.0, seed=6)
        assert probsat.probe_run(f, CFG, 500) == probsat.probe_run(f, CFG, 500)

    def test_probe_does_not_disturb_solve_stream(self):
        f = cnf.generate_random_3sat(25, 4.2, seed=8)
        budget = 300
        out = probsat.solve_once(f, CFG.with_max_flips(budget))
        t = probsat.probe_run(f, CFG, budget)
        assert t.solved == out.solved
        assert t.probe_flips == out.flips

    def test_probe_flips_validation(self):
        with pytest.raises(ValueError):
            probsat.probe_run(Formula(1, (clause(1),)), CFG, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(c_b=0.0)
    with pytest.raises(ValueError):
        SolverConfig(c_m=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(max_flips=0)
