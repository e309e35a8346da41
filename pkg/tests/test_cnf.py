import itertools

import pytest
from hypothesis import given, settings, strategies as st

from restartlab import cnf
from restartlab.cnf import CnfError, Formula, clause


def test_parse_basic():
    f = cnf.parse_dimacs("p cnf 2 2\n1 2 0\n-1 2 0\n")
    assert f.num_vars == 2
    assert f.int_clauses() == [[1, 2], [-1, 2]]


def test_parse_skips_comments():
    f = cnf.parse_dimacs("c comment\np cnf 1 1\n1 0\n")
    assert f.num_vars == 1
    assert f.int_clauses() == [[1]]


def test_parse_clause_count_mismatch():
    with pytest.raises(CnfError, match="mismatch"):
        cnf.parse_dimacs("p cnf 1 2\n1 0\n")


def test_parse_errors():
    with pytest.raises(CnfError):
        cnf.parse_dimacs("p dnf 1 1\n1 0\n")
    with pytest.raises(CnfError):
        cnf.parse_dimacs("p cnf 1 1\n2 0\n")  # variable beyond header
    with pytest.raises(CnfError):
        cnf.parse_dimacs("p cnf 2 1\n1 2\n")  # unterminated clause
    with pytest.raises(CnfError):
        cnf.parse_dimacs("1 0\np cnf 1 1\n")  # clause before header


def test_parse_deduplicates_and_flags_tautology():
    f = cnf.parse_dimacs("p cnf 2 2\n1 1 2 0\n1 -1 0\n")
    assert f.int_clauses()[0] == [1, 2]
    assert f.metadata["tautologies"] == [1]


def test_parse_clause_spanning_lines():
    f = cnf.parse_dimacs("p cnf 3 1\n1 2\n3 0\n")
    assert f.int_clauses() == [[1, 2, 3]]


def test_write_examples():
    assert cnf.write_dimacs(Formula(1, (clause(1),))) == "p cnf 1 1\n1 0\n"
    assert cnf.write_dimacs(Formula(2, (clause(-1, 2),))) == "p cnf 2 1\n-1 2 0\n"


def test_round_trip_generated():
    f = cnf.generate_random_3sat(100, 4.26, seed=3)
    g = cnf.parse_dimacs(cnf.write_dimacs(f))
    assert g == f  # structural equality ignores metadata
    assert g.metadata["seed"] == 3


@settings(max_examples=50, deadline=None)
@given(st.data())
def test_round_trip_property(data):
    num_vars = data.draw(st.integers(1, 8))
    clauses = data.draw(
        st.lists(
            st.lists(
                st.integers(1, num_vars).flatmap(
                    lambda v: st.sampled_from([v, -v])
                ),
                min_size=1,
                max_size=4,
                unique_by=abs,
            ),
            min_size=0,
            max_size=6,
        )
    )
    f = Formula(num_vars, tuple(clause(*cl) for cl in clauses))
    assert cnf.parse_dimacs(cnf.write_dimacs(f)) == f


def test_generator_contract():
    f = cnf.generate_random_3sat(100, 4.26, seed=7)
    assert f.num_clauses == 426
    for cl in f.clauses:
        assert len(cl) == 3
        assert len({lit.variable for lit in cl}) == 3
    assert cnf.generate_random_3sat(100, 4.26, seed=7) == f
    assert cnf.generate_random_3sat(100, 4.26, seed=8) != f


def test_generator_paper_scale_clause_count():
    f = cnf.generate_random_3sat(1500, 4.27, seed=1)
    assert f.num_clauses == 6405


def test_generator_rejects_bad_inputs():
    with pytest.raises(CnfError):
        cnf.generate_random_3sat(2, 4.26, seed=1)
    with pytest.raises(CnfError):
        cnf.generate_random_3sat(10, -1.0, seed=1)


def _truth_table_sat(f: Formula):
    for bits in itertools.product([False, True], repeat=f.num_vars):
        if cnf.evaluate(f, bits):
            return True
    return False


def test_dpll_examples():
    assert cnf.dpll_satisfiable(Formula(1, (clause(1), clause(-1)))).is_unsat
    v = cnf.dpll_satisfiable(Formula(2, (clause(1, 2), clause(-1, 2))))
    assert v.is_sat
    assert v.assignment[1] is True  # x2 true in every model


def test_dpll_budget_exhaustion():
    f = cnf.generate_random_3sat(60, 4.3, seed=12)
    v = cnf.dpll_satisfiable(f, node_budget=1)
    assert v.is_unknown


def test_dpll_agrees_with_truth_table():
    from restartlab.rngutil import make_generator

    rng = make_generator(42)
    for _ in range(60):
        n = int(rng.integers(2, 13))
        ratio = float(rng.uniform(1.0, 5.5))
        f = cnf.generate_random_3sat(max(n, 3), ratio, seed=int(rng.integers(2**32)))
        v = cnf.dpll_satisfiable(f)
        assert not v.is_unknown
        assert v.is_sat == _truth_table_sat(f)
        if v.is_sat:
            assert cnf.evaluate(f, v.assignment)


def test_simplify_unit_propagation():
    r = cnf.simplify(Formula(2, (clause(1), clause(1, 2))))
    assert r.num_clauses_remaining == 0
    assert not r.conflict


def test_simplify_pure_literals():
    r = cnf.simplify(Formula(3, (clause(1, 2, 3),)))
    assert r.num_clauses_remaining == 0


def test_simplify_conflict_marker():
    r = cnf.simplify(Formula(3, (clause(1), clause(-1), clause(2, 3))))
    assert r.conflict
    assert r.formula.metadata["conflict"] is True
    assert len(r.formula.clauses) == 0


def test_simplify_preserves_satisfiability():
    from restartlab.rngutil import make_generator

    rng = make_generator(9)
    checked = 0
    for _ in range(40):
        n = int(rng.integers(3, 13))
        f = cnf.generate_random_3sat(n, float(rng.uniform(2.0, 5.0)), seed=int(rng.integers(2**32)))
        before = cnf.dpll_satisfiable(f)
        r = cnf.simplify(f)
        if r.conflict:
            assert before.is_unsat
            continue
        if r.formula.clauses:
            after = cnf.dpll_satisfiable(r.formula)
            assert before.is_sat == after.is_sat
        else:
            assert before.is_sat
        checked += 1
    assert checked > 10


def test_evaluate_rejects_short_assignment():
    with pytest.raises(CnfError):
        cnf.evaluate(Formula(2, (clause(1, 2),)), (True,))


def test_formula_validation():
    with pytest.raises(CnfError):
        Formula(1, (clause(2),))
    with pytest.raises(CnfError):
        Formula(1, ((),))
