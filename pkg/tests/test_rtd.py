import numpy as np
import pytest

from restartlab import cnf, dist, rtd
from restartlab.cnf import Formula, clause
from restartlab.dist import DistFamily, DistParams, FitResult
from restartlab.probsat import SolverConfig
from restartlab.rngutil import make_generator

CFG = SolverConfig(seed=0)
L, W, GP = DistFamily.LOGNORMAL, DistFamily.WEIBULL, DistFamily.GP


def _sample(flips, censored=0, timeout=10**6):
    return rtd.RtdSample("t", tuple(sorted(flips)), censored, timeout, 0)


class TestSampleRtd:
    def test_trivial_instance_all_succeed(self):
        f = Formula(1, (clause(1),))
        f.metadata["instance_id"] = "one"
        s = rtd.sample_rtd(f, CFG, 100, master_seed=1, per_run_timeout=10)
        assert s.total_runs == 100
        assert s.censored == 0
        assert all(x <= 1 for x in s.flips)
        assert s.instance_id == "one"

    def test_unsat_all_censored(self):
        f = Formula(1, (clause(1), clause(-1)))
        s = rtd.sample_rtd(f, CFG, 5, master_seed=1, per_run_timeout=1000)
        assert s.censored == 5
        assert s.flips == ()

    def test_worker_count_does_not_change_result(self):
        f = cnf.generate_random_3sat(25, 4.0, seed=3)
        a = rtd.sample_rtd(f, CFG, 24, master_seed=9, per_run_timeout=10**5, workers=1)
        b = rtd.sample_rtd(f, CFG, 24, master_seed=9, per_run_timeout=10**5, workers=4)
        assert a == b

    def test_flips_sorted_and_run_count_conserved(self):
        f = cnf.generate_random_3sat(20, 4.2, seed=4)
        s = rtd.sample_rtd(f, CFG, 30, master_seed=2, per_run_timeout=500)
        assert list(s.flips) == sorted(s.flips)
        assert len(s.flips) + s.censored == 30

    def test_json_round_trip(self):
        s = _sample([3, 5, 5, 9], censored=2)
        assert rtd.RtdSample.from_dict(s.to_dict()) == s


class TestEcdf:
    def test_basic_steps(self):
        assert rtd.ecdf(_sample([2, 5, 9])) == [(2, 1 / 3), (5, 2 / 3), (9, 1.0)]

    def test_censored_mass_withheld(self):
        assert rtd.ecdf(_sample([2, 5], censored=2)) == [(2, 0.25), (5, 0.5)]

    def test_duplicates_merge_to_larger_level(self):
        assert rtd.ecdf(_sample([4, 4, 7])) == [(4, 2 / 3), (7, 1.0)]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            rtd.ecdf(_sample([], censored=3))


class TestWinnerSelection:
    def _fit(self, family, p_value):
        return FitResult(family, DistParams(1.0, 1.0, 0.0), 0.1, p_value, 0.0)

    def test_highest_p_wins(self):
        fits = {W: self._fit(W, 0.8), L: self._fit(L, 0.3), GP: self._fit(GP, 0.5)}
        assert rtd.select_winner(fits, 0.05) is W

    def test_all_below_alpha_gives_none(self):
        fits = {W: self._fit(W, 0.01), L: self._fit(L, 0.02), GP: self._fit(GP, 0.04)}
        assert rtd.select_winner(fits, 0.05) is None

    def test_tie_breaks_by_family_order(self):
        fits = {W: self._fit(W, 0.5), L: self._fit(L, 0.5), GP: self._fit(GP, 0.5)}
        assert rtd.select_winner(fits, 0.05) is W
        fits = {W: self._fit(W, 0.01), L: self._fit(L, 0.5), GP: self._fit(GP, 0.5)}
        assert rtd.select_winner(fits, 0.05) is L

    def test_alpha_boundary_inclusive(self):
        fits = {W: self._fit(W, 0.05), L: self._fit(L, 0.01), GP: self._fit(GP, 0.01)}
        assert rtd.select_winner(fits, 0.05) is W


class TestFitAll:
    def test_synthetic_weibull_usually_wins(self):
        """RTD-shaped synthetic draws should be recognized as Weibull in a
        clear majority of seeded trials."""
        truth = DistParams(0.7, 1e5, 1e3)
        wins = 0
        for seed in range(25):
            rng = make_generator(seed)
            draws = np.rint(dist.sample(W, truth, 300, rng)).astype(int)
            s = rtd.RtdSample("syn", tuple(sorted(draws)), 0, 10**9, seed)
            sel = rtd.fit_all(s)
            wins += sel.winner is W
        assert wins >= 20

    def test_rejects_too_few_uncensored(self):
        with pytest.raises(ValueError, match="at least 10"):
            rtd.fit_all(_sample([5] * 9))

    def test_rejects_heavy_censoring(self):
        with pytest.raises(ValueError, match="censored"):
            rtd.fit_all(_sample(list(range(1, 21)), censored=10))

    def test_fit_all_returns_three_families(self):
        rng = make_generator(0)
        draws = np.rint(dist.sample(W, DistParams(0.9, 5e4, 2e3), 200, rng)).astype(int)
        s = rtd.RtdSample("syn", tuple(sorted(draws)), 0, 10**9, 0)
        sel = rtd.fit_all(s)
        assert set(sel.all_fits) == {L, W, GP}
        for fit in sel.all_fits.values():
            assert 0.0 <= fit.ks_stat <= 1.0
            assert 0.0 <= fit.p_value <= 1.0


class TestEmpiricalOptimal:
    def test_hand_enumerated_example(self):
        # at x=1: 2*1 + 1 = 3; at x=2: 1*2/2... ((1-2/3)/(2/3))*2 + 1.5 = 2.5;
        # at x=100: 0 + 103/3
        x_star, e_hat = rtd.empirical_optimal(_sample([1, 2, 100]))
        assert (x_star, e_hat) == (2, 2.5)

    def test_all_equal(self):
        assert rtd.empirical_optimal(_sample([1, 1, 1])) == (1, 1.0)

    def test_single_observation(self):
        assert rtd.empirical_optimal(_sample([5])) == (5, 5.0)

    def test_censored_runs_count_in_denominator(self):
        # with 1 censored run: at x=10, p = 3/4 -> (1/3)*10 + 10 = 13.333...
        x_star, e_hat = rtd.empirical_optimal(_sample([10, 10, 10], censored=1))
        assert x_star == 10
        assert e_hat == pytest.approx((1 / 3) * 10 + 10)

    def test_matches_bruteforce_oracle(self):
        rng = make_generator(12)
        for _ in range(100):
            n = int(rng.integers(1, 51))
            flips = sorted(int(v) for v in rng.integers(1, 10**6, size=n))
            censored = int(rng.integers(0, 4))
            s = _sample(flips, censored=censored)
            got = rtd.empirical_optimal(s)
            # brute force: double loop over candidate cutoffs and partials
            best = None
            total = n + censored
            for x in sorted(set(flips)):
                below = [v for v in flips if v <= x]
                p = len(below) / total
                value = (1 - p) / p * x + sum(below) / len(below)
                if best is None or value < best[1] - 1e-12:
                    best = (x, value)
            assert got[0] == best[0]
            assert got[1] == pytest.approx(best[1], abs=1e-9)

    def test_never_worse_than_mean(self):
        rng = make_generator(13)
        for _ in range(50):
            flips = sorted(int(v) for v in rng.integers(1, 10**5, size=20))
            s = _sample(flips)
            _x, e_hat = rtd.empirical_optimal(s)
            assert e_hat <= np.mean(flips) + 1e-9

    def test_no_uncensored_rejected(self):
        with pytest.raises(ValueError):
            rtd.empirical_optimal(_sample([], censored=5))


class TestEmpiricalRestartValue:
    def test_cutoff_beyond_max_gives_plain_mean(self):
        s = _sample([10, 20, 30])
        assert rtd.empirical_restart_value(s, 10**9) == pytest.approx(20.0)

    def test_cutoff_below_min_gives_plain_mean(self):
        s = _sample([10, 20, 30])
        assert rtd.empirical_restart_value(s, 5) == pytest.approx(20.0)

    def test_interior_cutoff_uses_largest_observation_at_or_below(self):
        s = _sample([10, 20, 30])
        # t = 25 -> x = 20, p = 2/3: (1/2)*20 + 15 = 25
        assert rtd.empirical_restart_value(s, 25.0) == pytest.approx(25.0)

    def test_at_optimal_cutoff_agrees_with_empirical_optimal(self):
        rng = make_generator(14)
        flips = sorted(int(v) for v in rng.integers(1, 10**5, size=40))
        s = _sample(flips)
        x_star, e_hat = rtd.empirical_optimal(s)
        assert rtd.empirical_restart_value(s, float(x_star)) == pytest.approx(e_hat)
