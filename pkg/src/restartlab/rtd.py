"""Empirical runtime distributions: sampling, fitting, winner selection,
and the data-driven optimal-restart estimator.

A runtime distribution (RTD) of an instance is sampled by independent
solver runs measured in flips.  Runs that hit the per-run timeout are
recorded as censored: they count toward the total number of runs but
contribute no observation.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dist
from .cnf import Formula
from .dist import DistFamily, FitResult
from .probsat import SolverConfig, solve_once
from .rngutil import substream_seed

DEFAULT_ALPHA = 0.05
MAX_CENSORED_FRACTION = 0.10


@dataclass(frozen=True)
class RtdSample:
    instance_id: str
    flips: tuple[int, ...]  # sorted ascending, successful runs only
    censored: int
    per_run_timeout: int
    master_seed: int

    def __post_init__(self):
        if any(b < a for a, b in zip(self.flips, self.flips[1:])):
            raise ValueError("flips must be sorted ascending")
        if any(x > self.per_run_timeout for x in self.flips):
            raise ValueError("observed flips exceed the per-run timeout")
        if self.censored < 0:
            raise ValueError("negative censored count")

    @property
    def total_runs(self) -> int:
        return len(self.flips) + self.censored

    @property
    def mean_flips(self) -> float:
        return float(np.mean(self.flips))

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "master_seed": self.master_seed,
            "per_run_timeout": self.per_run_timeout,
            "censored": self.censored,
            "flips": list(self.flips),
        }

    @staticmethod
    def from_dict(d: dict) -> "RtdSample":
        return RtdSample(
            instance_id=d["instance_id"],
            flips=tuple(d["flips"]),
            censored=d["censored"],
            per_run_timeout=d["per_run_timeout"],
            master_seed=d["master_seed"],
        )


@dataclass(frozen=True)
class WinnerSelection:
    winner: DistFamily | None
    all_fits: dict
    alpha: float


def _run_block(args) -> list[tuple[int, bool, int]]:
    f, cfg, master_seed, timeout, indices = args
    out = []
    for j in indices:
        run_cfg = cfg.with_seed(substream_seed(master_seed, j)).with_max_flips(timeout)
        outcome = solve_once(f, run_cfg)
        out.append((j, outcome.solved, outcome.flips))
    return out


def sample_rtd(
    f: Formula,
    cfg: SolverConfig,
    n_runs: int,
    master_seed: int,
    per_run_timeout: int,
    workers: int = 1,
) -> RtdSample:
    """Sample the RTD of `f` with n_runs independent solver runs.

    Run j is seeded by substream (master_seed, j), so the result is
    identical no matter how runs are distributed over workers.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    indices = list(range(n_runs))
    if workers <= 1 or n_runs < 4:
        results = _run_block((f, cfg, master_seed, per_run_timeout, indices))
    else:
        chunks = [
            (f, cfg, master_seed, per_run_timeout, list(block))
            for block in np.array_split(indices, workers)
            if len(block)
        ]
        results = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for block_result in pool.map(_run_block, chunks):
                results.extend(block_result)
    results.sort(key=lambda r: r[0])
    flips = tuple(sorted(fl for _j, solved, fl in results if solved))
    censored = sum(1 for _j, solved, _fl in results if not solved)
    instance_id = str(f.metadata.get("instance_id", "unnamed"))
    return RtdSample(instance_id, flips, censored, per_run_timeout, master_seed)


def ecdf(s: RtdSample) -> list[tuple[int, float]]:
    """Empirical distribution steps (x, cumulative probability).

    The denominator is the total number of runs including censored ones,
    so the final level is (n - censored) / n; duplicate observations merge
    into a single step at the larger level.
    """
    if not s.flips:
        raise ValueError("no uncensored observations")
    n = s.total_runs
    values, counts = np.unique(np.asarray(s.flips), return_counts=True)
    cum = np.cumsum(counts)
    return [(int(x), float(c) / n) for x, c in zip(values, cum)]


def select_winner(fits: dict, alpha: float) -> DistFamily | None:
    """The passing fit with the highest p-value, or None if no fit passes.

    Ties break by the fixed family order Weibull > Lognormal > GP.
    """
    winner = None
    best_p = -1.0
    for family in dist.FAMILY_ORDER:
        fit = fits[family]
        if fit.p_value >= alpha and fit.p_value > best_p:
            winner, best_p = family, fit.p_value
    return winner


def fit_all(s: RtdSample, alpha: float = DEFAULT_ALPHA) -> WinnerSelection:
    """Fit all three families to the uncensored observations and pick the
    winner by KS p-value at significance level alpha."""
    if len(s.flips) < 10:
        raise ValueError(f"need at least 10 uncensored runs, got {len(s.flips)}")
    if s.censored > MAX_CENSORED_FRACTION * s.total_runs:
        raise ValueError(
            f"censored fraction {s.censored}/{s.total_runs} exceeds "
            f"{MAX_CENSORED_FRACTION:.0%}"
        )
    samples = np.asarray(s.flips, dtype=float)
    fits = {}
    for family in dist.FAMILY_ORDER:
        params = dist.fit_mle(family, samples)
        ks_stat, p_value = dist.ks_test(samples, family, params)
        fits[family] = FitResult(
            family, params, ks_stat, p_value, dist.log_likelihood(family, params, samples)
        )
    return WinnerSelection(select_winner(fits, alpha), fits, alpha)


def empirical_optimal(s: RtdSample) -> tuple[int, float]:
    """Minimum expected runtime over restart cutoffs at observed runtimes.

    For each observed x, the expected runtime when restarting at x is
    ((1-p)/p) * x + mean of observations <= x, with p the fraction of all
    runs (censored included) that finished within x.  Returns the
    minimizing x and its value; ties go to the smallest x.
    """
    if not s.flips:
        raise ValueError("no uncensored observations")
    n = s.total_runs
    values, counts = np.unique(np.asarray(s.flips, dtype=float), return_counts=True)
    cum_count = np.cumsum(counts)
    cum_sum = np.cumsum(values * counts)
    p = cum_count / n
    expected = (1.0 - p) / p * values + cum_sum / cum_count
    idx = int(np.argmin(expected))
    return int(values[idx]), float(expected[idx])


def empirical_restart_value(s: RtdSample, t: float) -> float:
    """The empirical expected runtime when restarting at cutoff t,
    evaluated at the largest observed runtime <= t.

    Cutoffs beyond the largest observation never trigger, giving the plain
    mean; cutoffs below the smallest observation carry no empirical
    information and also fall back to the plain mean.
    """
    if not s.flips:
        raise ValueError("no uncensored observations")
    values = np.asarray(s.flips, dtype=float)
    if t < values[0]:
        return float(values.mean())
    n = s.total_runs
    mask = values <= t
    c = int(mask.sum())
    x = float(values[mask][-1])
    p = c / n
    return (1.0 - p) / p * x + float(values[mask].mean())
