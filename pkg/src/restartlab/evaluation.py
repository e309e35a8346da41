"""Speedup accounting and policy comparison.

Per-instance speedups are expected-runtime ratios; corpora aggregate by
geometric mean.  Fitted-distribution restart times are scored against the
observed sample (the empirical expected-runtime functional evaluated at
the largest observation at or below the cutoff), per-subset selection
tables compare family combinations, and head-to-head runs race restart
policies with paired significance tests on log mean runtimes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from . import dist, rtd
from .cnf import Formula
from .dist import DistFamily, FitResult
from .probsat import SolverConfig
from .restart import FixedCutoff, Luby, NoRestart, RestartPolicy, run_with_policy
from .rngutil import substream_seed

_P_FLOOR = 1e-300


def speedup(baseline_mean: float, candidate_mean: float) -> float:
    """Expected-runtime ratio; > 1 means the candidate is faster."""
    if baseline_mean <= 0 or candidate_mean <= 0:
        raise ValueError("means must be positive")
    return baseline_mean / candidate_mean


def geometric_mean(values) -> float:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("empty speedup list")
    if np.any(arr <= 0):
        raise ValueError("speedups must be positive")
    return float(np.exp(np.log(arr).mean()))


# ---------------------------------------------------------------------------
# Significance tests
# ---------------------------------------------------------------------------

def paired_t_test(x, y) -> tuple[float, float]:
    """Two-sided paired t-test on differences of log means.

    Zero-variance differences degenerate: p = 1 when all differences are
    0, otherwise the p-value underflows to the reporting floor 1e-300.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 entries")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("means must be positive")
    d = np.log(x) - np.log(y)
    n = d.size
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if np.all(d == 0):
            return 0.0, 1.0
        return math.copysign(math.inf, float(d.mean())), _P_FLOOR
    t = float(d.mean() / (sd / math.sqrt(n)))
    p = 2.0 * float(special.stdtr(n - 1, -abs(t)))
    return t, max(p, _P_FLOOR)


def _signed_ranks(x, y) -> tuple[np.ndarray, np.ndarray]:
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        raise ValueError("all differences are zero")
    if d.size < 5:
        raise ValueError("need at least 5 non-zero differences")
    ranks = stats.rankdata(np.abs(d), method="average")
    return d, ranks


def _wilcoxon_exact_p(w: float, ranks: np.ndarray) -> float:
    """Exact two-sided p by enumerating all sign patterns of the given
    ranks (dynamic program over doubled ranks, which are integers)."""
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    n_patterns = counts.sum()
    w2 = int(round(2 * w))
    p_le = counts[: w2 + 1].sum() / n_patterns
    p_ge = counts[w2:].sum() / n_patterns
    return float(min(1.0, 2.0 * min(p_le, p_ge)))


def wilcoxon_signed_rank(x, y, exact_threshold: int = 20) -> tuple[float, float]:
    """Signed-rank test with average-rank ties; W is the positive-rank sum.

    Zero differences are dropped.  The two-sided p-value is exact (full
    sign-pattern enumeration) up to exact_threshold pairs, and a normal
    approximation with continuity correction beyond.
    """
    d, ranks = _signed_ranks(x, y)
    w = float(ranks[d > 0].sum())
    n = d.size
    if n <= exact_threshold:
        return w, _wilcoxon_exact_p(w, ranks)
    mean_w = float(ranks.sum()) / 2.0
    sd_w = math.sqrt(float((ranks**2).sum()) / 4.0)
    z = (w - mean_w - 0.5 * math.copysign(1.0, w - mean_w)) / sd_w
    p = 2.0 * float(special.ndtr(-abs(z)))
    return w, min(p, 1.0)


# ---------------------------------------------------------------------------
# Subset speedup table
# ---------------------------------------------------------------------------

SUBSET_LABELS = (
    "baseline",
    "L",
    "W",
    "GP",
    "L+W",
    "L+GP",
    "W+GP",
    "L+W+GP",
)

_SHORT_TO_FAMILY = {
    "L": DistFamily.LOGNORMAL,
    "W": DistFamily.WEIBULL,
    "GP": DistFamily.GP,
}


def _subset_families(label: str) -> tuple[DistFamily, ...]:
    if label == "baseline":
        return ()
    return tuple(_SHORT_TO_FAMILY[part] for part in label.split("+"))


def fitted_restart_speedup(fit: FitResult, sample: rtd.RtdSample) -> float:
    """Speedup of restarting at the fitted-distribution optimum, scored on
    the observed sample; 1.0 when the fit recommends not restarting."""
    rec = dist.optimal_restart_time(fit.family, fit.params)
    base = sample.mean_flips
    if not rec.should_restart:
        return 1.0
    return base / rtd.empirical_restart_value(sample, rec.t)


def subset_speedup_table(items: list[tuple[dict, rtd.RtdSample]]) -> dict:
    """Geometric-mean speedups for every family subset under two selection
    rules.

    items: (fits, sample) per instance, fits mapping DistFamily ->
    FitResult.  Within a subset, the "ks" column picks the family with the
    highest p-value on each instance, the "speedup" column the family with
    the highest realized speedup.  The baseline row restarts at the best
    observed cutoff instead of a fitted one.
    """
    if not items:
        raise ValueError("empty instance list")
    per_instance: list[dict] = []
    baseline: list[float] = []
    for fits, sample in items:
        base = sample.mean_flips
        _x_star, e_hat = rtd.empirical_optimal(sample)
        baseline.append(base / e_hat)
        per_instance.append(
            {
                family: (fits[family].p_value, fitted_restart_speedup(fits[family], sample))
                for family in dist.FAMILY_ORDER
            }
        )

    table: dict = {"baseline": {"ks": geometric_mean(baseline), "speedup": geometric_mean(baseline)}}
    for label in SUBSET_LABELS[1:]:
        families = _subset_families(label)
        ks_speedups = []
        best_speedups = []
        for row in per_instance:
            by_p = max(
                (fam for fam in dist.FAMILY_ORDER if fam in families),
                key=lambda fam: row[fam][0],
            )
            ks_speedups.append(row[by_p][1])
            best_speedups.append(max(row[fam][1] for fam in families))
        table[label] = {
            "ks": geometric_mean(ks_speedups),
            "speedup": geometric_mean(best_speedups),
        }
    return table


# ---------------------------------------------------------------------------
# Head-to-head policy comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedupRecord:
    instance_id: str
    mean_runtime_baseline: float
    mean_runtime_candidate: float

    @property
    def speedup(self) -> float:
        return self.mean_runtime_baseline / self.mean_runtime_candidate

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "mean_runtime_baseline": self.mean_runtime_baseline,
            "mean_runtime_candidate": self.mean_runtime_candidate,
            "speedup": self.speedup,
        }


@dataclass(frozen=True)
class PairComparison:
    baseline: str
    candidate: str
    records: tuple[SpeedupRecord, ...]
    geometric_mean: float
    t_stat: float
    t_p: float
    wilcoxon_w: float
    wilcoxon_p: float

    def to_dict(self) -> dict:
        return {
            "baseline": self.baseline,
            "candidate": self.candidate,
            "geometric_mean": self.geometric_mean,
            "t_stat": self.t_stat,
            "t_p": self.t_p,
            "wilcoxon_w": self.wilcoxon_w,
            "wilcoxon_p": self.wilcoxon_p,
            "records": [r.to_dict() for r in self.records],
        }

    def scatter_rows(self) -> list[tuple[str, float, float]]:
        """Rows (instance_id, log mean baseline, log mean candidate)."""
        return [
            (
                r.instance_id,
                math.log(r.mean_runtime_baseline),
                math.log(r.mean_runtime_candidate),
            )
            for r in self.records
        ]


@dataclass(frozen=True)
class EvalReport:
    policy_labels: tuple[str, ...]
    mean_runtimes: dict  # label -> {instance_id: mean flips}
    solved_fractions: dict  # label -> {instance_id: fraction}
    excluded: tuple[str, ...]
    pairs: tuple[PairComparison, ...]
    policy_kind_counts: dict  # label -> {"fixed"|"none"|"luby": count}
    runs_per_instance: int
    total_budget: int
    master_seed: int

    def to_dict(self) -> dict:
        return {
            "policy_labels": list(self.policy_labels),
            "mean_runtimes": self.mean_runtimes,
            "solved_fractions": self.solved_fractions,
            "excluded": list(self.excluded),
            "pairs": [p.to_dict() for p in self.pairs],
            "policy_kind_counts": self.policy_kind_counts,
            "runs_per_instance": self.runs_per_instance,
            "total_budget": self.total_budget,
            "master_seed": self.master_seed,
        }


def _policy_kind(policy: RestartPolicy) -> str:
    if isinstance(policy, FixedCutoff):
        return "fixed"
    if isinstance(policy, Luby):
        return "luby"
    if isinstance(policy, NoRestart):
        return "none"
    raise TypeError(f"unknown policy {policy!r}")


def _h2h_task(args):
    (
        instance_index,
        formula,
        label,
        policy,
        cfg,
        runs,
        budget,
        seed,
    ) = args
    total = 0
    solved = 0
    for j in range(runs):
        run_seed = substream_seed(seed, j)
        out = run_with_policy(formula, cfg.with_seed(run_seed), policy, budget)
        total += out.total_flips
        solved += int(out.solved)
    return instance_index, label, total / runs, solved / runs


def head_to_head(
    instances: list[Formula],
    policies: dict,
    cfg: SolverConfig,
    runs_per_instance: int,
    total_budget: int,
    master_seed: int,
    workers: int = 1,
) -> EvalReport:
    """Race policies on a common instance set.

    policies maps a label to {instance_id: RestartPolicy}.  Every
    (instance, policy, run) triple is seeded by nested substreams of
    master_seed, so results are identical for any worker count.  Unsolved
    runs count at the full budget; instances where some policy solves no
    run at all are excluded from the comparisons and reported.
    """
    if not instances:
        raise ValueError("need at least one instance")
    if len(policies) < 2:
        raise ValueError("need at least two policies")
    labels = tuple(policies.keys())
    ids = [str(f.metadata.get("instance_id", f"instance{i}")) for i, f in enumerate(instances)]

    tasks = []
    for i, f in enumerate(instances):
        for pi, label in enumerate(labels):
            policy = policies[label][ids[i]]
            seed = substream_seed(substream_seed(master_seed, i), pi)
            tasks.append((i, f, label, policy, cfg, runs_per_instance, total_budget, seed))

    if workers <= 1:
        results = [_h2h_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_h2h_task, tasks, chunksize=1))

    means: dict = {label: {} for label in labels}
    solved: dict = {label: {} for label in labels}
    for instance_index, label, mean_flips, solved_frac in results:
        means[label][ids[instance_index]] = mean_flips
        solved[label][ids[instance_index]] = solved_frac

    excluded = tuple(
        iid for iid in ids if any(solved[label][iid] == 0.0 for label in labels)
    )
    included = [iid for iid in ids if iid not in set(excluded)]
    if not included:
        raise ValueError("every instance timed out under some policy")

    pairs = []
    for ai in range(len(labels)):
        for bi in range(ai + 1, len(labels)):
            a, b = labels[ai], labels[bi]
            records = tuple(
                SpeedupRecord(iid, means[a][iid], means[b][iid]) for iid in included
            )
            gm = geometric_mean([r.speedup for r in records])
            xs = [means[a][iid] for iid in included]
            ys = [means[b][iid] for iid in included]
            t_stat, t_p = paired_t_test(xs, ys)
            try:
                w_stat, w_p = wilcoxon_signed_rank(np.log(xs), np.log(ys))
            except ValueError:
                w_stat, w_p = math.nan, math.nan
            pairs.append(PairComparison(a, b, records, gm, t_stat, t_p, w_stat, w_p))

    kind_counts = {
        label: {
            kind: sum(
                1
                for iid in included
                if _policy_kind(policies[label][iid]) == kind
            )
            for kind in ("none", "fixed", "luby")
        }
        for label in labels
    }
    return EvalReport(
        policy_labels=labels,
        mean_runtimes=means,
        solved_fractions=solved,
        excluded=excluded,
        pairs=tuple(pairs),
        policy_kind_counts=kind_counts,
        runs_per_instance=runs_per_instance,
        total_budget=total_budget,
        master_seed=master_seed,
    )


def expand_policy(policy: RestartPolicy, instances: list[Formula]) -> dict:
    """Constant policy assignment for every instance."""
    out = {}
    for i, f in enumerate(instances):
        iid = str(f.metadata.get("instance_id", f"instance{i}"))
        out[iid] = policy
    return out
