"""Instance feature extraction: 34 named features covering problem size,
graph structure, Horn proximity, search-space probing, and local-search
probing, plus min-max normalization and variance-based selection.

Local-search probing runs the solver itself under two parameter profiles
(a balanced one and a greedy one) and aggregates trace statistics; the
probing keys keep the conventional saps_/gsat_ prefixes so downstream
consumers can interoperate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import probsat
from .cnf import Formula, simplify, _Dpll
from .probsat import SolverConfig
from .rngutil import make_generator, substream_seed

FEATURE_NAMES: tuple[str, ...] = (
    "nvarsOrig",
    "nclausesOrig",
    "nvars",
    "nclauses",
    "VCG-CLAUSE-mean",
    "VCG-CLAUSE-min",
    "VCG-CLAUSE-max",
    "VCG-VAR-mean",
    "VCG-VAR-min",
    "VCG-VAR-max",
    "HORNY-VAR-mean",
    "HORNY-VAR-min",
    "VG-mean",
    "VG-min",
    "VG-max",
    "CG-mean",
    "CG-max",
    "CG-featuretime",
    "saps_BestSolution_Mean",
    "saps_BestSolution_CoeffVariance",
    "saps_FirstLocalMinStep_Mean",
    "saps_FirstLocalMinStep_CoeffVariance",
    "saps_FirstLocalMinStep_Median",
    "saps_FirstLocalMinStep_Q.10",
    "saps_FirstLocalMinStep_Q.90",
    "saps_BestAvgImprovement_Mean",
    "gsat_BestSolution_Mean",
    "gsat_FirstLocalMinStep_Mean",
    "gsat_FirstLocalMinStep_CoeffVariance",
    "gsat_FirstLocalMinStep_Median",
    "gsat_FirstLocalMinStep_Q.10",
    "gsat_FirstLocalMinStep_Q.90",
    "gsat_BestAvgImprovement_Mean",
    "lobjois-mean-depth-over-vars",
)

NUM_FEATURES = len(FEATURE_NAMES)
_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# variance-selection always keeps these (density information is carried by
# the original variable and clause counts together)
DEFAULT_HANDPICKED: tuple[str, ...] = (
    "nvarsOrig",
    "nclausesOrig",
    "nclauses",
    "lobjois-mean-depth-over-vars",
)

# probing profiles: (prefix, break exponent); the greedy profile stands in
# for a steepest-descent style engine
_PROFILES = (("saps", None), ("gsat", 7.0))
_PROBES_PER_PROFILE = 10
_LOBJOIS_PROBES = 10
_CG_CLAUSE_CAP = 4000


@dataclass(frozen=True)
class FeatureVector:
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != NUM_FEATURES:
            raise ValueError(f"expected {NUM_FEATURES} values, got {len(self.values)}")
        if not all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def __getitem__(self, name: str) -> float:
        return self.values[_INDEX[name]]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def to_dict(self) -> dict:
        return dict(zip(FEATURE_NAMES, self.values))

    @staticmethod
    def from_dict(d: dict) -> "FeatureVector":
        return FeatureVector(tuple(float(d[name]) for name in FEATURE_NAMES))


@dataclass(frozen=True)
class NormalizationSpec:
    mins: tuple[float, ...]
    maxs: tuple[float, ...]

    def __post_init__(self):
        if any(hi < lo for lo, hi in zip(self.mins, self.maxs)):
            raise ValueError("max below min in normalization spec")

    def to_dict(self) -> dict:
        return {"mins": list(self.mins), "maxs": list(self.maxs)}

    @staticmethod
    def from_dict(d: dict) -> "NormalizationSpec":
        return NormalizationSpec(tuple(d["mins"]), tuple(d["maxs"]))


def _stats(values) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.min()), float(arr.max())


def _coeff_variance(values) -> float:
    arr = np.asarray(values, dtype=float)
    m = arr.mean()
    return float(arr.std() / m) if m != 0 else 0.0


def _graph_features(f: Formula) -> dict:
    n = f.num_vars
    clauses = f.int_clauses()
    var_deg = np.zeros(n, dtype=int)
    horn_count = np.zeros(n, dtype=int)
    vg_neighbors: list[set[int]] = [set() for _ in range(n)]
    for cl in clauses:
        variables = [abs(l) for l in cl]
        for v in variables:
            var_deg[v - 1] += 1
        if sum(1 for l in cl if l > 0) <= 1:
            for v in variables:
                horn_count[v - 1] += 1
        for i, v in enumerate(variables):
            for w in variables[i + 1 :]:
                if v != w:
                    vg_neighbors[v - 1].add(w)
                    vg_neighbors[w - 1].add(v)
    vg_deg = [len(s) for s in vg_neighbors]

    out = {}
    clause_deg = [len(cl) for cl in clauses]
    (
        out["VCG-CLAUSE-mean"],
        out["VCG-CLAUSE-min"],
        out["VCG-CLAUSE-max"],
    ) = _stats(clause_deg)
    out["VCG-VAR-mean"], out["VCG-VAR-min"], out["VCG-VAR-max"] = _stats(var_deg)
    out["VG-mean"], out["VG-min"], out["VG-max"] = _stats(vg_deg)
    out["HORNY-VAR-mean"], out["HORNY-VAR-min"], _ = _stats(horn_count)
    return out


def _clause_graph_degrees(f: Formula, seed: int) -> tuple[np.ndarray, int]:
    """Degrees of the clause graph (edges between clauses sharing a
    variable with opposite polarity), on a uniform clause sample when the
    formula exceeds the quadratic-cost cap."""
    clauses = f.int_clauses()
    m = len(clauses)
    if m > _CG_CLAUSE_CAP:
        rng = make_generator(seed)
        chosen = sorted(rng.choice(m, size=_CG_CLAUSE_CAP, replace=False))
    else:
        chosen = list(range(m))
    index_of = {ci: k for k, ci in enumerate(chosen)}
    pos_occ: dict[int, list[int]] = {}
    neg_occ: dict[int, list[int]] = {}
    for ci in chosen:
        for lit in clauses[ci]:
            (pos_occ if lit > 0 else neg_occ).setdefault(abs(lit), []).append(ci)
    adjacency: list[set[int]] = [set() for _ in chosen]
    for var, pos_list in pos_occ.items():
        for a in pos_list:
            for b in neg_occ.get(var, ()):
                if a != b:
                    adjacency[index_of[a]].add(b)
                    adjacency[index_of[b]].add(a)
    return np.array([len(s) for s in adjacency], dtype=int), len(chosen)


def _lobjois_depth(f: Formula, seed: int) -> float:
    """Mean random-probe depth of a DPLL descent, over the variable count.

    Each probe propagates units and pure literals, then assigns a random
    unassigned variable to a random polarity, until conflict or all clauses
    are satisfied; the depth is the number of random decisions made.
    """
    depths = []
    for j in range(_LOBJOIS_PROBES):
        rng = make_generator(substream_seed(seed, j))
        solver = _Dpll(f)
        depth = 0
        while solver._propagate():
            if solver.num_sat == len(solver.clauses):
                break
            unassigned = [v for v in range(1, f.num_vars + 1) if solver.assign[v] == 0]
            var = int(unassigned[rng.integers(len(unassigned))])
            lit = var if rng.integers(2) else -var
            depth += 1
            if not solver._set(lit):
                break
        depths.append(depth)
    return float(np.mean(depths)) / max(f.num_vars, 1)


def _probe_stats(f: Formula, prefix: str, cfg: SolverConfig, probe_flips: int) -> dict:
    traces = [
        probsat.probe_run(f, cfg.with_seed(substream_seed(cfg.seed, j)), probe_flips)
        for j in range(_PROBES_PER_PROFILE)
    ]
    best = [t.best_solution_unsat for t in traces]
    flm = [t.first_local_min_step for t in traces]
    improvement = [
        (t.initial_unsat - t.best_solution_unsat) / max(t.best_step, 1)
        for t in traces
    ]
    out = {
        f"{prefix}_BestSolution_Mean": float(np.mean(best)),
        f"{prefix}_FirstLocalMinStep_Mean": float(np.mean(flm)),
        f"{prefix}_FirstLocalMinStep_CoeffVariance": _coeff_variance(flm),
        f"{prefix}_FirstLocalMinStep_Median": float(np.median(flm)),
        f"{prefix}_FirstLocalMinStep_Q.10": float(np.quantile(flm, 0.10)),
        f"{prefix}_FirstLocalMinStep_Q.90": float(np.quantile(flm, 0.90)),
        f"{prefix}_BestAvgImprovement_Mean": float(np.mean(improvement)),
    }
    if prefix == "saps":
        out["saps_BestSolution_CoeffVariance"] = _coeff_variance(best)
    return out


def extract_features(
    f: Formula, probe_cfg: SolverConfig, probe_budget: int = 100_000
) -> FeatureVector:
    """Compute the full 34-feature vector for one formula.

    Deterministic given (formula, probe_cfg.seed) except for the
    CG-featuretime entry, which records the wall-clock cost of the
    extraction itself.
    """
    t0 = time.perf_counter()
    values = {"nvarsOrig": float(f.num_vars), "nclausesOrig": float(len(f.clauses))}

    simplified = simplify(f)
    values["nvars"] = float(simplified.num_vars_remaining)
    values["nclauses"] = float(simplified.num_clauses_remaining)

    values.update(_graph_features(f))
    cg_deg, _cg_sample = _clause_graph_degrees(f, substream_seed(probe_cfg.seed, 100))
    values["CG-mean"] = float(cg_deg.mean()) if cg_deg.size else 0.0
    values["CG-max"] = float(cg_deg.max()) if cg_deg.size else 0.0

    values["lobjois-mean-depth-over-vars"] = _lobjois_depth(
        f, substream_seed(probe_cfg.seed, 2)
    )

    probe_flips = max(1, probe_budget // (len(_PROFILES) * _PROBES_PER_PROFILE))
    for profile_idx, (prefix, cb_override) in enumerate(_PROFILES):
        cfg = probe_cfg.with_seed(substream_seed(probe_cfg.seed, profile_idx))
        if cb_override is not None:
            cfg = SolverConfig(
                c_b=cb_override, c_m=cfg.c_m, max_flips=cfg.max_flips, seed=cfg.seed
            )
        values.update(_probe_stats(f, prefix, cfg, probe_flips))

    values["CG-featuretime"] = time.perf_counter() - t0
    return FeatureVector(tuple(float(values[name]) for name in FEATURE_NAMES))


# --------------------------------------------------------------------------
# Normalization and selection
# --------------------------------------------------------------------------

def fit_normalization(corpus: list[FeatureVector]) -> NormalizationSpec:
    """Per-feature (min, max) over a training corpus."""
    if not corpus:
        raise ValueError("empty corpus")
    mat = np.array([v.values for v in corpus], dtype=float)
    return NormalizationSpec(tuple(mat.min(axis=0)), tuple(mat.max(axis=0)))


def apply_normalization(spec: NormalizationSpec, v: FeatureVector) -> FeatureVector:
    """Affine map to [0,1] per feature; constant features map to 0 and
    out-of-range values clamp."""
    lo = np.asarray(spec.mins)
    hi = np.asarray(spec.maxs)
    span = hi - lo
    raw = v.as_array()
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = np.where(span > 0, (raw - lo) / np.where(span > 0, span, 1.0), 0.0)
    return FeatureVector(tuple(np.clip(scaled, 0.0, 1.0)))


def select_by_variance(
    corpus: list[FeatureVector],
    threshold: float = 0.05,
    handpicked: tuple[str, ...] = DEFAULT_HANDPICKED,
) -> list[str]:
    """Names of features with variance above the threshold on a normalized
    corpus, unioned with the handpicked set, in canonical order."""
    for name in handpicked:
        if name not in _INDEX:
            raise ValueError(f"unknown handpicked feature {name!r}")
    if not corpus:
        raise ValueError("empty corpus")
    mat = np.array([v.values for v in corpus], dtype=float)
    variances = mat.var(axis=0)
    keep = {
        name
        for name, var in zip(FEATURE_NAMES, variances)
        if var > threshold
    }
    keep.update(handpicked)
    return [name for name in FEATURE_NAMES if name in keep]


def project(v: FeatureVector, names: list[str]) -> np.ndarray:
    """Feature values restricted to `names`, in the given order."""
    return np.array([v[name] for name in names], dtype=float)
