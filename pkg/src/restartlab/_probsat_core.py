"""Jitted inner loop of the local search solver.

The formula is flattened into CSR-style int32 arrays once per instance;
the flip loop then runs allocation-free.  The PRNG is an explicit
splitmix64 stream so that a run is a pure function of its 64-bit seed,
in jitted and in interpreted (NUMBA_DISABLE_JIT) mode alike.

Literal encoding: variable v (1-based) positive -> 2*(v-1), negated ->
2*(v-1)+1.  A literal code is "true" when the variable's current value
matches its polarity.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_GOLDEN = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_S30 = U64(30)
_S27 = U64(27)
_S31 = U64(31)
_S11 = U64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True)
def _next_u64(state):
    s = state[0] + _GOLDEN
    state[0] = s
    z = (s ^ (s >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True)
def _next_unit(state):
    """Uniform double in [0, 1) with 53 random bits."""
    return float(_next_u64(state) >> _S11) * _INV53


@njit(cache=True)
def _next_below(state, n):
    # modulo bias is ~n/2**64, irrelevant at solver scales
    return int(_next_u64(state) % U64(n))


@njit(cache=True)
def run_probsat(
    n_vars,
    clause_start,
    clause_lits,
    occ_start,
    occ_clause,
    cb,
    cm,
    max_flips,
    seed,
    record_trace,
    stall_window,
):
    """One independent try from a fresh random assignment.

    Returns (solved, flips, values, best_unsat, best_step,
    first_local_min_step, traj_steps, traj_unsat, traj_len).
    Trace arrays are only meaningful when record_trace is set.
    """
    m = clause_start.shape[0] - 1
    state = np.empty(1, np.uint64)
    state[0] = U64(seed)

    values = np.empty(n_vars, np.uint8)
    for v in range(n_vars):
        values[v] = np.uint8(_next_u64(state) >> U64(63))

    n_true = np.zeros(m, np.int32)
    unsat = np.empty(m, np.int32)
    unsat_pos = np.full(m, -1, np.int32)
    unsat_count = 0
    for c in range(m):
        cnt = 0
        for k in range(clause_start[c], clause_start[c + 1]):
            lit = clause_lits[k]
            v = lit >> 1
            if values[v] == np.uint8(1 - (lit & 1)):
                cnt += 1
        n_true[c] = cnt
        if cnt == 0:
            unsat[unsat_count] = c
            unsat_pos[c] = unsat_count
            unsat_count += 1

    max_len = 0
    for c in range(m):
        ln = clause_start[c + 1] - clause_start[c]
        if ln > max_len:
            max_len = ln
    weights = np.empty(max(max_len, 1), np.float64)

    traj_cap = m + 2 if record_trace else 1
    traj_steps = np.empty(traj_cap, np.int64)
    traj_unsat = np.empty(traj_cap, np.int64)
    traj_len = 0
    best_unsat = unsat_count
    best_step = 0
    first_local_min = -1
    if record_trace:
        traj_steps[0] = 0
        traj_unsat[0] = best_unsat
        traj_len = 1

    flips = 0
    while unsat_count > 0 and flips < max_flips:
        c = unsat[_next_below(state, unsat_count)]
        lo = clause_start[c]
        hi = clause_start[c + 1]
        total = 0.0
        for k in range(lo, hi):
            lit = clause_lits[k]
            v = lit >> 1
            # literal currently satisfied by v's value: flipping v breaks
            # exactly the clauses where it is the sole true literal
            true_lit = (v << 1) | np.int32(1 - values[v])
            br = 0
            for j in range(occ_start[true_lit], occ_start[true_lit + 1]):
                if n_true[occ_clause[j]] == 1:
                    br += 1
            w = (1.0 + br) ** (-cb)
            if cm != 0.0:
                false_lit = true_lit ^ 1
                mk = 0
                for j in range(occ_start[false_lit], occ_start[false_lit + 1]):
                    if n_true[occ_clause[j]] == 0:
                        mk += 1
                w *= float(mk) ** cm
            weights[k - lo] = w
            total += w

        r = _next_unit(state) * total
        pick = hi - lo - 1
        acc = 0.0
        for k in range(hi - lo):
            acc += weights[k]
            if r < acc:
                pick = k
                break
        flip_var = clause_lits[lo + pick] >> 1

        values[flip_var] = np.uint8(1) - values[flip_var]
        now_true = (flip_var << 1) | np.int32(1 - values[flip_var])
        now_false = now_true ^ 1
        for j in range(occ_start[now_true], occ_start[now_true + 1]):
            ci = occ_clause[j]
            n_true[ci] += 1
            if n_true[ci] == 1:
                pos = unsat_pos[ci]
                last = unsat[unsat_count - 1]
                unsat[pos] = last
                unsat_pos[last] = pos
                unsat_pos[ci] = -1
                unsat_count -= 1
        for j in range(occ_start[now_false], occ_start[now_false + 1]):
            ci = occ_clause[j]
            n_true[ci] -= 1
            if n_true[ci] == 0:
                unsat[unsat_count] = ci
                unsat_pos[ci] = unsat_count
                unsat_count += 1

        flips += 1
        if record_trace:
            if unsat_count < best_unsat:
                best_unsat = unsat_count
                best_step = flips
                traj_steps[traj_len] = flips
                traj_unsat[traj_len] = unsat_count
                traj_len += 1
            elif first_local_min < 0 and flips - best_step >= stall_window:
                first_local_min = best_step
        elif unsat_count < best_unsat:
            best_unsat = unsat_count
            best_step = flips

    if first_local_min < 0:
        first_local_min = best_step
    solved = unsat_count == 0
    return (
        solved,
        flips,
        values,
        best_unsat,
        best_step,
        first_local_min,
        traj_steps,
        traj_unsat,
        traj_len,
    )
