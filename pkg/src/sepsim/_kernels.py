"""Numba kernels for the event-driven simulation core.

Everything here works on primitive arrays in 0-based site coordinates;
the public 1-based API lives in engine.py. Event ids follow the canonical
layout of model.event_id: with b = n-2 bonds, ids [0, b) move a particle
right across bond j (sites j, j+1), ids [b, 2b) move left, and the last
four are inject/remove left then inject/remove right.

The RNG is xoshiro256++ on a uint64[4] state vector, advanced in place.
Waiting times are exponential in the microscopic clock; compensated
summation keeps the clock and the replay integrals exact over long runs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U23 = np.uint64(23)
_U45 = np.uint64(45)
_U64 = np.uint64(64)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _rotl(x, k):
    return np.uint64((x << k) | (x >> (_U64 - k)))


@njit(cache=True, inline="always")
def _next_u64(s):
    result = _rotl(s[0] + s[3], _U23) + s[0]
    t = np.uint64(s[1] << _U17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], _U45)
    return np.uint64(result)


@njit(cache=True, inline="always")
def _unit_open(s):
    """Uniform draw in (0, 1], safe under log."""
    return (np.float64(_next_u64(s) >> _U11) + 1.0) * _INV53


@njit(cache=True, inline="always")
def _unit_half_open(s):
    """Uniform draw in [0, 1)."""
    return np.float64(_next_u64(s) >> _U11) * _INV53


@njit(cache=True)
def _tree_build(tree, cap, rates):
    tree[:] = 0.0
    for i in range(rates.shape[0]):
        tree[cap + i] = rates[i]
    for node in range(cap - 1, 0, -1):
        tree[node] = tree[2 * node] + tree[2 * node + 1]


@njit(cache=True, inline="always")
def _tree_set(tree, cap, idx, val):
    node = cap + idx
    tree[node] = val
    node >>= 1
    while node >= 1:
        tree[node] = tree[2 * node] + tree[2 * node + 1]
        node >>= 1


@njit(cache=True)
def _tree_sample(tree, cap, m, u):
    """Pick the leaf whose cumulative-rate interval contains u * total."""
    r = u * tree[1]
    node = 1
    while node < cap:
        node <<= 1
        left = tree[node]
        if r >= left:
            r -= left
            node += 1
    idx = node - cap
    if idx >= m or tree[cap + idx] <= 0.0:
        # float rounding can land on a padding or zero-rate leaf; fall back
        # to the nearest positive leaf below, which is deterministic
        idx = min(idx, m - 1)
        while idx > 0 and tree[cap + idx] <= 0.0:
            idx -= 1
    return idx


@njit(cache=True)
def _all_rates(occ, alpha, b, eps_s, gam_s, del_s, bet_s, out):
    for j in range(b):
        out[j] = np.float64(occ[j] * (alpha - occ[j + 1]))
        out[b + j] = np.float64(occ[j + 1] * (alpha - occ[j]))
    last = b
    out[2 * b] = eps_s * (alpha - occ[0])
    out[2 * b + 1] = gam_s * occ[0]
    out[2 * b + 2] = del_s * (alpha - occ[last])
    out[2 * b + 3] = bet_s * occ[last]


@njit(cache=True, inline="always")
def _apply_event_k(occ, eid, b):
    """Apply an event in place; returns the changed 0-based sites (s2 may be -1)."""
    if eid < b:
        occ[eid] -= 1
        occ[eid + 1] += 1
        return eid, eid + 1
    if eid < 2 * b:
        j = eid - b
        occ[j + 1] -= 1
        occ[j] += 1
        return j, j + 1
    k = eid - 2 * b
    last = b
    if k == 0:
        occ[0] += 1
        return 0, -1
    if k == 1:
        occ[0] -= 1
        return 0, -1
    if k == 2:
        occ[last] += 1
        return last, -1
    occ[last] -= 1
    return last, -1


@njit(cache=True, inline="always")
def _refresh_site(tree, cap, occ, s, alpha, b, eps_s, gam_s, del_s, bet_s):
    """Recompute every event rate that reads site s."""
    if s >= 1:
        _tree_set(tree, cap, s - 1, np.float64(occ[s - 1] * (alpha - occ[s])))
        _tree_set(tree, cap, b + s - 1, np.float64(occ[s] * (alpha - occ[s - 1])))
    if s <= b - 1:
        _tree_set(tree, cap, s, np.float64(occ[s] * (alpha - occ[s + 1])))
        _tree_set(tree, cap, b + s, np.float64(occ[s + 1] * (alpha - occ[s])))
    if s == 0:
        _tree_set(tree, cap, 2 * b, eps_s * (alpha - occ[0]))
        _tree_set(tree, cap, 2 * b + 1, gam_s * occ[0])
    if s == b:
        _tree_set(tree, cap, 2 * b + 2, del_s * (alpha - occ[b]))
        _tree_set(tree, cap, 2 * b + 3, bet_s * occ[b])


@njit(cache=True)
def _advance(
    occ,
    tree,
    cap,
    clock,
    rng,
    target,
    alpha,
    b,
    eps_s,
    gam_s,
    del_s,
    bet_s,
    log_eids,
    log_dts,
    capture,
    max_log,
):
    """Run the chain until the microscopic clock reaches ``target``.

    clock is (t, kahan compensation), updated in place. Returns
    (events applied, status) with status 0 when the target was reached and
    1 when the log buffer filled first. Stopping mid-wait is exact: the
    remaining exponential wait is memoryless and redrawn on resume.
    """
    n_applied = 0
    t = clock[0]
    comp = clock[1]
    while True:
        total = tree[1]
        if total <= 0.0:
            t = target
            comp = 0.0
            break
        dt = -np.log(_unit_open(rng)) / total
        y = dt - comp
        t_new = t + y
        if t_new > target:
            t = target
            comp = 0.0
            break
        comp = (t_new - t) - y
        t = t_new
        eid = _tree_sample(tree, cap, 2 * b + 4, _unit_half_open(rng))
        s1, s2 = _apply_event_k(occ, eid, b)
        _refresh_site(tree, cap, occ, s1, alpha, b, eps_s, gam_s, del_s, bet_s)
        if s2 >= 0:
            _refresh_site(tree, cap, occ, s2, alpha, b, eps_s, gam_s, del_s, bet_s)
        if capture:
            log_eids[n_applied] = np.uint32(eid)
            log_dts[n_applied] = dt
        n_applied += 1
        if capture and n_applied >= max_log:
            clock[0] = t
            clock[1] = comp
            return n_applied, 1
    clock[0] = t
    clock[1] = comp
    return n_applied, 0


@njit(cache=True, inline="always")
def _pair_delta(eid, b, weights):
    """Change of sum_s occ[s] * weights[s] under one event."""
    if eid < b:
        return weights[eid + 1] - weights[eid]
    if eid < 2 * b:
        j = eid - b
        return weights[j] - weights[j + 1]
    k = eid - 2 * b
    last = b
    if k == 0:
        return weights[0]
    if k == 1:
        return -weights[0]
    if k == 2:
        return weights[last]
    return -weights[last]


@njit(cache=True)
def _dynkin_replay(
    occ,
    eids,
    dts,
    seg_ends,
    seg_targets,
    alpha,
    b,
    eps_s,
    gam_s,
    del_s,
    bet_s,
    gsite,
    awm,
    aconst,
    qw,
    qbl,
    qbr,
    out_pairing,
    out_mart,
    out_qv,
    out_occ,
):
    """Exact replay of a logged trajectory for the Dynkin decomposition.

    The test-function data arrives pre-reduced: gsite[s] is the pairing
    weight of site s, awm[s] the site weight of the microscopic drift (the
    generator applied to the pairing is affine in the occupancies, with
    constant part aconst), qw[j] the squared pairing increment of bond j,
    and qbl/qbr the squared increments of the reservoir moves. All
    integrands are piecewise constant between events, so the time integrals
    are exact; segment boundaries land on the checkpoint targets.
    """
    sites = b + 1
    pairing = 0.0
    drift = aconst
    for s in range(sites):
        pairing += occ[s] * gsite[s]
        drift += occ[s] * awm[s]
    bterm_l = (eps_s * (alpha - occ[0]) + gam_s * occ[0]) * qbl
    bterm_r = (del_s * (alpha - occ[sites - 1]) + bet_s * occ[sites - 1]) * qbr
    bond_terms = np.empty(b, dtype=np.float64)
    gamma_val = bterm_l + bterm_r
    for j in range(b):
        act = np.float64(occ[j] * (alpha - occ[j + 1]) + occ[j + 1] * (alpha - occ[j]))
        bond_terms[j] = act * qw[j]
        gamma_val += bond_terms[j]

    pairing0 = pairing
    t = 0.0
    t_comp = 0.0
    drift_int = 0.0
    drift_comp = 0.0
    qv_int = 0.0
    qv_comp = 0.0
    k = 0
    for ci in range(seg_targets.shape[0]):
        while k < seg_ends[ci]:
            dt = dts[k]
            y = dt * drift - drift_comp
            tmp = drift_int + y
            drift_comp = (tmp - drift_int) - y
            drift_int = tmp
            y = dt * gamma_val - qv_comp
            tmp = qv_int + y
            qv_comp = (tmp - qv_int) - y
            qv_int = tmp
            y = dt - t_comp
            tmp = t + y
            t_comp = (tmp - t) - y
            t = tmp

            eid = np.int64(eids[k])
            s1, s2 = _apply_event_k(occ, eid, b)
            pairing += _pair_delta(eid, b, gsite)
            drift += _pair_delta(eid, b, awm)
            lo = s1 if s2 < 0 else s1 if s1 < s2 else s2
            hi = s1 if s2 < 0 else s2 if s1 < s2 else s1
            j0 = lo - 1 if lo >= 1 else 0
            j1 = hi + 1 if hi + 1 <= b else b
            for j in range(j0, j1):
                act = np.float64(occ[j] * (alpha - occ[j + 1]) + occ[j + 1] * (alpha - occ[j]))
                new_term = act * qw[j]
                gamma_val += new_term - bond_terms[j]
                bond_terms[j] = new_term
            if lo == 0:
                new_term = (eps_s * (alpha - occ[0]) + gam_s * occ[0]) * qbl
                gamma_val += new_term - bterm_l
                bterm_l = new_term
            if hi == sites - 1:
                new_term = (del_s * (alpha - occ[sites - 1]) + bet_s * occ[sites - 1]) * qbr
                gamma_val += new_term - bterm_r
                bterm_r = new_term
            k += 1
        residual = seg_targets[ci] - t
        if residual > 0.0:
            drift_int += residual * drift
            qv_int += residual * gamma_val
            t = seg_targets[ci]
            t_comp = 0.0
            drift_comp = 0.0
            qv_comp = 0.0
        out_pairing[ci] = pairing
        out_mart[ci] = (pairing - pairing0) - drift_int
        out_qv[ci] = qv_int
        for s in range(sites):
            out_occ[ci, s] = occ[s]


@njit(cache=True)
def _integrals_replay(
    occ,
    eids,
    dts,
    seg_ends,
    seg_targets,
    b,
    rho_minus,
    rho_plus,
    win_right,
    win_left,
    out_left,
    out_right,
    out_avg_right,
    out_avg_left,
):
    """Time integrals of the boundary replacement discrepancies.

    out_left[ci] accumulates the microscopic integral of
    (rho_minus - occ[site 1]) up to checkpoint ci, out_right the mirror at
    the last site. out_avg_right[w, ci] integrates occ[site 1] minus the
    average of the win_right[w] sites to its right; out_avg_left mirrors it
    from the last site leftward. Divide by n**2 for macroscopic integrals.
    """
    sites = b + 1
    nw_r = win_right.shape[0]
    nw_l = win_left.shape[0]
    sum_r = np.zeros(nw_r, dtype=np.float64)
    sum_l = np.zeros(nw_l, dtype=np.float64)
    for w in range(nw_r):
        for s in range(1, win_right[w] + 1):
            sum_r[w] += occ[s]
    for w in range(nw_l):
        for s in range(sites - 1 - win_left[w], sites - 1):
            sum_l[w] += occ[s]

    int_left = 0.0
    int_right = 0.0
    int_avg_r = np.zeros(nw_r, dtype=np.float64)
    int_avg_l = np.zeros(nw_l, dtype=np.float64)
    t = 0.0
    k = 0
    for ci in range(seg_targets.shape[0]):
        while k < seg_ends[ci]:
            dt = dts[k]
            int_left += dt * (rho_minus - occ[0])
            int_right += dt * (rho_plus - occ[sites - 1])
            for w in range(nw_r):
                int_avg_r[w] += dt * (occ[0] - sum_r[w] / win_right[w])
            for w in range(nw_l):
                int_avg_l[w] += dt * (occ[sites - 1] - sum_l[w] / win_left[w])
            t += dt
            eid = np.int64(eids[k])
            # per-site occupancy deltas, mirrored from _apply_event_k
            if eid < b:
                sa, da, sb_, db_ = eid, -1, eid + 1, 1
            elif eid < 2 * b:
                j = eid - b
                sa, da, sb_, db_ = j, 1, j + 1, -1
            else:
                kk = eid - 2 * b
                sb_, db_ = -1, 0
                if kk == 0:
                    sa, da = 0, 1
                elif kk == 1:
                    sa, da = 0, -1
                elif kk == 2:
                    sa, da = sites - 1, 1
                else:
                    sa, da = sites - 1, -1
            _apply_event_k(occ, eid, b)
            for w in range(nw_r):
                if 1 <= sa <= win_right[w]:
                    sum_r[w] += da
                if sb_ >= 0 and 1 <= sb_ <= win_right[w]:
                    sum_r[w] += db_
            for w in range(nw_l):
                if sites - 1 - win_left[w] <= sa <= sites - 2:
                    sum_l[w] += da
                if sb_ >= 0 and sites - 1 - win_left[w] <= sb_ <= sites - 2:
                    sum_l[w] += db_
            k += 1
        residual = seg_targets[ci] - t
        if residual > 0.0:
            int_left += residual * (rho_minus - occ[0])
            int_right += residual * (rho_plus - occ[sites - 1])
            for w in range(nw_r):
                int_avg_r[w] += residual * (occ[0] - sum_r[w] / win_right[w])
            for w in range(nw_l):
                int_avg_l[w] += residual * (occ[sites - 1] - sum_l[w] / win_left[w])
            t = seg_targets[ci]
        out_left[ci] = int_left
        out_right[ci] = int_right
        for w in range(nw_r):
            out_avg_right[w, ci] = int_avg_r[w]
        for w in range(nw_l):
            out_avg_left[w, ci] = int_avg_l[w]
