"""Dynkin decomposition of the empirical pairing along logged trajectories.

For a test function G and the pairing f(eta) = (1/(n-1)) sum_x eta(x) G(x/n),
the process M_t = f(eta_t) - f(eta_0) - int_0^t (generator f)(eta_s) ds is a
martingale, and M_t^2 minus the integrated carre du champ
Gamma(f) = sum_events rate * (delta f)^2 is one as well. Both integrands are
affine respectively quadratic in the occupancies and piecewise constant
between jumps, so a logged trajectory determines them exactly: the replay
walks the event list once and accumulates the integrals in compensated
sums, no re-simulation involved.

All times are macroscopic. Because the macroscopic compensator
int_0^t n^2 (L f)(eta_{s n^2}) ds equals the microscopic integral of the
unscaled generator along the same path, the replay works in microscopic
time throughout and no scaling factor appears afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels as _k
from .engine import TrajectoryRecord, _damped_reservoir_rates
from .model import ModelParams

__all__ = [
    "DynkinSeries",
    "ReplacementIntegrals",
    "pairing_weights",
    "drift_weights",
    "variance_weights",
    "generator_pairing_drift",
    "dynkin_martingale",
    "boundary_replacement_integrals",
]


@dataclass(frozen=True)
class DynkinSeries:
    """Pairing, martingale, and bracket values at the checkpoint times."""

    times: np.ndarray
    pairing: np.ndarray
    martingale: np.ndarray
    quadratic_variation: np.ndarray
    pairing_initial: float


@dataclass(frozen=True)
class ReplacementIntegrals:
    """Time integrals of the boundary replacement discrepancies.

    boundary_left[i] is int_0^{t_i} (rho_minus - eta_s(1)) ds up to
    checkpoint t_i, boundary_right the mirror at site n-1. block_right[w, i]
    integrates eta_s(1) minus the average over the windows_right[w] sites
    to its right; block_left mirrors from site n-1 leftward. All integrals
    are macroscopic (the microscopic replay totals divided by n**2).
    """

    times: np.ndarray
    boundary_left: np.ndarray
    boundary_right: np.ndarray
    windows_right: np.ndarray
    windows_left: np.ndarray
    block_right: np.ndarray
    block_left: np.ndarray


def _grid_values(fn: Callable, n: int) -> np.ndarray:
    """fn evaluated on the closed grid 0, 1/n, ..., 1."""
    u = np.arange(0, n + 1, dtype=np.float64) / n
    try:
        vals = np.asarray(fn(u), dtype=np.float64)
        if vals.shape != u.shape:
            raise ValueError
    except Exception:
        vals = np.array([float(fn(v)) for v in u])
    if not np.all(np.isfinite(vals)):
        raise ValueError("test function must be finite on the grid")
    return vals


def pairing_weights(params: ModelParams, fn: Callable) -> np.ndarray:
    """Site weights of the pairing: G(x/n)/(n-1) at site x."""
    g = _grid_values(fn, params.n)
    return g[1:-1] / params.sites


def drift_weights(params: ModelParams, fn: Callable) -> tuple[np.ndarray, float]:
    """The generator applied to the pairing, as an affine map of occupancies.

    Returns (w, c) with (L f)(eta) = sum_s eta[s] * w[s] + c. Bulk bonds
    contribute alpha * (G increment) * (occupancy difference); each
    reservoir contributes its intensity sum times (reservoir density minus
    the boundary occupancy) times the boundary weight.
    """
    n = params.n
    g = _grid_values(fn, n)
    sites = params.sites
    w = np.zeros(sites, dtype=np.float64)
    pref = params.alpha / sites
    for x in range(1, sites + 1):
        c = 0.0
        if x <= n - 2:
            c += g[x + 1] - g[x]
        if x >= 2:
            c -= g[x] - g[x - 1]
        w[x - 1] = pref * c
    eps_s, gam_s, del_s, bet_s = _damped_reservoir_rates(params)
    w[0] -= (eps_s + gam_s) * g[1] / sites
    w[-1] -= (del_s + bet_s) * g[n - 1] / sites
    const = (eps_s + gam_s) * params.rho_minus * g[1] / sites
    const += (del_s + bet_s) * params.rho_plus * g[n - 1] / sites
    return w, float(const)


def variance_weights(params: ModelParams, fn: Callable) -> tuple[np.ndarray, float, float]:
    """Squared pairing increments of the bonds and the two reservoir moves.

    The carre du champ of the pairing is the sum over events of
    rate * (pairing increment)^2; both directions of a bond share the same
    squared increment, so each bond carries one weight multiplied by its
    total activity.
    """
    n = params.n
    g = _grid_values(fn, n)
    denom = float(params.sites) ** 2
    qw = np.diff(g[1:n]) ** 2 / denom
    qbl = g[1] ** 2 / denom
    qbr = g[n - 1] ** 2 / denom
    return qw, float(qbl), float(qbr)


def generator_pairing_drift(params: ModelParams, occ: np.ndarray, fn: Callable) -> float:
    """(L f)(eta) for the pairing f of ``fn``, evaluated at one configuration."""
    w, c = drift_weights(params, fn)
    return float(np.dot(np.asarray(occ, dtype=np.float64), w) + c)


def _require_log(record: TrajectoryRecord) -> None:
    if record.log is None:
        raise ValueError("trajectory was not captured; rerun with capture_log=True")


def dynkin_martingale(record: TrajectoryRecord, fn: Callable) -> DynkinSeries:
    """Exact replay of the Dynkin decomposition for test function ``fn``.

    ``fn`` must not depend on time. Returns the pairing, the martingale
    part, and the integrated carre du champ at the record's checkpoints.
    """
    _require_log(record)
    p = record.params
    gsite = pairing_weights(p, fn)
    awm, aconst = drift_weights(p, fn)
    qw, qbl, qbr = variance_weights(p, fn)
    eps_s, gam_s, del_s, bet_s = _damped_reservoir_rates(p)
    log = record.log
    k = log.seg_targets_micro.size
    out_pairing = np.empty(k, dtype=np.float64)
    out_mart = np.empty(k, dtype=np.float64)
    out_qv = np.empty(k, dtype=np.float64)
    out_occ = np.empty((k, p.sites), dtype=np.int64)
    occ = record.occ_initial.astype(np.int64, copy=True)
    _k._dynkin_replay(
        occ,
        log.event_ids,
        log.waits,
        log.seg_ends,
        log.seg_targets_micro,
        p.alpha,
        p.bonds,
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
    )
    if not np.array_equal(out_occ[-1], record.occupancies[-1]):
        raise RuntimeError("replay deviated from the recorded trajectory")
    pairing0 = float(np.dot(record.occ_initial.astype(np.float64), gsite))
    return DynkinSeries(
        times=record.times.copy(),
        pairing=out_pairing,
        martingale=out_mart,
        quadratic_variation=out_qv,
        pairing_initial=pairing0,
    )


def boundary_replacement_integrals(
    record: TrajectoryRecord,
    windows_right: Sequence[int] | np.ndarray = (),
    windows_left: Sequence[int] | np.ndarray = (),
) -> ReplacementIntegrals:
    """Replay the boundary and block-average discrepancy integrals.

    Window lengths count sites: a right window of length L averages the L
    sites directly right of site 1, a left window the L sites directly left
    of site n-1, so L must stay below the number of sites.
    """
    _require_log(record)
    p = record.params
    win_r = np.asarray(windows_right, dtype=np.int64)
    win_l = np.asarray(windows_left, dtype=np.int64)
    for win in (win_r, win_l):
        if win.size and (np.any(win < 1) or np.any(win > p.sites - 1)):
            raise ValueError(f"window lengths must lie in [1, {p.sites - 1}]")
    log = record.log
    k = log.seg_targets_micro.size
    out_left = np.empty(k, dtype=np.float64)
    out_right = np.empty(k, dtype=np.float64)
    out_avg_r = np.empty((win_r.size, k), dtype=np.float64)
    out_avg_l = np.empty((win_l.size, k), dtype=np.float64)
    occ = record.occ_initial.astype(np.int64, copy=True)
    _k._integrals_replay(
        occ,
        log.event_ids,
        log.waits,
        log.seg_ends,
        log.seg_targets_micro,
        p.bonds,
        p.rho_minus,
        p.rho_plus,
        win_r,
        win_l,
        out_left,
        out_right,
        out_avg_r,
        out_avg_l,
    )
    if not np.array_equal(occ, record.occupancies[-1]):
        raise RuntimeError("replay deviated from the recorded trajectory")
    n2 = float(p.n) ** 2
    return ReplacementIntegrals(
        times=record.times.copy(),
        boundary_left=out_left / n2,
        boundary_right=out_right / n2,
        windows_right=win_r,
        windows_left=win_l,
        block_right=out_avg_r / n2,
        block_left=out_avg_l / n2,
    )
