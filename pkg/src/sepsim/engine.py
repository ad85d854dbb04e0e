"""Event-driven kinetic Monte Carlo engine.

Exact (Gillespie) simulation of the reservoir-driven exclusion dynamics:
exponential waiting times at the total rate, events picked proportionally
to their rates through a binary sum tree, occupancies updated in place.
Public entry points speak macroscopic time t; internally the clock runs in
microscopic time t * n**2 so one unit of t is one diffusive time.

Trajectories can capture their full event log (event id + waiting time per
jump, with segment markers at the checkpoints). A logged trajectory can be
replayed exactly, which is how the martingale module computes additive
functionals without a second simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as _k
from .model import (
    Event,
    ModelParams,
    Profile,
    event_count,
    event_from_id,
    sample_initial,
)

__all__ = [
    "EVENT_LOG_DTYPE",
    "RateTable",
    "SimulationState",
    "EventLog",
    "EmpiricalProfile",
    "TrajectoryRecord",
    "build_state",
    "step",
    "run_until",
    "run_trajectory",
    "snapshot_profile",
    "reservoir_event_counts",
    "net_reservoir_flux",
    "write_trajectory_csv",
    "write_event_log",
    "read_event_log",
]

EVENT_LOG_DTYPE = np.dtype([("event_id", "<u4"), ("dt", "<f8")])

_LOG_MAGIC = b"SEPLOG1\x00"

_EMPTY_U32 = np.empty(0, dtype=np.uint32)
_EMPTY_F64 = np.empty(0, dtype=np.float64)


class RateTable:
    """Binary sum tree over per-event rates.

    Sampling and single-rate updates are O(log m). Leaves live in
    tree[capacity : capacity + size]; every internal node is the sum of its
    two children, and updates recompute ancestors with the same
    bottom-up additions as a full build, so a rebuild reproduces the tree
    bit for bit.
    """

    def __init__(self, rates: Sequence[float] | np.ndarray) -> None:
        rates = np.asarray(rates, dtype=np.float64)
        if rates.ndim != 1 or rates.size == 0:
            raise ValueError("rates must be a non-empty 1-d array")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and non-negative")
        self.size = int(rates.shape[0])
        cap = 1
        while cap < self.size:
            cap *= 2
        self.capacity = cap
        self.tree = np.zeros(2 * cap, dtype=np.float64)
        _k._tree_build(self.tree, cap, rates)

    @property
    def total_rate(self) -> float:
        return float(self.tree[1])

    def rate(self, idx: int) -> float:
        if not 0 <= idx < self.size:
            raise IndexError(f"event index out of range: {idx}")
        return float(self.tree[self.capacity + idx])

    def rates(self) -> np.ndarray:
        return self.tree[self.capacity : self.capacity + self.size].copy()

    def update(self, idx: int, value: float) -> None:
        if not 0 <= idx < self.size:
            raise IndexError(f"event index out of range: {idx}")
        if not value >= 0:
            raise ValueError(f"rates must be non-negative, got {value!r}")
        _k._tree_set(self.tree, self.capacity, idx, float(value))

    def sample(self, u: float) -> int:
        """Index of the leaf whose cumulative interval contains u * total."""
        if not 0.0 <= u < 1.0:
            raise ValueError(f"u must lie in [0, 1), got {u!r}")
        if self.total_rate <= 0.0:
            raise RuntimeError("cannot sample from an all-zero rate table")
        return int(_k._tree_sample(self.tree, self.capacity, self.size, float(u)))

    def rebuild(self) -> float:
        """Recompute all internal nodes from the leaves.

        Returns the largest absolute change of any node; by construction
        this is exactly 0.0.
        """
        old = self.tree.copy()
        leaves = old[self.capacity : self.capacity + self.size].copy()
        _k._tree_build(self.tree, self.capacity, leaves)
        return float(np.max(np.abs(self.tree - old)))


@dataclass
class SimulationState:
    """Mutable state of one running chain.

    clock is (microscopic time, compensation term of the Kahan sum);
    rng_state is the 4-word xoshiro256++ state, advanced in place.
    """

    params: ModelParams
    occ: np.ndarray
    table: RateTable
    clock: np.ndarray
    rng_state: np.ndarray
    events_applied: int = 0

    @property
    def time_micro(self) -> float:
        return float(self.clock[0])

    @property
    def time(self) -> float:
        """Current macroscopic time, micro clock over n**2."""
        return float(self.clock[0]) / (self.params.n * self.params.n)


@dataclass(frozen=True)
class EventLog:
    """Full jump record of one trajectory.

    waits are microscopic; seg_ends[i] is the number of events applied up
    to checkpoint i, and seg_targets_micro[i] the checkpoint's microscopic
    time measured from the start of the capture.
    """

    event_ids: np.ndarray
    waits: np.ndarray
    seg_ends: np.ndarray
    seg_targets_micro: np.ndarray

    def __post_init__(self) -> None:
        if self.event_ids.shape != self.waits.shape:
            raise ValueError("event_ids and waits must have equal length")
        if self.seg_ends.shape != self.seg_targets_micro.shape:
            raise ValueError("segment arrays must have equal length")
        if self.seg_ends.size == 0:
            raise ValueError("a log needs at least one segment")
        if np.any(np.diff(self.seg_ends) < 0):
            raise ValueError("seg_ends must be non-decreasing")
        if int(self.seg_ends[-1]) != int(self.event_ids.size):
            raise ValueError("last segment must end at the final event")


@dataclass(frozen=True)
class EmpiricalProfile:
    """Occupancies coarse-grained onto m macroscopic cells of (0, 1]."""

    bin_centers: np.ndarray
    density: np.ndarray
    site_counts: np.ndarray


@dataclass(frozen=True)
class TrajectoryRecord:
    """One simulated trajectory observed at fixed macroscopic checkpoints."""

    params: ModelParams
    times: np.ndarray
    bin_centers: np.ndarray
    profiles: np.ndarray
    occupancies: np.ndarray
    occ_initial: np.ndarray
    occ_final: np.ndarray
    event_count: int
    log: EventLog | None = None


def _damped_reservoir_rates(params: ModelParams) -> tuple[float, float, float, float]:
    s = params.boundary_scale
    return (s * params.epsilon, s * params.gamma, s * params.delta, s * params.beta)


def _initial_rates(occ: np.ndarray, params: ModelParams) -> np.ndarray:
    rates = np.zeros(event_count(params.n), dtype=np.float64)
    eps_s, gam_s, del_s, bet_s = _damped_reservoir_rates(params)
    _k._all_rates(occ, params.alpha, params.bonds, eps_s, gam_s, del_s, bet_s, rates)
    return rates


def build_state(
    params: ModelParams,
    initial: Profile | np.ndarray | Sequence[int],
    seed: int | np.random.SeedSequence = 0,
) -> SimulationState:
    """Fresh simulation state at microscopic time zero.

    ``initial`` is either a density profile (sampled site by site from the
    product binomial law) or an explicit occupancy array. ``seed`` feeds a
    SeedSequence whose two children drive the initial sampling and the
    event stream, so distinct seeds give independent streams and equal
    seeds reproduce runs bit for bit.
    """
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(seed)
    init_ss, stream_ss = root.spawn(2)
    if isinstance(initial, Profile):
        occ = sample_initial(params, initial, np.random.default_rng(init_ss))
    else:
        occ = np.array(initial, dtype=np.int64, copy=True)
        if occ.shape != (params.sites,):
            raise ValueError(
                f"initial occupancies must have shape ({params.sites},), got {occ.shape}"
            )
        if np.any(occ < 0) or np.any(occ > params.alpha):
            raise ValueError("initial occupancies must lie in [0, alpha]")
    rng_state = stream_ss.generate_state(4, np.uint64)
    if not rng_state.any():
        # the generator must not start from the all-zero fixed point
        rng_state[0] = np.uint64(0x9E3779B97F4A7C15)
    table = RateTable(_initial_rates(occ, params))
    clock = np.zeros(2, dtype=np.float64)
    return SimulationState(params, occ, table, clock, rng_state, 0)


def step(state: SimulationState) -> tuple[Event, float]:
    """Apply exactly one event; returns it with its microscopic wait."""
    if state.table.total_rate <= 0.0:
        raise RuntimeError("no enabled events")
    p = state.params
    eps_s, gam_s, del_s, bet_s = _damped_reservoir_rates(p)
    eids = np.empty(1, dtype=np.uint32)
    dts = np.empty(1, dtype=np.float64)
    applied, status = _k._advance(
        state.occ,
        state.table.tree,
        state.table.capacity,
        state.clock,
        state.rng_state,
        np.inf,
        p.alpha,
        p.bonds,
        eps_s,
        gam_s,
        del_s,
        bet_s,
        eids,
        dts,
        True,
        1,
    )
    if applied != 1 or status != 1:
        raise RuntimeError(f"single-step advance applied {applied} events")
    state.events_applied += 1
    return event_from_id(int(eids[0]), p.n), float(dts[0])


def _advance_to(
    state: SimulationState,
    target_micro: float,
    eids: np.ndarray,
    dts: np.ndarray,
    capture: bool,
    max_log: int,
) -> tuple[int, int]:
    p = state.params
    eps_s, gam_s, del_s, bet_s = _damped_reservoir_rates(p)
    applied, status = _k._advance(
        state.occ,
        state.table.tree,
        state.table.capacity,
        state.clock,
        state.rng_state,
        float(target_micro),
        p.alpha,
        p.bonds,
        eps_s,
        gam_s,
        del_s,
        bet_s,
        eids,
        dts,
        capture,
        max_log,
    )
    state.events_applied += int(applied)
    return int(applied), int(status)


def run_until(state: SimulationState, t: float) -> int:
    """Advance to macroscopic time ``t``; returns the number of events.

    Stopping between jumps is exact: the leftover exponential wait is
    memoryless, so the fresh draw after resuming has the right law.
    """
    target = float(t) * state.params.n * state.params.n
    if not np.isfinite(target):
        raise ValueError(f"target time must be finite, got {t!r}")
    if target < state.clock[0]:
        raise ValueError(
            f"cannot run backwards: target {t!r} precedes the current time {state.time!r}"
        )
    applied, _ = _advance_to(state, target, _EMPTY_U32, _EMPTY_F64, False, 0)
    return applied


def _run_segment_logged(
    state: SimulationState,
    target_micro: float,
    eid_chunks: list[np.ndarray],
    dt_chunks: list[np.ndarray],
    chunk: int,
) -> int:
    total = 0
    while True:
        eids = np.empty(chunk, dtype=np.uint32)
        dts = np.empty(chunk, dtype=np.float64)
        applied, status = _advance_to(state, target_micro, eids, dts, True, chunk)
        if applied:
            eid_chunks.append(eids[:applied])
            dt_chunks.append(dts[:applied])
        total += applied
        if status == 0:
            return total


def snapshot_profile(occ: np.ndarray, n: int, m: int) -> EmpiricalProfile:
    """Average occupancies over m equal cells of (0, 1].

    Site x falls in cell j = (x*m - 1) // n, the unique j with
    x/n in (j/m, (j+1)/m]. Requires m <= n-1 so that every cell contains a
    site; density stays on the particles-per-site scale [0, alpha].
    """
    occ = np.asarray(occ)
    if occ.shape != (n - 1,):
        raise ValueError(f"expected {n - 1} occupancies, got shape {occ.shape}")
    if not 1 <= m <= n - 1:
        raise ValueError(f"bin count must satisfy 1 <= m <= n-1, got {m}")
    x = np.arange(1, n, dtype=np.int64)
    j = (x * m - 1) // n
    counts = np.bincount(j, minlength=m)
    sums = np.bincount(j, weights=occ.astype(np.float64), minlength=m)
    centers = (np.arange(m, dtype=np.float64) + 0.5) / m
    return EmpiricalProfile(centers, sums / counts, counts)


def run_trajectory(
    state: SimulationState,
    checkpoints: Sequence[float] | np.ndarray,
    m_bins: int | None = None,
    capture_log: bool = False,
    chunk: int = 1 << 20,
) -> TrajectoryRecord:
    """Advance through increasing macroscopic checkpoints, recording profiles.

    With ``capture_log`` the full event sequence is kept, segmented at the
    checkpoints, which allows exact replays. ``m_bins`` defaults to one bin
    per site.
    """
    p = state.params
    n = p.n
    cps = np.array(checkpoints, dtype=np.float64, copy=True)
    if cps.ndim != 1 or cps.size == 0:
        raise ValueError("checkpoints must form a non-empty 1-d sequence")
    if not np.all(np.isfinite(cps)):
        raise ValueError("checkpoints must be finite")
    if np.any(np.diff(cps) <= 0.0):
        raise ValueError("checkpoints must be strictly increasing")
    if cps[0] * n * n < state.clock[0]:
        raise ValueError("first checkpoint precedes the current time")
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    m = p.sites if m_bins is None else int(m_bins)

    occ0 = state.occ.copy()
    epoch = float(state.clock[0])
    eid_chunks: list[np.ndarray] = []
    dt_chunks: list[np.ndarray] = []
    seg_ends = np.empty(cps.size, dtype=np.int64)
    occs = np.empty((cps.size, p.sites), dtype=np.int64)
    total = 0
    for i, t in enumerate(cps):
        target = float(t) * n * n
        if capture_log:
            total += _run_segment_logged(state, target, eid_chunks, dt_chunks, chunk)
        else:
            applied, _ = _advance_to(state, target, _EMPTY_U32, _EMPTY_F64, False, 0)
            total += applied
        seg_ends[i] = total
        occs[i] = state.occ

    log = None
    if capture_log:
        ids = np.concatenate(eid_chunks) if eid_chunks else _EMPTY_U32.copy()
        waits = np.concatenate(dt_chunks) if dt_chunks else _EMPTY_F64.copy()
        log = EventLog(ids, waits, seg_ends.copy(), cps * n * n - epoch)
    profiles = np.stack([snapshot_profile(occs[i], n, m).density for i in range(cps.size)])
    centers = snapshot_profile(occs[0], n, m).bin_centers
    return TrajectoryRecord(
        params=p,
        times=cps,
        bin_centers=centers,
        profiles=profiles,
        occupancies=occs,
        occ_initial=occ0,
        occ_final=state.occ.copy(),
        event_count=total,
        log=log,
    )


def reservoir_event_counts(event_ids: np.ndarray, n: int) -> tuple[int, int, int, int]:
    """Counts of (inject left, remove left, inject right, remove right)."""
    b = max(n - 2, 0)
    ids = np.asarray(event_ids)
    return (
        int(np.count_nonzero(ids == 2 * b)),
        int(np.count_nonzero(ids == 2 * b + 1)),
        int(np.count_nonzero(ids == 2 * b + 2)),
        int(np.count_nonzero(ids == 2 * b + 3)),
    )


def net_reservoir_flux(event_ids: np.ndarray, n: int) -> int:
    """Particles injected minus removed; equals the total mass change."""
    inj_l, rem_l, inj_r, rem_r = reservoir_event_counts(event_ids, n)
    return inj_l - rem_l + inj_r - rem_r


def write_trajectory_csv(record: TrajectoryRecord, path: str) -> None:
    """Delimited checkpoint profiles: macro_time,bin_index,bin_center,density."""
    lines = ["macro_time,bin_index,bin_center,density"]
    for i in range(record.times.size):
        t = repr(float(record.times[i]))
        for j in range(record.bin_centers.size):
            lines.append(
                f"{t},{j},{float(record.bin_centers[j])!r},{float(record.profiles[i, j])!r}"
            )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def write_event_log(log: EventLog, path: str) -> None:
    """Binary event log: magic, sizes, segment arrays, then (id, wait) records."""
    with open(path, "wb") as fh:
        fh.write(_LOG_MAGIC)
        np.array([log.event_ids.size, log.seg_ends.size], dtype="<u8").tofile(fh)
        log.seg_ends.astype("<i8").tofile(fh)
        log.seg_targets_micro.astype("<f8").tofile(fh)
        records = np.empty(log.event_ids.size, dtype=EVENT_LOG_DTYPE)
        records["event_id"] = log.event_ids
        records["dt"] = log.waits
        records.tofile(fh)


def read_event_log(path: str) -> EventLog:
    with open(path, "rb") as fh:
        magic = fh.read(len(_LOG_MAGIC))
        if magic != _LOG_MAGIC:
            raise ValueError(f"not an event log file: {path}")
        sizes = np.fromfile(fh, dtype="<u8", count=2)
        if sizes.size != 2:
            raise ValueError(f"truncated event log header: {path}")
        n_events, n_segs = int(sizes[0]), int(sizes[1])
        seg_ends = np.fromfile(fh, dtype="<i8", count=n_segs)
        seg_targets = np.fromfile(fh, dtype="<f8", count=n_segs)
        records = np.fromfile(fh, dtype=EVENT_LOG_DTYPE, count=n_events)
        if seg_ends.size != n_segs or seg_targets.size != n_segs or records.size != n_events:
            raise ValueError(f"truncated event log body: {path}")
    return EventLog(
        records["event_id"].astype(np.uint32),
        records["dt"].astype(np.float64),
        seg_ends.astype(np.int64),
        seg_targets,
    )
