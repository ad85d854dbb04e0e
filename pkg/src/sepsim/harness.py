"""Ensemble experiments comparing the particle system with its scaling limit.

Each operation runs seeded ensembles of trajectories, aggregates them in a
fixed order, measures distances to the matching heat-equation solution, and
returns a report that is a pure function of (plan, master seed).
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import SCHEMA_VERSION
from .engine import (
    build_state,
    net_reservoir_flux,
    reservoir_event_counts,
    run_trajectory,
)
from .martingale import boundary_replacement_integrals, dynkin_martingale
from .model import ModelParams, Profile
from .pde import (
    BoundaryConditionSpec,
    PdeSolution,
    bc_from_theta,
    evaluate_solution,
    solve_heat_equation,
)

METRICS = ("L1", "L2", "sup")


@dataclass(frozen=True)
class ExperimentPlan:
    """One fully seeded ensemble study over a list of system sizes."""

    alpha: int
    theta: float
    epsilon: float
    gamma: float
    delta: float
    beta: float
    n_values: tuple[int, ...]
    checkpoints: tuple[float, ...] = (0.05, 0.1, 0.2)
    ensemble_size: int = 50
    m_bins: int = 20
    seed: int = 0
    metrics: tuple[str, ...] = METRICS
    initial: Profile = field(default_factory=lambda: Profile.constant(0.5))
    grid_size: int = 512
    l1_tolerance: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "checkpoints", tuple(float(t) for t in self.checkpoints))
        object.__setattr__(self, "metrics", tuple(str(m) for m in self.metrics))
        if not self.n_values:
            raise ValueError("plan needs at least one system size")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise ValueError("n_values must be strictly increasing")
        # constructing params validates alpha, theta, and the rates
        self.params_for(self.n_values[0])
        if not self.checkpoints:
            raise ValueError("plan needs at least one checkpoint")
        cps = self.checkpoints
        if any(not math.isfinite(t) or t <= 0.0 for t in cps):
            raise ValueError("checkpoints must be finite and positive")
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        if self.ensemble_size < 1:
            raise ValueError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if not 1 <= self.m_bins <= self.n_values[0] - 1:
            raise ValueError(
                f"m_bins must lie in [1, {self.n_values[0] - 1}] so no bin is empty "
                f"at the smallest size, got {self.m_bins}"
            )
        if not self.metrics or any(m not in METRICS for m in self.metrics):
            raise ValueError(f"metrics must be a non-empty subset of {METRICS}")
        if not isinstance(self.initial, Profile):
            raise ValueError("initial must be a Profile")
        if self.grid_size < 2:
            raise ValueError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.l1_tolerance is not None and self.l1_tolerance <= 0.0:
            raise ValueError("l1_tolerance must be positive when given")

    def params_for(self, n: int, theta: float | None = None) -> ModelParams:
        return ModelParams(
            alpha=self.alpha,
            n=n,
            theta=self.theta if theta is None else theta,
            epsilon=self.epsilon,
            gamma=self.gamma,
            delta=self.delta,
            beta=self.beta,
        )

    def replica_seed(self, n: int, replica: int) -> np.random.SeedSequence:
        # the seed depends only on the replica's coordinates, never on the
        # execution order, so parallel and serial runs draw the same streams
        return np.random.SeedSequence(entropy=(int(self.seed), int(n), int(replica)))

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "theta": self.theta,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "delta": self.delta,
            "beta": self.beta,
            "n_values": list(self.n_values),
            "checkpoints": list(self.checkpoints),
            "ensemble_size": self.ensemble_size,
            "m_bins": self.m_bins,
            "seed": self.seed,
            "metrics": list(self.metrics),
            "initial": {"kind": self.initial.kind, "values": list(self.initial.values)},
            "grid_size": self.grid_size,
            "l1_tolerance": self.l1_tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentPlan":
        if not isinstance(data, dict):
            raise ValueError("plan must be a JSON object")
        kwargs = dict(data)
        init = kwargs.pop("initial", None)
        if init is not None:
            if not isinstance(init, dict) or set(init) != {"kind", "values"}:
                raise ValueError("initial must be {kind, values}")
            kwargs["initial"] = Profile(str(init["kind"]), tuple(float(v) for v in init["values"]))
        known = set(cls.__dataclass_fields__)
        unknown = set(kwargs) - known
        if unknown:
            raise ValueError(f"unknown plan fields: {sorted(unknown)}")
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentPlan":
        return cls.from_dict(json.loads(text))


@dataclass
class HarnessReport:
    """Outcome of one harness operation: checks, metric rows, profile rows."""

    kind: str
    plan: dict
    checks: list[dict]
    rows: list[dict]
    profiles: list[dict] = field(default_factory=list)
    spec_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "spec_version": self.spec_version,
            "passed": self.passed,
            "plan": self.plan,
            "checks": self.checks,
            "rows": self.rows,
            "profiles": self.profiles,
        }


def profile_distance(a: np.ndarray, b: np.ndarray, metric: str) -> float:
    """Distance between two binned profiles; L1 and L2 normalize by the bin count."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"profile shapes differ: {a.shape} vs {b.shape}")
    diff = np.abs(a - b)
    if metric == "L1":
        return float(np.mean(diff))
    if metric == "L2":
        return float(np.sqrt(np.mean(diff * diff)))
    if metric == "sup":
        return float(np.max(diff))
    raise ValueError(f"unknown metric {metric!r}, expected one of {METRICS}")


def bin_pde_reference(sol: PdeSolution, row: int, n: int, m: int) -> np.ndarray:
    """Solver values averaged over the same site bins the simulation uses."""
    x = np.arange(1, n, dtype=np.int64)
    vals = evaluate_solution(sol, row, x / n)
    bins = (x * m - 1) // n
    sums = np.bincount(bins, weights=vals, minlength=m)
    counts = np.bincount(bins, minlength=m)
    if np.any(counts == 0):
        raise ValueError(f"binning {n - 1} sites into {m} cells leaves an empty cell")
    return sums / counts


def _error_with_se(binned: np.ndarray, ref: np.ndarray, metric: str) -> tuple[float, float]:
    """Distance of the ensemble mean to ref, with a jackknife standard error."""
    r = binned.shape[0]
    err = profile_distance(binned.mean(axis=0), ref, metric)
    if r < 2:
        return err, float("nan")
    total = binned.sum(axis=0)
    loo = np.empty(r, dtype=np.float64)
    for i in range(r):
        loo[i] = profile_distance((total - binned[i]) / (r - 1), ref, metric)
    se = math.sqrt((r - 1) / r * float(np.sum((loo - loo.mean()) ** 2)))
    return err, se


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    samples = np.asarray(samples, dtype=np.float64)
    mean = float(samples.mean())
    if samples.size < 2:
        return mean, float("nan")
    return mean, float(samples.std(ddof=1) / math.sqrt(samples.size))


def _slack(se_a: float, se_b: float) -> float:
    """One standard error of a difference; NaN inputs contribute nothing."""
    a = 0.0 if math.isnan(se_a) else se_a
    b = 0.0 if math.isnan(se_b) else se_b
    return math.hypot(a, b)


def _run_binned_ensemble(plan: ExperimentPlan, n: int, theta: float | None = None) -> np.ndarray:
    """Binned profiles for every replica, shape (R, checkpoints, m_bins)."""
    params = plan.params_for(n, theta)
    out = np.empty((plan.ensemble_size, len(plan.checkpoints), plan.m_bins))
    for r in range(plan.ensemble_size):
        state = build_state(params, plan.initial, seed=plan.replica_seed(n, r))
        record = run_trajectory(state, plan.checkpoints, m_bins=plan.m_bins)
        out[r] = record.profiles
    return out


def _reference_solution(plan: ExperimentPlan, bc: BoundaryConditionSpec) -> PdeSolution:
    return solve_heat_equation(bc, plan.initial, plan.alpha, plan.checkpoints, m=plan.grid_size)


def _bin_centers(n: int, m: int) -> np.ndarray:
    x = np.arange(1, n, dtype=np.int64)
    bins = (x * m - 1) // n
    return np.bincount(bins, weights=x / n, minlength=m) / np.bincount(bins, minlength=m)


def hydrodynamic_convergence(plan: ExperimentPlan) -> HarnessReport:
    """Ensemble-mean empirical profiles against the theta-matched equation.

    The contract checked: the L1 error is non-increasing along the plan's
    size list up to one standard error of each difference, and the error at
    the largest size stays below the tolerance (default 0.03 * alpha).
    """
    bc = bc_from_theta(plan.params_for(plan.n_values[0]))
    sol = _reference_solution(plan, bc)
    tol = plan.l1_tolerance if plan.l1_tolerance is not None else 0.03 * plan.alpha

    rows: list[dict] = []
    profiles: list[dict] = []
    l1_err: dict[tuple[int, float], tuple[float, float]] = {}
    for n in plan.n_values:
        binned = _run_binned_ensemble(plan, n)
        centers = _bin_centers(n, plan.m_bins)
        for k, t in enumerate(plan.checkpoints):
            ref = bin_pde_reference(sol, k + 1, n, plan.m_bins)
            for metric in plan.metrics:
                err, se = _error_with_se(binned[:, k, :], ref, metric)
                rows.append(
                    {"n": n, "time": t, "metric": metric, "error": err, "std_error": se}
                )
                if metric == "L1":
                    l1_err[(n, t)] = (err, se)
            mean = binned[:, k, :].mean(axis=0)
            spread = binned[:, k, :].std(axis=0, ddof=1) if binned.shape[0] > 1 else np.zeros(
                plan.m_bins
            )
            for j in range(plan.m_bins):
                profiles.append(
                    {
                        "n": n,
                        "time": t,
                        "bin_index": j,
                        "bin_center": float(centers[j]),
                        "simulated": float(mean[j]),
                        "reference": float(ref[j]),
                        "bin_se": float(spread[j] / math.sqrt(binned.shape[0])),
                    }
                )

    checks: list[dict] = []
    for t in plan.checkpoints:
        errs = [l1_err[(n, t)] for n in plan.n_values]
        monotone = all(
            errs[i + 1][0] <= errs[i][0] + _slack(errs[i][1], errs[i + 1][1])
            for i in range(len(errs) - 1)
        )
        checks.append(
            {
                "name": f"L1 non-increasing in n at t={t:g}",
                "passed": bool(monotone),
                "detail": ", ".join(f"n={n}: {l1_err[(n, t)][0]:.6g}" for n in plan.n_values),
            }
        )
        final_err = errs[-1][0]
        checks.append(
            {
                "name": f"L1 at n={plan.n_values[-1]} within {tol:g} at t={t:g}",
                "passed": bool(final_err <= tol),
                "detail": f"error {final_err:.6g}",
            }
        )
    return HarnessReport("hydrodynamic_convergence", plan.to_dict(), checks, rows, profiles)


def boundary_condition_discrimination(
    plan: ExperimentPlan, thetas: Sequence[float] = (0.0, 1.0, 2.0)
) -> HarnessReport:
    """Each boundary-scaling regime matched against all three limit equations.

    At the largest size in the plan, the ensemble profile for each theta must
    be strictly closest in L1 to its own boundary condition. The theta > 1
    run must also conserve particles within three sigma of the boundary-event
    noise, and the theta < 1 run keeps the time average of the first site
    near the left reservoir density.
    """
    if plan.params_for(plan.n_values[0]).rho_minus == plan.params_for(plan.n_values[0]).rho_plus:
        raise ValueError("discrimination needs mismatched reservoir densities")
    n = plan.n_values[-1]
    base = plan.params_for(n)
    refs = {
        "dirichlet": _reference_solution(
            plan, BoundaryConditionSpec.dirichlet(base.rho_minus, base.rho_plus)
        ),
        "robin": _reference_solution(
            plan,
            BoundaryConditionSpec.robin(
                base.rho_minus,
                base.rho_plus,
                (plan.epsilon + plan.gamma) / plan.alpha,
                (plan.delta + plan.beta) / plan.alpha,
                kappa=1.0,
            ),
        ),
        "neumann": _reference_solution(plan, BoundaryConditionSpec.neumann()),
    }
    matched = {0: "dirichlet", 1: "robin", 2: "neumann"}
    t_final = plan.checkpoints[-1]
    last = len(plan.checkpoints) - 1
    binned_refs = {
        name: bin_pde_reference(sol, last + 1, n, plan.m_bins) for name, sol in refs.items()
    }

    rows: list[dict] = []
    checks: list[dict] = []
    for theta in thetas:
        params = plan.params_for(n, theta)
        own = matched[0 if theta < 1 else (1 if theta == 1 else 2)]
        binned = np.empty((plan.ensemble_size, plan.m_bins))
        drift = np.empty(plan.ensemble_size)
        boundary_events = np.empty(plan.ensemble_size)
        eta1_gap = np.empty(plan.ensemble_size)
        for r in range(plan.ensemble_size):
            state = build_state(params, plan.initial, seed=plan.replica_seed(n, r))
            record = run_trajectory(
                state, plan.checkpoints, m_bins=plan.m_bins, capture_log=True
            )
            binned[r] = record.profiles[last]
            drift[r] = record.occ_final.sum() - record.occ_initial.sum()
            boundary_events[r] = sum(reservoir_event_counts(record.log.event_ids, n))
            if theta < 1:
                integrals = boundary_replacement_integrals(record)
                eta1_gap[r] = integrals.boundary_left[-1] / t_final
        mean_profile = binned.mean(axis=0)
        dists = {
            name: profile_distance(mean_profile, ref, "L1")
            for name, ref in binned_refs.items()
        }
        for name, dist in dists.items():
            rows.append(
                {
                    "theta": theta,
                    "n": n,
                    "time": t_final,
                    "reference": name,
                    "l1_distance": dist,
                    "matched": int(name == own),
                }
            )
        others = [d for name, d in dists.items() if name != own]
        checks.append(
            {
                "name": f"theta={theta:g} closest to {own}",
                "passed": bool(all(dists[own] < d for d in others)),
                "detail": ", ".join(f"{name}: {d:.6g}" for name, d in sorted(dists.items())),
            }
        )
        if theta > 1:
            mean_drift, _ = _mean_se(drift)
            mean_events = float(boundary_events.mean())
            sigma = math.sqrt(mean_events / plan.ensemble_size)
            rows.append(
                {
                    "theta": theta,
                    "n": n,
                    "time": t_final,
                    "reference": "mass_drift",
                    "l1_distance": mean_drift,
                    "matched": -1,
                }
            )
            passed = abs(mean_drift) <= 3.0 * sigma if sigma > 0.0 else mean_drift == 0.0
            checks.append(
                {
                    "name": f"theta={theta:g} mass drift within 3 sigma of boundary noise",
                    "passed": bool(passed),
                    "detail": f"mean drift {mean_drift:.6g}, sigma {sigma:.6g}",
                }
            )
        if theta < 1:
            mean_gap, se_gap = _mean_se(eta1_gap)
            # the discrete stationary profile sits O(1/n) away from rho_minus
            allowance = 2.0 * abs(base.rho_plus - base.rho_minus) / n
            rows.append(
                {
                    "theta": theta,
                    "n": n,
                    "time": t_final,
                    "reference": "eta1_gap",
                    "l1_distance": mean_gap,
                    "matched": -1,
                }
            )
            checks.append(
                {
                    "name": f"theta={theta:g} first-site time average near rho_minus",
                    "passed": bool(abs(mean_gap) <= 3.0 * _slack(se_gap, 0.0) + allowance),
                    "detail": f"mean gap {mean_gap:.6g}, se {se_gap:.6g}",
                }
            )
    return HarnessReport("boundary_condition_discrimination", plan.to_dict(), checks, rows)


def replacement_diagnostics(
    plan: ExperimentPlan, eps_values: Sequence[float] = (0.2, 0.1, 0.05)
) -> HarnessReport:
    """Time-averaged boundary and block-average discrepancies along the sizes.

    Estimates E|int_0^T (rho_minus - eta(1)) ds| per size and the block
    discrepancy E|int_0^T (eta(1) - window average) ds| per size and window
    fraction. The boundary estimate applies to theta < 1 only.
    """
    eps = tuple(float(e) for e in eps_values)
    if not eps or any(not 0.0 < e < 1.0 for e in eps):
        raise ValueError("eps_values must lie strictly between 0 and 1")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_values must be strictly decreasing")
    for n in plan.n_values:
        if math.floor(eps[0] * n) > n - 2:
            raise ValueError(f"window fraction {eps[0]} overflows the lattice at n={n}")
        if math.floor(eps[-1] * n) < 1:
            raise ValueError(f"window fraction {eps[-1]} is below one site at n={n}")
    with_boundary = plan.theta < 1.0

    rows: list[dict] = []
    boundary_stats: list[tuple[float, float]] = []
    block_by_n: list[tuple[float, float]] = []
    block_by_eps: list[tuple[float, float]] = []
    n_max = plan.n_values[-1]
    for n in plan.n_values:
        params = plan.params_for(n)
        windows = [math.floor(e * n) for e in eps] if n == n_max else [math.floor(eps[0] * n)]
        bnd = np.empty(plan.ensemble_size)
        blocks = np.empty((len(windows), plan.ensemble_size))
        for r in range(plan.ensemble_size):
            state = build_state(params, plan.initial, seed=plan.replica_seed(n, r))
            record = run_trajectory(state, plan.checkpoints, m_bins=1, capture_log=True)
            integrals = boundary_replacement_integrals(record, windows_right=windows)
            bnd[r] = abs(integrals.boundary_left[-1])
            blocks[:, r] = np.abs(integrals.block_right[:, -1])
        if with_boundary:
            mean, se = _mean_se(bnd)
            boundary_stats.append((mean, se))
            rows.append(
                {
                    "n": n,
                    "quantity": "boundary_left",
                    "epsilon": float("nan"),
                    "window": 0,
                    "estimate": mean,
                    "std_error": se,
                }
            )
        for w, e in zip(range(len(windows)), eps[: len(windows)]):
            mean, se = _mean_se(blocks[w])
            if w == 0:
                block_by_n.append((mean, se))
            if n == n_max:
                block_by_eps.append((mean, se))
            rows.append(
                {
                    "n": n,
                    "quantity": "block_right",
                    "epsilon": e,
                    "window": windows[w],
                    "estimate": mean,
                    "std_error": se,
                }
            )

    checks: list[dict] = []

    def _chain(name: str, stats: list[tuple[float, float]], labels: list[str]) -> None:
        ok = all(
            stats[i + 1][0] <= stats[i][0] + _slack(stats[i][1], stats[i + 1][1])
            for i in range(len(stats) - 1)
        )
        checks.append(
            {
                "name": name,
                "passed": bool(ok),
                "detail": ", ".join(
                    f"{lab}: {mean:.6g}" for lab, (mean, _) in zip(labels, stats)
                ),
            }
        )

    n_labels = [f"n={n}" for n in plan.n_values]
    if with_boundary:
        _chain("boundary discrepancy decreasing in n", boundary_stats, n_labels)
    _chain("block discrepancy decreasing in n", block_by_n, n_labels)
    _chain(
        f"block discrepancy non-increasing as the window shrinks at n={n_max}",
        block_by_eps,
        [f"eps={e:g}" for e in eps],
    )
    return HarnessReport("replacement_diagnostics", plan.to_dict(), checks, rows)


def martingale_suite(
    plan: ExperimentPlan, test_functions: Sequence[tuple[str, Callable]]
) -> HarnessReport:
    """Zero-mean and bracket checks for the compensated pairing process.

    For every size and test function: |mean M_t| <= 3 SE and the paired
    difference between M_t^2 and the bracket stays within 3 SE, at every
    checkpoint. With two or more sizes the variance must scale like 1/n
    between the extremes within a factor 1.5.
    """
    if not test_functions:
        raise ValueError("martingale_suite needs at least one test function")
    rows: list[dict] = []
    checks: list[dict] = []
    k = len(plan.checkpoints)
    var_extremes: dict[str, dict[int, float]] = {name: {} for name, _ in test_functions}
    for n in plan.n_values:
        params = plan.params_for(n)
        mart = {name: np.empty((plan.ensemble_size, k)) for name, _ in test_functions}
        brackets = {name: np.empty((plan.ensemble_size, k)) for name, _ in test_functions}
        for r in range(plan.ensemble_size):
            state = build_state(params, plan.initial, seed=plan.replica_seed(n, r))
            record = run_trajectory(state, plan.checkpoints, m_bins=1, capture_log=True)
            for name, fn in test_functions:
                series = dynkin_martingale(record, fn)
                mart[name][r] = series.martingale
                brackets[name][r] = series.quadratic_variation
        for name, _ in test_functions:
            m_vals = mart[name]
            q_vals = brackets[name]
            zero_ok = True
            bracket_ok = True
            details = []
            for j, t in enumerate(plan.checkpoints):
                mean_m, se_m = _mean_se(m_vals[:, j])
                gap_mean, gap_se = _mean_se(m_vals[:, j] ** 2 - q_vals[:, j])
                var_m = float(m_vals[:, j].var(ddof=1)) if plan.ensemble_size > 1 else 0.0
                rows.append(
                    {
                        "n": n,
                        "fn": name,
                        "time": t,
                        "mean_martingale": mean_m,
                        "se_martingale": se_m,
                        "moment_gap": gap_mean,
                        "se_moment_gap": gap_se,
                        "variance": var_m,
                        "mean_bracket": float(q_vals[:, j].mean()),
                    }
                )
                zero_ok = zero_ok and abs(mean_m) <= 3.0 * _slack(se_m, 0.0)
                bracket_ok = bracket_ok and abs(gap_mean) <= 3.0 * _slack(gap_se, 0.0)
                details.append(f"t={t:g}: mean {mean_m:.3g} (se {se_m:.3g})")
            checks.append(
                {
                    "name": f"zero mean, n={n}, G={name}",
                    "passed": bool(zero_ok),
                    "detail": "; ".join(details),
                }
            )
            checks.append(
                {
                    "name": f"second moment matches bracket, n={n}, G={name}",
                    "passed": bool(bracket_ok),
                    "detail": f"final gap {rows[-1]['moment_gap']:.3g} "
                    f"(se {rows[-1]['se_moment_gap']:.3g})",
                }
            )
            var_extremes[name][n] = (
                float(m_vals[:, -1].var(ddof=1)) if plan.ensemble_size > 1 else 0.0
            )
    if len(plan.n_values) >= 2:
        n_lo, n_hi = plan.n_values[0], plan.n_values[-1]
        expected = n_hi / n_lo
        for name, _ in test_functions:
            v_lo, v_hi = var_extremes[name][n_lo], var_extremes[name][n_hi]
            ratio = v_lo / v_hi if v_hi > 0.0 else math.inf
            checks.append(
                {
                    "name": f"variance scales like 1/n, G={name}",
                    "passed": bool(expected / 1.5 <= ratio <= expected * 1.5),
                    "detail": f"Var({n_lo})/Var({n_hi}) = {ratio:.3g}, expected ~{expected:g}",
                }
            )
    return HarnessReport("martingale_suite", plan.to_dict(), checks, rows)


def _atomic_write(path: Path, text: str) -> None:
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc}") from exc


def _csv_text(rows: list[dict]) -> str:
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def emit_report(report: HarnessReport, directory: str | Path, stem: str | None = None) -> list[Path]:
    """Write the report JSON plus CSVs for its row tables, atomically.

    Returns the written paths: {stem}.json always, {stem}_rows.csv and
    {stem}_profiles.csv when the report carries those tables.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = report.kind if stem is None else stem
    written: list[Path] = []
    json_path = directory / f"{stem}.json"
    _atomic_write(json_path, json.dumps(report.to_dict(), indent=2) + "\n")
    written.append(json_path)
    if report.rows:
        rows_path = directory / f"{stem}_rows.csv"
        _atomic_write(rows_path, _csv_text(report.rows))
        written.append(rows_path)
    if report.profiles:
        profiles_path = directory / f"{stem}_profiles.csv"
        _atomic_write(profiles_path, _csv_text(report.profiles))
        written.append(profiles_path)
    return written
