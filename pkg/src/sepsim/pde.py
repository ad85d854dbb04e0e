"""Macroscopic heat equation with the boundary conditions of the scaling limit.

Solves d_t rho = alpha * d_uu rho on [0, 1] under the condition selected by
the boundary exponent theta: Dirichlet values rho_minus/rho_plus for
theta < 1, Robin fluxes for theta = 1, zero Neumann flux for theta > 1.
The Robin condition reads

    d_u rho(0) = kappa * a0 * (rho(0) - rho_minus),   a0 = (epsilon+gamma)/alpha,
    d_u rho(1) = kappa * b0 * (rho_plus - rho(1)),    b0 = (delta+beta)/alpha,

note the reversed difference at u = 1. It interpolates the other two
families: kappa -> infinity pins the boundary values, kappa -> 0 seals the
endpoints.

The scheme is Crank-Nicolson on the vertex grid of M+1 points with ghost
points eliminated to second order, unconditionally stable; checkpoint
values are interpolated linearly between consecutive steps. The Neumann
stencil conserves the trapezoid mass to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .model import ModelParams, Profile

__all__ = [
    "BoundaryConditionSpec",
    "PdeSolution",
    "bc_from_theta",
    "solve_heat_equation",
    "steady_state",
    "trapezoid_mass",
    "evaluate_solution",
    "weak_form_residual",
    "write_solution_csv",
]

_KINDS = ("dirichlet", "robin", "neumann")


@dataclass(frozen=True)
class BoundaryConditionSpec:
    """Boundary family with the data it needs.

    Dirichlet carries the pinned values rho_minus/rho_plus; Robin
    additionally carries the strength kappa and the coefficients
    coeff_left = (epsilon+gamma)/alpha, coeff_right = (delta+beta)/alpha;
    Neumann carries nothing.
    """

    kind: str
    rho_minus: float = 0.0
    rho_plus: float = 0.0
    kappa: float = 0.0
    coeff_left: float = 0.0
    coeff_right: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"boundary kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind != "neumann":
            for name in ("rho_minus", "rho_plus"):
                value = getattr(self, name)
                if not (np.isfinite(value) and value >= 0.0):
                    raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if self.kind == "robin":
            if not (np.isfinite(self.kappa) and self.kappa >= 0.0):
                raise ValueError(f"kappa must be finite and >= 0, got {self.kappa!r}")
            for name in ("coeff_left", "coeff_right"):
                value = getattr(self, name)
                if not value > 0.0:
                    raise ValueError(f"{name} must be > 0, got {value!r}")

    @classmethod
    def dirichlet(cls, rho_minus: float, rho_plus: float) -> "BoundaryConditionSpec":
        return cls("dirichlet", float(rho_minus), float(rho_plus))

    @classmethod
    def robin(
        cls,
        rho_minus: float,
        rho_plus: float,
        coeff_left: float,
        coeff_right: float,
        kappa: float = 1.0,
    ) -> "BoundaryConditionSpec":
        return cls(
            "robin", float(rho_minus), float(rho_plus), float(kappa), float(coeff_left), float(coeff_right)
        )

    @classmethod
    def neumann(cls) -> "BoundaryConditionSpec":
        return cls("neumann")

    @property
    def flux_left(self) -> float:
        """A = kappa * (epsilon+gamma)/alpha in the left flux condition."""
        return self.kappa * self.coeff_left

    @property
    def flux_right(self) -> float:
        """B = kappa * (delta+beta)/alpha in the right flux condition."""
        return self.kappa * self.coeff_right


def bc_from_theta(params: ModelParams) -> BoundaryConditionSpec:
    """The limiting boundary condition of the particle system.

    theta < 1 pins the reservoir densities, theta = 1 gives the Robin
    fluxes with kappa = 1, theta > 1 seals the boundary (kappa = 0);
    theta is compared exactly.
    """
    if params.theta < 1.0:
        return BoundaryConditionSpec.dirichlet(params.rho_minus, params.rho_plus)
    if params.theta == 1.0:
        return BoundaryConditionSpec.robin(
            params.rho_minus,
            params.rho_plus,
            (params.epsilon + params.gamma) / params.alpha,
            (params.delta + params.beta) / params.alpha,
            kappa=1.0,
        )
    return BoundaryConditionSpec.neumann()


@dataclass(frozen=True)
class PdeSolution:
    """Solution rows on the vertex grid of M+1 points.

    times[0] = 0 holds the initial data; later rows are the requested
    checkpoints. Values stay in [0, alpha] by the maximum principle, which
    the tests verify and the solver never enforces by clamping.
    """

    times: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    bc: BoundaryConditionSpec
    alpha: int
    dt: float

    @property
    def spacing(self) -> float:
        return 1.0 / (self.grid.size - 1)


def _initial_values(initial, grid: np.ndarray, alpha: int) -> np.ndarray:
    if callable(initial):
        vals = np.asarray(initial(grid), dtype=np.float64)
        if vals.shape != grid.shape:
            vals = np.array([float(initial(u)) for u in grid])
    else:
        vals = np.asarray(initial, dtype=np.float64).copy()
        if vals.shape != grid.shape:
            raise ValueError(f"initial data must have shape {grid.shape}, got {vals.shape}")
    if np.any(vals < 0) or np.any(vals > alpha):
        raise ValueError("initial data must take values in [0, alpha]")
    return vals


def _validate_bc_range(bc: BoundaryConditionSpec, alpha: int) -> None:
    if bc.kind != "neumann" and (max(bc.rho_minus, bc.rho_plus) > alpha):
        raise ValueError("reservoir densities must not exceed alpha")


def solve_heat_equation(
    bc: BoundaryConditionSpec,
    initial: Profile | Callable | np.ndarray,
    alpha: int,
    checkpoints: Sequence[float] | np.ndarray,
    m: int = 512,
    dt: float | None = None,
) -> PdeSolution:
    """March d_t rho = alpha d_uu rho through the checkpoint times.

    ``initial`` is a profile on the particles-per-site scale [0, alpha];
    ``m`` counts grid intervals (m+1 points). The time step defaults to
    the spacing h, matching the second-order space error; checkpoint rows
    are linear interpolations of the two bracketing steps.
    """
    if m < 2:
        raise ValueError(f"need at least 2 grid intervals, got {m}")
    if not (isinstance(alpha, (int, np.integer)) and alpha >= 1):
        raise ValueError(f"alpha must be an integer >= 1, got {alpha!r}")
    _validate_bc_range(bc, alpha)
    cps = np.asarray(checkpoints, dtype=np.float64)
    if cps.ndim != 1 or cps.size == 0:
        raise ValueError("checkpoints must form a non-empty 1-d sequence")
    if not np.all(np.isfinite(cps)) or cps[0] <= 0.0 or np.any(np.diff(cps) <= 0.0):
        raise ValueError("checkpoints must be finite, positive, strictly increasing")
    h = 1.0 / m
    step = h if dt is None else float(dt)
    if not 0.0 < step < np.inf:
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    grid = np.arange(m + 1, dtype=np.float64) * h
    rho0 = _initial_values(initial, grid, alpha)

    if bc.kind == "dirichlet":
        # evolve the m-1 interior points; the pinned endpoints act as sources
        size = m - 1
        diag = np.full(size, -2.0)
        upper = np.ones(size)
        lower = np.ones(size)
        source = np.zeros(size)
        source[0] = bc.rho_minus
        source[-1] = bc.rho_plus
        work = rho0[1:-1].copy()
    else:
        size = m + 1
        diag = np.full(size, -2.0)
        upper = np.ones(size)
        lower = np.ones(size)
        upper[1] = 2.0  # row 0 couples twice to point 1 (mirrored ghost)
        lower[-2] = 2.0
        source = np.zeros(size)
        if bc.kind == "robin":
            a, b = bc.flux_left, bc.flux_right
            diag[0] -= 2.0 * h * a
            diag[-1] -= 2.0 * h * b
            source[0] = 2.0 * h * a * bc.rho_minus
            source[-1] = 2.0 * h * b * bc.rho_plus
        work = rho0.copy()

    c = alpha * step / (2.0 * h * h)
    banded = np.zeros((3, size))
    banded[0, 1:] = -c * upper[1:]
    banded[1, :] = 1.0 - c * diag
    banded[2, :-1] = -c * lower[:-1]

    def cn_step(v: np.ndarray) -> np.ndarray:
        rhs = v + c * (diag * v) + 2.0 * c * source
        rhs[:-1] += c * upper[1:] * v[1:]
        rhs[1:] += c * lower[:-1] * v[:-1]
        return solve_banded((1, 1), banded, rhs)

    def full_row(v: np.ndarray) -> np.ndarray:
        if bc.kind == "dirichlet":
            return np.concatenate(([bc.rho_minus], v, [bc.rho_plus]))
        return v.copy()

    times = np.concatenate(([0.0], cps))
    values = np.empty((times.size, m + 1))
    values[0] = rho0

    t_old = t_cur = 0.0
    row_old = row_cur = full_row(work)
    for i, target in enumerate(cps, start=1):
        while t_cur < target - 1e-12:
            row_old, t_old = row_cur, t_cur
            work = cn_step(work)
            t_cur += step
            row_cur = full_row(work)
        if t_cur == t_old:
            values[i] = row_cur
        else:
            w = (target - t_old) / (t_cur - t_old)
            values[i] = (1.0 - w) * row_old + w * row_cur
    return PdeSolution(times=times, grid=grid, values=values, bc=bc, alpha=int(alpha), dt=step)


def steady_state(
    bc: BoundaryConditionSpec, alpha: int, mass: float | None = None
) -> Profile:
    """Closed-form stationary solution of the macroscopic equation.

    Dirichlet interpolates the reservoir densities linearly. Robin gives
    the affine profile rho(u) = c + m u solving the two flux equations.
    Sealed boundaries (Neumann, or Robin with kappa = 0) keep any
    constant, so the conserved ``mass`` must be supplied.
    """
    _validate_bc_range(bc, alpha)
    if bc.kind == "dirichlet":
        return Profile.linear(bc.rho_minus, bc.rho_plus)
    if bc.kind == "neumann" or bc.kappa == 0.0:
        if mass is None:
            raise ValueError("sealed boundaries conserve mass; pass the initial mass")
        if not 0.0 <= mass <= alpha:
            raise ValueError(f"mass must lie in [0, alpha], got {mass!r}")
        return Profile.constant(mass)
    a, b = bc.flux_left, bc.flux_right
    slope = (bc.rho_plus - bc.rho_minus) / (1.0 + 1.0 / a + 1.0 / b)
    left = bc.rho_minus + slope / a
    return Profile.linear(left, left + slope)


def trapezoid_mass(sol: PdeSolution, row: int) -> float:
    """Trapezoid-rule mass of one solution row."""
    return float(np.trapezoid(sol.values[row], sol.grid))


def evaluate_solution(sol: PdeSolution, row: int, points) -> np.ndarray:
    """Linear interpolation of solution row ``row`` at positions in [0, 1]."""
    points = np.asarray(points, dtype=np.float64)
    if np.any(points < 0.0) or np.any(points > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    return np.interp(points, sol.grid, sol.values[row])


def _eval_st(fn: Callable, t: float, grid: np.ndarray) -> np.ndarray:
    vals = np.asarray(fn(t, grid), dtype=np.float64)
    if vals.shape != grid.shape:
        vals = np.array([float(fn(t, u)) for u in grid])
    return vals


def weak_form_residual(
    sol: PdeSolution,
    test_fn: Callable,
    dt_fn: Callable,
    du_fn: Callable,
    d2u_fn: Callable,
) -> float:
    """Defect of the weak formulation over the solution's time range.

    The test function G(t, u) and its derivatives d_t G, d_u G, d_uu G are
    callables of (t, u). The identity evaluated is

        <rho_T, G_T> - <rho_0, G_0>
            - int_0^T [ <rho_s, d_s G + alpha d_uu G> + alpha * bdry(s) ] ds

    with the boundary terms of the solution's condition; Dirichlet test
    functions must vanish at both endpoints for all stored times. Space
    integrals use the trapezoid rule on the grid, the time integral the
    trapezoid rule over the stored rows, so the residual of a solver
    output vanishes at the quadrature order.
    """
    grid = sol.grid
    bc = sol.bc
    if bc.kind == "dirichlet":
        ends = [abs(float(test_fn(t, e))) for t in sol.times for e in (0.0, 1.0)]
        if max(ends) > 1e-12:
            raise ValueError("Dirichlet weak form needs G(t, 0) = G(t, 1) = 0")

    pair_first = float(np.trapezoid(sol.values[0] * _eval_st(test_fn, sol.times[0], grid), grid))
    pair_last = float(
        np.trapezoid(sol.values[-1] * _eval_st(test_fn, sol.times[-1], grid), grid)
    )

    integrand = np.empty(sol.times.size)
    for i, t in enumerate(sol.times):
        row = sol.values[i]
        inner = _eval_st(dt_fn, t, grid) + sol.alpha * _eval_st(d2u_fn, t, grid)
        bulk = float(np.trapezoid(row * inner, grid))
        g0, g1 = float(test_fn(t, 0.0)), float(test_fn(t, 1.0))
        dg0, dg1 = float(du_fn(t, 0.0)), float(du_fn(t, 1.0))
        left, right = row[0], row[-1]
        if bc.kind == "dirichlet":
            flux = bc.rho_minus * dg0 - bc.rho_plus * dg1
        elif bc.kind == "robin":
            flux = (
                bc.flux_right * (bc.rho_plus - right) * g1
                - bc.flux_left * (left - bc.rho_minus) * g0
                + left * dg0
                - right * dg1
            )
        else:
            flux = left * dg0 - right * dg1
        integrand[i] = bulk + sol.alpha * flux
    return float(pair_last - pair_first - np.trapezoid(integrand, sol.times))


def write_solution_csv(sol: PdeSolution, path: str) -> None:
    """Delimited solution rows: macro_time,u,rho."""
    lines = ["macro_time,u,rho"]
    for i in range(sol.times.size):
        t = repr(float(sol.times[i]))
        for u, v in zip(sol.grid, sol.values[i]):
            lines.append(f"{t},{float(u)!r},{float(v)!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
