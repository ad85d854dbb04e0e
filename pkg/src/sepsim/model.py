"""Lattice model for the boundary-driven generalized exclusion process.

The bulk is the discrete interval {1, ..., n-1}; each site holds between 0
and alpha particles. Two reservoirs act on the first and last site only,
with their rates damped by the factor n**(-theta). Configurations are numpy
integer arrays of length n-1 indexed so that ``occ[x-1]`` is the occupancy
of site x; all public functions take sites in that 1-based convention.

Densities are measured in particles per site, so they live in [0, alpha];
the reservoir densities ``rho_minus``/``rho_plus`` follow the same scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ModelParams",
    "Profile",
    "EventKind",
    "Event",
    "BoundaryRates",
    "all_events",
    "event_count",
    "event_id",
    "event_from_id",
    "bulk_rate",
    "boundary_rates",
    "event_rate",
    "apply_event",
    "binomial_weight",
    "log_binomial_weight",
    "sample_initial",
    "integrate_test_function",
    "discrete_laplacian",
    "discrete_gradient_plus",
    "windowed_average",
]


@dataclass(frozen=True)
class ModelParams:
    """Static parameters of one finite system.

    Parameters
    ----------
    alpha : int
        Maximum occupancy per site (alpha >= 1).
    n : int
        Scaling parameter; the bulk is {1, ..., n-1}, so there are n-1
        sites and n-2 nearest-neighbour bonds.
    theta : float
        Boundary-rate exponent; reservoir rates carry a factor n**(-theta).
    epsilon, gamma : float
        Left reservoir injection / removal intensities (both > 0).
    delta, beta : float
        Right reservoir injection / removal intensities (both > 0).
    """

    alpha: int
    n: int
    theta: float
    epsilon: float
    gamma: float
    delta: float
    beta: float

    def __post_init__(self) -> None:
        if not isinstance(self.alpha, int) or self.alpha < 1:
            raise ValueError(f"alpha must be an integer >= 1, got {self.alpha!r}")
        if not isinstance(self.n, int) or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        for name in ("epsilon", "gamma", "delta", "beta"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if not math.isfinite(self.theta):
            raise ValueError(f"theta must be finite, got {self.theta!r}")

    @property
    def sites(self) -> int:
        return self.n - 1

    @property
    def bonds(self) -> int:
        return self.n - 2

    @property
    def rho_minus(self) -> float:
        """Left reservoir density alpha*epsilon/(epsilon+gamma), in (0, alpha)."""
        return self.alpha * self.epsilon / (self.epsilon + self.gamma)

    @property
    def rho_plus(self) -> float:
        """Right reservoir density alpha*delta/(delta+beta), in (0, alpha)."""
        return self.alpha * self.delta / (self.delta + self.beta)

    @property
    def boundary_scale(self) -> float:
        """The damping factor n**(-theta) applied to all reservoir rates."""
        return float(self.n) ** (-self.theta)


@dataclass(frozen=True)
class Profile:
    """Piecewise description of a density profile on [0, 1].

    ``kind`` selects the closed form; ``values`` packs its parameters:

    - ``constant``: (c,)
    - ``linear``:   (left, right), interpolated across [0, 1]
    - ``step``:     (left, right, at); left for u < at, right for u >= at
    - ``table``:    (u_0, ..., u_k, v_0, ..., v_k), piecewise linear through
      the given knots, clamped outside [u_0, u_k]; the u_i must be strictly
      increasing
    """

    kind: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        expected = {"constant": 1, "linear": 2, "step": 3}
        if self.kind in expected:
            if len(self.values) != expected[self.kind]:
                raise ValueError(
                    f"profile kind {self.kind!r} takes {expected[self.kind]} "
                    f"values, got {len(self.values)}"
                )
        elif self.kind == "table":
            if len(self.values) < 4 or len(self.values) % 2 != 0:
                raise ValueError("table profile needs an even number of values (>= 4)")
            us = self.values[: len(self.values) // 2]
            if any(b <= a for a, b in zip(us, us[1:])):
                raise ValueError("table profile knot positions must be strictly increasing")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    @classmethod
    def constant(cls, c: float) -> "Profile":
        return cls("constant", (float(c),))

    @classmethod
    def linear(cls, left: float, right: float) -> "Profile":
        return cls("linear", (float(left), float(right)))

    @classmethod
    def step(cls, left: float, right: float, at: float = 0.5) -> "Profile":
        return cls("step", (float(left), float(right), float(at)))

    @classmethod
    def table(cls, us: Sequence[float], vs: Sequence[float]) -> "Profile":
        if len(us) != len(vs):
            raise ValueError("table profile needs as many values as positions")
        return cls("table", tuple(float(u) for u in us) + tuple(float(v) for v in vs))

    def __call__(self, u):
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "constant":
            out = np.full_like(u, self.values[0])
        elif self.kind == "linear":
            left, right = self.values
            out = left + (right - left) * u
        elif self.kind == "step":
            left, right, at = self.values
            out = np.where(u < at, left, right)
        else:
            k = len(self.values) // 2
            out = np.interp(u, self.values[:k], self.values[k:])
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> "Profile":
        """The profile pointwise multiplied by ``factor`` (same kind)."""
        if self.kind == "step":
            left, right, at = self.values
            return Profile("step", (left * factor, right * factor, at))
        if self.kind == "table":
            k = len(self.values) // 2
            vs = tuple(v * factor for v in self.values[k:])
            return Profile("table", self.values[:k] + vs)
        return Profile(self.kind, tuple(v * factor for v in self.values))


class EventKind(IntEnum):
    BULK_RIGHT = 0
    BULK_LEFT = 1
    INJECT_LEFT = 2
    REMOVE_LEFT = 3
    INJECT_RIGHT = 4
    REMOVE_RIGHT = 5


@dataclass(frozen=True)
class Event:
    """One elementary transition.

    For the bulk kinds ``site`` is the left end x of the bond (x, x+1):
    BULK_RIGHT moves a particle x -> x+1, BULK_LEFT moves x+1 -> x.
    Reservoir kinds act on site 1 or n-1 and ignore ``site``.
    """

    kind: EventKind
    site: int = 0


@dataclass(frozen=True)
class BoundaryRates:
    inject_left: float
    remove_left: float
    inject_right: float
    remove_right: float


def event_count(n: int) -> int:
    """Number of distinct transitions: 2(n-2) bulk moves plus 4 reservoir ones."""
    return 2 * max(n - 2, 0) + 4


def all_events(n: int) -> list[Event]:
    """Every event in canonical id order (bulk right, bulk left, reservoirs)."""
    return [event_from_id(i, n) for i in range(event_count(n))]


def event_id(event: Event, n: int) -> int:
    """Canonical integer id of ``event`` on the n-lattice."""
    b = max(n - 2, 0)
    if event.kind == EventKind.BULK_RIGHT:
        if not 1 <= event.site <= b:
            raise ValueError(f"bulk bond site out of range: {event.site}")
        return event.site - 1
    if event.kind == EventKind.BULK_LEFT:
        if not 1 <= event.site <= b:
            raise ValueError(f"bulk bond site out of range: {event.site}")
        return b + event.site - 1
    offsets = {
        EventKind.INJECT_LEFT: 0,
        EventKind.REMOVE_LEFT: 1,
        EventKind.INJECT_RIGHT: 2,
        EventKind.REMOVE_RIGHT: 3,
    }
    return 2 * b + offsets[event.kind]


def event_from_id(eid: int, n: int) -> Event:
    b = max(n - 2, 0)
    if not 0 <= eid < 2 * b + 4:
        raise ValueError(f"event id out of range: {eid}")
    if eid < b:
        return Event(EventKind.BULK_RIGHT, eid + 1)
    if eid < 2 * b:
        return Event(EventKind.BULK_LEFT, eid - b + 1)
    kinds = (
        EventKind.INJECT_LEFT,
        EventKind.REMOVE_LEFT,
        EventKind.INJECT_RIGHT,
        EventKind.REMOVE_RIGHT,
    )
    return Event(kinds[eid - 2 * b])


def bulk_rate(occ: np.ndarray, alpha: int, x: int, y: int) -> float:
    """Exchange rate eta(x) * (alpha - eta(y)) for the jump x -> y, |x-y| = 1."""
    if abs(x - y) != 1:
        raise ValueError(f"bulk jumps connect nearest neighbours only, got {x} -> {y}")
    sites = occ.shape[0]
    if not (1 <= x <= sites and 1 <= y <= sites):
        raise ValueError(f"sites out of range for {sites}-site bulk: {x} -> {y}")
    return float(occ[x - 1] * (alpha - occ[y - 1]))


def boundary_rates(occ: np.ndarray, params: ModelParams) -> BoundaryRates:
    """All four reservoir rates, already damped by n**(-theta).

    Injection is proportional to the room left at the boundary site and
    removal to its occupancy, so rates vanish exactly when the
    corresponding move is impossible.
    """
    scale = params.boundary_scale
    a = params.alpha
    return BoundaryRates(
        inject_left=scale * params.epsilon * (a - occ[0]),
        remove_left=scale * params.gamma * occ[0],
        inject_right=scale * params.delta * (a - occ[-1]),
        remove_right=scale * params.beta * occ[-1],
    )


def event_rate(occ: np.ndarray, params: ModelParams, event: Event) -> float:
    """Jump rate of ``event`` in configuration ``occ``."""
    if event.kind == EventKind.BULK_RIGHT:
        return bulk_rate(occ, params.alpha, event.site, event.site + 1)
    if event.kind == EventKind.BULK_LEFT:
        return bulk_rate(occ, params.alpha, event.site + 1, event.site)
    rates = boundary_rates(occ, params)
    return {
        EventKind.INJECT_LEFT: rates.inject_left,
        EventKind.REMOVE_LEFT: rates.remove_left,
        EventKind.INJECT_RIGHT: rates.inject_right,
        EventKind.REMOVE_RIGHT: rates.remove_right,
    }[event.kind]


def apply_event(occ: np.ndarray, event: Event, alpha: int) -> np.ndarray:
    """The configuration after ``event``, as a new array.

    Moves that are blocked (full target, empty source) return an unchanged
    copy; those events carry zero rate, so the clamp only matters when a
    caller applies an event unconditionally.
    """
    out = occ.copy()
    k = event.kind
    if k == EventKind.BULK_RIGHT or k == EventKind.BULK_LEFT:
        src = event.site if k == EventKind.BULK_RIGHT else event.site + 1
        dst = event.site + 1 if k == EventKind.BULK_RIGHT else event.site
        if out[src - 1] >= 1 and out[dst - 1] <= alpha - 1:
            out[src - 1] -= 1
            out[dst - 1] += 1
        return out
    edge = 0 if k in (EventKind.INJECT_LEFT, EventKind.REMOVE_LEFT) else -1
    if k in (EventKind.INJECT_LEFT, EventKind.INJECT_RIGHT):
        if out[edge] <= alpha - 1:
            out[edge] += 1
    else:
        if out[edge] >= 1:
            out[edge] -= 1
    return out


def binomial_weight(occ: np.ndarray, varrho: Profile, params: ModelParams) -> float:
    """Product-binomial reference weight of one configuration.

    ``varrho`` is the site-density profile scaled to [0, 1] (density per
    particle slot, i.e. the physical profile divided by alpha); the weight
    is the product over sites x of Binomial(alpha, varrho(x/n)) at occ[x-1].
    """
    return float(math.exp(log_binomial_weight(occ, varrho, params)))


def log_binomial_weight(occ: np.ndarray, varrho: Profile, params: ModelParams) -> float:
    """Logarithm of :func:`binomial_weight`; -inf when some factor is zero."""
    alpha, n = params.alpha, params.n
    x = np.arange(1, n, dtype=np.float64)
    p = np.asarray(varrho(x / n), dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("varrho must take values in [0, 1]")
    k = np.asarray(occ, dtype=np.int64)
    log_comb = np.array([math.lgamma(alpha + 1) - math.lgamma(v + 1) - math.lgamma(alpha - v + 1) for v in k])
    with np.errstate(divide="ignore", invalid="ignore"):
        term_p = np.where(k > 0, k * np.log(p, where=p > 0, out=np.full_like(p, -np.inf)), 0.0)
        term_q = np.where(
            alpha - k > 0,
            (alpha - k) * np.log(1.0 - p, where=p < 1, out=np.full_like(p, -np.inf)),
            0.0,
        )
    return float(np.sum(log_comb + term_p + term_q))


def sample_initial(
    params: ModelParams, g: Profile, rng: np.random.Generator
) -> np.ndarray:
    """Sample each site independently from Binomial(alpha, g(x/n)/alpha).

    ``g`` is the initial density profile in particles per site, so it must
    take values in [0, alpha].
    """
    x = np.arange(1, params.n, dtype=np.float64)
    p = np.asarray(g(x / params.n), dtype=np.float64) / params.alpha
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("initial profile must take values in [0, alpha]")
    return rng.binomial(params.alpha, p).astype(np.int64)


def _evaluate_on_sites(fn: Callable, n: int) -> np.ndarray:
    u = np.arange(1, n, dtype=np.float64) / n
    try:
        vals = np.asarray(fn(u), dtype=np.float64)
        if vals.shape != u.shape:
            raise ValueError
    except Exception:
        vals = np.array([float(fn(v)) for v in u])
    return vals


def integrate_test_function(occ: np.ndarray, fn: Callable, n: int) -> float:
    """Empirical pairing (1/(n-1)) * sum_x eta(x) fn(x/n).

    The normalisation is by the number of sites n-1, while fn is sampled on
    the n-grid; the two conventions are kept exactly as stated.
    """
    vals = _evaluate_on_sites(fn, n)
    return float(np.dot(np.asarray(occ, dtype=np.float64), vals) / (n - 1))


def discrete_laplacian(fn: Callable, x: int, n: int) -> float:
    """n^2-scaled second difference of ``fn`` at x/n, for 1 <= x <= n-1."""
    if not 1 <= x <= n - 1:
        raise ValueError(f"laplacian needs 1 <= x <= n-1, got x={x}")
    return float(n * n * (fn((x - 1) / n) - 2.0 * fn(x / n) + fn((x + 1) / n)))


def discrete_gradient_plus(fn: Callable, x: int, n: int) -> float:
    """n-scaled forward difference of ``fn`` at x/n, for 0 <= x <= n-1."""
    if not 0 <= x <= n - 1:
        raise ValueError(f"forward gradient needs 0 <= x <= n-1, got x={x}")
    return float(n * (fn((x + 1) / n) - fn(x / n)))


def windowed_average(occ: np.ndarray, z: int, length: int, side: str = "right") -> float:
    """Block average of ``length`` sites strictly to one side of site z.

    ``side="right"`` averages sites z+1, ..., z+length; ``side="left"``
    averages z-length, ..., z-1. The window must stay inside {1, ..., n-1}.
    """
    sites = occ.shape[0]
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    if side == "right":
        lo, hi = z + 1, z + length
    elif side == "left":
        lo, hi = z - length, z - 1
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if lo < 1 or hi > sites:
        raise ValueError(
            f"window {lo}..{hi} leaves the bulk 1..{sites} (z={z}, length={length})"
        )
    return float(np.mean(occ[lo - 1 : hi]))
