"""Exact finite-system analysis on the full configuration space.

Everything here enumerates all (alpha+1)**(n-1) configurations, so it is
meant for small systems: generator matrices, stationary distributions,
Dirichlet forms and the boundary/bulk quadratic-form identities, and
relative entropy against product-binomial reference measures.

States are indexed in base alpha+1 with site 1 as the least significant
digit; probability vectors and density vectors (f = dmu/dnu) are plain
numpy arrays over that indexing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .model import (
    ModelParams,
    Profile,
    all_events,
    apply_event,
    event_rate,
    log_binomial_weight,
)

__all__ = [
    "num_states",
    "state_index",
    "index_state",
    "occupancy_table",
    "generator_matrix",
    "stationary_distribution",
    "stationary_mean_profile",
    "evolve_distribution",
    "reference_weights",
    "detailed_balance_violation",
    "DirichletForms",
    "dirichlet_forms",
    "BoundaryIdentity",
    "boundary_carre_du_champ_identity",
    "BulkBound",
    "bulk_generator_bound_check",
    "relative_entropy",
    "entropy_bound",
    "DENSE_STATE_LIMIT",
]

# below this many states the generator is returned dense
DENSE_STATE_LIMIT = 1000


def num_states(params: ModelParams) -> int:
    return (params.alpha + 1) ** params.sites


def state_index(occ: np.ndarray, alpha: int) -> int:
    """Base-(alpha+1) index of a configuration, site 1 least significant."""
    base = alpha + 1
    idx = 0
    for v in reversed(np.asarray(occ, dtype=np.int64)):
        if not 0 <= v <= alpha:
            raise ValueError(f"occupancy {v} outside 0..{alpha}")
        idx = idx * base + int(v)
    return idx


def index_state(idx: int, alpha: int, sites: int) -> np.ndarray:
    base = alpha + 1
    if not 0 <= idx < base**sites:
        raise ValueError(f"state index {idx} out of range")
    out = np.empty(sites, dtype=np.int64)
    for x in range(sites):
        idx, out[x] = divmod(idx, base)
    return out


def occupancy_table(params: ModelParams) -> np.ndarray:
    """Array of shape (num_states, sites) listing every configuration."""
    base = params.alpha + 1
    states = num_states(params)
    idx = np.arange(states, dtype=np.int64)
    table = np.empty((states, params.sites), dtype=np.int64)
    for x in range(params.sites):
        table[:, x] = idx % base
        idx = idx // base
    return table


def _event_tables(params: ModelParams):
    """Per event: rate over all states and target state index.

    Clamped (zero-rate) transitions keep the source as target so they never
    contribute off-diagonal weight.
    """
    states = num_states(params)
    events = all_events(params.n)
    rates = np.zeros((len(events), states))
    targets = np.tile(np.arange(states, dtype=np.int64), (len(events), 1))
    for i in range(states):
        occ = index_state(i, params.alpha, params.sites)
        for k, ev in enumerate(events):
            r = event_rate(occ, params, ev)
            if r > 0.0:
                rates[k, i] = r
                targets[k, i] = state_index(apply_event(occ, ev, params.alpha), params.alpha)
    return rates, targets


def generator_matrix(params: ModelParams, dense: bool | None = None):
    """Full generator L with L[i, j] the rate i -> j and zero row sums.

    Returns a dense array below ``DENSE_STATE_LIMIT`` states and a CSR
    matrix otherwise; pass ``dense`` to force either representation.
    """
    states = num_states(params)
    if dense is None:
        dense = states < DENSE_STATE_LIMIT
    rates, targets = _event_tables(params)
    rows = np.tile(np.arange(states, dtype=np.int64), rates.shape[0])
    cols = targets.reshape(-1)
    vals = rates.reshape(-1)
    keep = vals > 0.0
    diag = -rates.sum(axis=0)
    mat = scipy.sparse.coo_matrix(
        (np.concatenate([vals[keep], diag]), (np.concatenate([rows[keep], np.arange(states)]), np.concatenate([cols[keep], np.arange(states)]))),
        shape=(states, states),
    ).tocsr()
    return mat.toarray() if dense else mat


def stationary_distribution(gen, rtol: float = 1e-10) -> np.ndarray:
    """Stationary law pi with pi @ L = 0, found in the null space of L^T.

    Uses a rank-revealing QR of L (the orthogonal complement of range(L) is
    exactly null(L^T)); raises if the null space is not one-dimensional or
    the residual exceeds ``rtol``.
    """
    dense = gen.toarray() if scipy.sparse.issparse(gen) else np.asarray(gen, dtype=np.float64)
    n = dense.shape[0]
    q, r, _ = scipy.linalg.qr(dense, pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(diag[0], 1.0) * n * np.finfo(np.float64).eps
    rank = int(np.sum(diag > tol))
    if rank != n - 1:
        raise np.linalg.LinAlgError(
            f"generator null space has dimension {n - rank}, expected 1 "
            "(is the chain irreducible?)"
        )
    pi = q[:, -1]
    pi = pi / pi.sum()
    if pi.min() <= 0.0:
        raise np.linalg.LinAlgError("stationary vector is not strictly positive")
    residual = np.abs(pi @ dense).max()
    scale = np.abs(dense).max()
    if residual > rtol * max(scale, 1.0):
        raise np.linalg.LinAlgError(f"stationary residual {residual:.3e} exceeds tolerance")
    return pi


def stationary_mean_profile(pi: np.ndarray, params: ModelParams) -> np.ndarray:
    """Expected occupancy per site under a distribution over states."""
    return pi @ occupancy_table(params)


def evolve_distribution(params: ModelParams, p0: np.ndarray, t_macro: float):
    """Distribution at macroscopic time t, i.e. after t * n**2 microscopic time.

    Dense matrix exponential of the generator; small systems only.
    """
    gen = generator_matrix(params, dense=True)
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (gen.shape[0],):
        raise ValueError(f"p0 must have {gen.shape[0]} entries")
    if abs(p0.sum() - 1.0) > 1e-10 or p0.min() < 0:
        raise ValueError("p0 must be a probability vector")
    t_micro = t_macro * params.n**2
    return p0 @ scipy.linalg.expm(t_micro * gen)


def reference_weights(params: ModelParams, varrho: Profile) -> np.ndarray:
    """Product-binomial weights nu(eta) over all states for profile varrho."""
    states = num_states(params)
    out = np.empty(states)
    for i in range(states):
        occ = index_state(i, params.alpha, params.sites)
        out[i] = math.exp(log_binomial_weight(occ, varrho, params))
    return out


def detailed_balance_violation(params: ModelParams, varrho: Profile) -> float:
    """max |nu(i) L[i,j] - nu(j) L[j,i]| over all state pairs.

    Zero exactly when nu_varrho is reversible; the equilibrium criterion is
    epsilon/(epsilon+gamma) = delta/(delta+beta) = varrho constant.
    """
    gen = generator_matrix(params, dense=None)
    nu = reference_weights(params, varrho)
    if scipy.sparse.issparse(gen):
        flux = scipy.sparse.diags(nu) @ gen
        diff = (flux - flux.T).tocoo()
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0
    flux = nu[:, None] * gen
    return float(np.abs(flux - flux.T).max())


def _check_density(f: np.ndarray, nu: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != nu.shape:
        raise ValueError("density vector has wrong length")
    if f.min() < 0:
        raise ValueError("density must be nonnegative")
    mass = float(f @ nu)
    if abs(mass - 1.0) > 1e-8:
        raise ValueError(f"f must integrate to 1 against nu, got {mass}")
    return f


@dataclass(frozen=True)
class DirichletForms:
    """Boundary and bulk Dirichlet forms of sqrt(f) under nu_varrho.

    ``left``/``right`` carry the n**(-theta) damping through the rates;
    ``per_bond`` lists D(x, x+1) + D(x+1, x) for each bulk bond.
    """

    left: float
    bulk: float
    right: float
    per_bond: tuple[float, ...]


def dirichlet_forms(params: ModelParams, f: np.ndarray, varrho: Profile) -> DirichletForms:
    nu = reference_weights(params, varrho)
    f = _check_density(f, nu)
    sq = np.sqrt(f)
    rates, targets = _event_tables(params)
    events = all_events(params.n)
    b = params.bonds

    def form(event_idx: int) -> float:
        r, t = rates[event_idx], targets[event_idx]
        return float(np.sum(nu * r * (sq[t] - sq) ** 2))

    per_bond = tuple(form(i) + form(b + i) for i in range(b))
    # last four events are inject/remove left then inject/remove right
    left = form(2 * b) + form(2 * b + 1)
    right = form(2 * b + 2) + form(2 * b + 3)
    assert events[2 * b].kind.name == "INJECT_LEFT"
    return DirichletForms(left=left, bulk=float(sum(per_bond)), right=right, per_bond=per_bond)


def _quadratic_form(params: ModelParams, f: np.ndarray, nu: np.ndarray, event_ids: list[int]) -> float:
    """<L_part sqrt(f), sqrt(f)>_nu restricted to the listed events."""
    sq = np.sqrt(f)
    rates, targets = _event_tables(params)
    total = 0.0
    for k in event_ids:
        r, t = rates[k], targets[k]
        total += float(np.sum(nu * sq * r * (sq[t] - sq)))
    return total


@dataclass(frozen=True)
class BoundaryIdentity:
    lhs: float
    rhs: float
    residual: float
    matched: bool


def boundary_carre_du_champ_identity(
    params: ModelParams, f: np.ndarray, varrho: Profile, side: str
) -> BoundaryIdentity:
    """Check <L_side sqrt(f), sqrt(f)>_nu = -(1/2) D_side.

    The identity is exact when varrho hits the reservoir density at the
    boundary site itself: varrho(1/n) = epsilon/(epsilon+gamma) on the left,
    varrho((n-1)/n) = delta/(delta+beta) on the right. ``matched`` records
    whether that held; a mismatched profile reports its nonzero residual
    rather than raising.
    """
    nu = reference_weights(params, varrho)
    f = _check_density(f, nu)
    forms = dirichlet_forms(params, f, varrho)
    b = params.bonds
    if side == "left":
        lhs = _quadratic_form(params, f, nu, [2 * b, 2 * b + 1])
        rhs = -0.5 * forms.left
        target = params.epsilon / (params.epsilon + params.gamma)
        matched = math.isclose(float(varrho(1 / params.n)), target, rel_tol=0, abs_tol=1e-15)
    elif side == "right":
        lhs = _quadratic_form(params, f, nu, [2 * b + 2, 2 * b + 3])
        rhs = -0.5 * forms.right
        target = params.delta / (params.delta + params.beta)
        matched = math.isclose(float(varrho((params.n - 1) / params.n)), target, rel_tol=0, abs_tol=1e-15)
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return BoundaryIdentity(lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), matched=matched)


@dataclass(frozen=True)
class BulkBound:
    """Both sides of <L_bulk sqrt(f), sqrt(f)> <= -K D_bulk + C/n^2."""

    lhs: float
    dirichlet_term: float  # K * D_bulk with K = 1/8
    error_term: float  # C / n^2
    constant: float
    holds: bool


BULK_BOUND_K = 0.125


def bulk_generator_bound_check(
    params: ModelParams, f: np.ndarray, varrho: Profile, lipschitz: float
) -> BulkBound:
    """Evaluate the bulk quadratic-form bound with K = 1/8 and constructive C.

    C comes from the Young-inequality remainder: with u = lipschitz /
    (n a (1-b)) dominating every |1 - a_x| and |1 - 1/a_x|, and r = b(1-a) /
    (a(1-b)) dominating a_x and 1/a_x, each bond contributes at most
    alpha^2 u^2 (1+r) / 2, so C = (n-2) alpha^2 lipschitz^2 (1+r) /
    (2 a^2 (1-b)^2). ``varrho`` must stay inside (0, 1) on the site grid.
    """
    nu = reference_weights(params, varrho)
    f = _check_density(f, nu)
    x = np.arange(1, params.n) / params.n
    rho = np.asarray(varrho(x), dtype=np.float64)
    if rho.min() <= 0.0 or rho.max() >= 1.0:
        raise ValueError("bulk bound needs varrho bounded away from 0 and 1")
    a, b_hi = float(rho.min()), float(rho.max())
    ratio = b_hi * (1 - a) / (a * (1 - b_hi))
    c_const = (
        params.bonds * params.alpha**2 * lipschitz**2 * (1 + ratio) / (2 * a**2 * (1 - b_hi) ** 2)
    )
    bulk_ids = list(range(2 * params.bonds))
    lhs = _quadratic_form(params, f, nu, bulk_ids)
    forms = dirichlet_forms(params, f, varrho)
    dirichlet_term = BULK_BOUND_K * forms.bulk
    error_term = c_const / params.n**2
    slack = 1e-12 * max(1.0, abs(lhs), dirichlet_term, error_term)
    return BulkBound(
        lhs=lhs,
        dirichlet_term=dirichlet_term,
        error_term=error_term,
        constant=c_const,
        holds=lhs <= -dirichlet_term + error_term + slack,
    )


def relative_entropy(mu: np.ndarray, nu: np.ndarray) -> float:
    """H(mu | nu) = sum mu log(mu/nu), with 0 log 0 = 0.

    Returns inf when mu charges a nu-null state.
    """
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if mu.shape != nu.shape:
        raise ValueError("distributions must have the same length")
    for name, p in (("mu", mu), ("nu", nu)):
        if p.min() < 0 or abs(p.sum() - 1.0) > 1e-10:
            raise ValueError(f"{name} must be a probability vector")
    support = mu > 0.0
    if np.any(nu[support] == 0.0):
        return math.inf
    return float(np.sum(mu[support] * np.log(mu[support] / nu[support])))


def entropy_bound(params: ModelParams, a: float, b: float) -> float:
    """Uniform entropy bound (n-1)(log alpha! + alpha log(1/a) + alpha log(1/(1-b))).

    Valid for any initial law against nu_varrho with a <= varrho <= b on the
    site grid, 0 < a <= b < 1.
    """
    if not 0 < a <= b < 1:
        raise ValueError(f"need 0 < a <= b < 1, got a={a}, b={b}")
    alpha = params.alpha
    return params.sites * (
        math.lgamma(alpha + 1) + alpha * math.log(1 / a) + alpha * math.log(1 / (1 - b))
    )
