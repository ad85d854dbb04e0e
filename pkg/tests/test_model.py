"""Unit and property tests for the lattice model layer."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sepsim.model import (
    BoundaryRates,
    Event,
    EventKind,
    ModelParams,
    Profile,
    all_events,
    apply_event,
    binomial_weight,
    boundary_rates,
    bulk_rate,
    discrete_gradient_plus,
    discrete_laplacian,
    event_count,
    event_from_id,
    event_id,
    event_rate,
    integrate_test_function,
    log_binomial_weight,
    sample_initial,
    windowed_average,
)


def make_params(**overrides):
    base = dict(alpha=1, n=10, theta=0.0, epsilon=0.8, gamma=0.2, delta=0.2, beta=0.8)
    base.update(overrides)
    return ModelParams(**base)


def enumerate_configs(alpha, sites):
    for tup in itertools.product(range(alpha + 1), repeat=sites):
        yield np.array(tup, dtype=np.int64)


class TestModelParams:
    def test_reservoir_densities(self):
        p = make_params(alpha=3, epsilon=0.8, gamma=0.2, delta=0.2, beta=0.8)
        assert_allclose(p.rho_minus, 3 * 0.8)
        assert_allclose(p.rho_plus, 3 * 0.2)
        assert 0 < p.rho_minus < p.alpha
        assert 0 < p.rho_plus < p.alpha

    def test_boundary_scale(self):
        assert make_params(theta=0.0).boundary_scale == 1.0
        assert_allclose(make_params(n=10, theta=1.0).boundary_scale, 0.1)
        assert_allclose(make_params(n=10, theta=-1.0).boundary_scale, 10.0)
        assert_allclose(make_params(n=10, theta=2.5).boundary_scale, 10.0**-2.5)

    @pytest.mark.parametrize(
        "bad",
        [
            dict(alpha=0),
            dict(alpha=1.5),
            dict(n=1),
            dict(epsilon=0.0),
            dict(gamma=-1.0),
            dict(delta=0.0),
            dict(beta=0.0),
            dict(theta=float("nan")),
        ],
    )
    def test_rejects_bad_values(self, bad):
        with pytest.raises((ValueError, TypeError)):
            make_params(**bad)


class TestRates:
    def test_bulk_rate_worked_value(self):
        # eta(x)=2 against an empty neighbour at alpha=2: rate 2*(2-0)=4
        occ = np.array([2, 0, 1], dtype=np.int64)
        assert bulk_rate(occ, 2, 1, 2) == 4.0
        assert bulk_rate(occ, 2, 2, 1) == 0.0

    def test_bulk_rate_rejects_non_neighbours(self):
        occ = np.array([1, 1, 1], dtype=np.int64)
        with pytest.raises(ValueError):
            bulk_rate(occ, 1, 1, 3)

    def test_boundary_rates_worked_values(self):
        # alpha=2, delta=3, beta=1, theta=1, n=10 and a full last site:
        # injection is blocked, removal runs at (1/10)*1*2.
        p = ModelParams(alpha=2, n=10, theta=1.0, epsilon=0.8, gamma=0.2, delta=3.0, beta=1.0)
        occ = np.zeros(9, dtype=np.int64)
        occ[-1] = 2
        r = boundary_rates(occ, p)
        assert r.inject_right == 0.0
        assert_allclose(r.remove_right, 2.0 / 10.0)
        assert_allclose(r.inject_left, 0.1 * 0.8 * 2)
        assert r.remove_left == 0.0

    def test_zero_rate_iff_identity_map(self):
        p = make_params(alpha=2, n=4)
        for occ in enumerate_configs(2, 3):
            for ev in all_events(4):
                rate = event_rate(occ, p, ev)
                unchanged = np.array_equal(apply_event(occ, ev, 2), occ)
                assert (rate == 0.0) == unchanged, (occ, ev)

    def test_pair_activity_symmetric_under_swap(self):
        # c_{x,x+1} + c_{x+1,x} only depends on the unordered pair of occupancies
        rng = np.random.default_rng(7)
        for _ in range(200):
            alpha = int(rng.integers(1, 5))
            occ = rng.integers(0, alpha + 1, size=5).astype(np.int64)
            x = int(rng.integers(1, 5))
            swapped = occ.copy()
            swapped[x - 1], swapped[x] = swapped[x], swapped[x - 1]
            total = bulk_rate(occ, alpha, x, x + 1) + bulk_rate(occ, alpha, x + 1, x)
            total_swapped = bulk_rate(swapped, alpha, x, x + 1) + bulk_rate(swapped, alpha, x + 1, x)
            assert total == total_swapped


class TestEvents:
    def test_apply_inject_at_full_site_is_identity(self):
        occ = np.array([2, 1], dtype=np.int64)
        out = apply_event(occ, Event(EventKind.INJECT_LEFT), alpha=2)
        assert np.array_equal(out, occ)
        assert out is not occ

    def test_apply_moves_one_particle(self):
        occ = np.array([1, 0, 2], dtype=np.int64)
        out = apply_event(occ, Event(EventKind.BULK_RIGHT, 1), alpha=2)
        assert np.array_equal(out, [0, 1, 2])
        out = apply_event(out, Event(EventKind.BULK_LEFT, 2), alpha=2)
        assert np.array_equal(out, [0, 2, 1])

    def test_event_id_round_trip(self):
        n = 9
        assert event_count(n) == 2 * (n - 2) + 4
        seen = set()
        for ev in all_events(n):
            eid = event_id(ev, n)
            assert event_from_id(eid, n) == ev
            seen.add(eid)
        assert seen == set(range(event_count(n)))

    @given(
        alpha=st.integers(1, 4),
        occ_seed=st.integers(0, 2**31 - 1),
        eid=st.integers(0, 2 * 3 + 3),
    )
    @settings(max_examples=200, deadline=None)
    def test_mass_change_and_range(self, alpha, occ_seed, eid):
        n = 5
        rng = np.random.default_rng(occ_seed)
        occ = rng.integers(0, alpha + 1, size=n - 1).astype(np.int64)
        ev = event_from_id(eid, n)
        out = apply_event(occ, ev, alpha)
        assert out.min() >= 0 and out.max() <= alpha
        change = int(out.sum() - occ.sum())
        if ev.kind in (EventKind.BULK_RIGHT, EventKind.BULK_LEFT):
            assert change == 0
        else:
            assert change in (-1, 0, 1)

    @given(
        alpha=st.integers(1, 3),
        occ_seed=st.integers(0, 2**31 - 1),
        site=st.integers(1, 3),
        right=st.booleans(),
    )
    @settings(max_examples=200, deadline=None)
    def test_bulk_events_invert_each_other(self, alpha, occ_seed, site, right):
        rng = np.random.default_rng(occ_seed)
        occ = rng.integers(0, alpha + 1, size=4).astype(np.int64)
        fwd = Event(EventKind.BULK_RIGHT if right else EventKind.BULK_LEFT, site)
        rev = Event(EventKind.BULK_LEFT if right else EventKind.BULK_RIGHT, site)
        moved = apply_event(occ, fwd, alpha)
        if not np.array_equal(moved, occ):
            assert np.array_equal(apply_event(moved, rev, alpha), occ)


class TestReferenceWeights:
    def test_constant_half_alpha_one_is_uniform(self):
        p = make_params(alpha=1, n=4)
        varrho = Profile.constant(0.5)
        for occ in enumerate_configs(1, 3):
            assert_allclose(binomial_weight(occ, varrho, p), 0.5**3, rtol=1e-14)

    @pytest.mark.parametrize("alpha", [1, 2, 3])
    def test_weights_sum_to_one(self, alpha):
        p = make_params(alpha=alpha, n=4)
        varrho = Profile.table([0.0, 0.4, 1.0], [0.2, 0.9, 0.5])
        total = sum(binomial_weight(occ, varrho, p) for occ in enumerate_configs(alpha, 3))
        assert_allclose(total, 1.0, rtol=1e-12)

    def test_site_marginals_are_binomial(self):
        p = make_params(alpha=2, n=4)
        varrho = Profile.linear(0.2, 0.8)
        marginal = np.zeros((3, 3))
        for occ in enumerate_configs(2, 3):
            w = binomial_weight(occ, varrho, p)
            for site in range(3):
                marginal[site, occ[site]] += w
        for site in range(3):
            q = varrho((site + 1) / 4)
            expected = [math.comb(2, k) * q**k * (1 - q) ** (2 - k) for k in range(3)]
            assert_allclose(marginal[site], expected, rtol=1e-12)

    def test_log_weight_handles_degenerate_profile(self):
        p = make_params(alpha=1, n=3)
        varrho = Profile.constant(0.0)
        assert log_binomial_weight(np.array([0, 0]), varrho, p) == 0.0
        assert log_binomial_weight(np.array([1, 0]), varrho, p) == -np.inf

    def test_rejects_profile_outside_unit_interval(self):
        p = make_params(alpha=1, n=3)
        with pytest.raises(ValueError):
            binomial_weight(np.array([0, 0]), Profile.constant(1.2), p)


class TestSampling:
    def test_site_means_within_clt_bound(self):
        p = make_params(alpha=2, n=8)
        g = Profile.linear(0.3, 1.7)
        rng = np.random.default_rng(2024)
        reps = 4000
        acc = np.zeros(p.sites)
        for _ in range(reps):
            acc += sample_initial(p, g, rng)
        mean = acc / reps
        x = np.arange(1, p.n) / p.n
        target = g(x)
        # per-site variance of a Binomial(alpha, g/alpha) sample
        sigma = np.sqrt(target * (1 - target / p.alpha) / reps)
        assert np.all(np.abs(mean - target) <= 3 * sigma)

    def test_sampling_is_deterministic_given_rng(self):
        p = make_params(alpha=3, n=20)
        g = Profile.constant(1.5)
        a = sample_initial(p, g, np.random.default_rng(11))
        b = sample_initial(p, g, np.random.default_rng(11))
        assert np.array_equal(a, b)

    def test_rejects_profile_outside_range(self):
        p = make_params(alpha=1, n=5)
        with pytest.raises(ValueError):
            sample_initial(p, Profile.constant(1.5), np.random.default_rng(0))


class TestEmpiricalPairing:
    def test_worked_value(self):
        # two sites, eta=(1,2), G(u)=u: (1/2)(1*(1/3) + 2*(2/3)) = 5/6
        occ = np.array([1, 2], dtype=np.int64)
        assert_allclose(integrate_test_function(occ, lambda u: u, 3), 5.0 / 6.0)

    def test_bounded_by_alpha_sup_norm(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            alpha = int(rng.integers(1, 4))
            n = int(rng.integers(3, 30))
            occ = rng.integers(0, alpha + 1, size=n - 1)
            val = integrate_test_function(occ, np.sin, n)
            assert abs(val) <= alpha * 1.0 + 1e-15

    def test_accepts_scalar_only_functions(self):
        occ = np.array([1, 1], dtype=np.int64)
        val = integrate_test_function(occ, lambda u: float(u) ** 2, 3)
        assert_allclose(val, ((1 / 3) ** 2 + (2 / 3) ** 2) / 2)


class TestDiscreteCalculus:
    def test_laplacian_exact_on_cubics(self):
        # central second differences are exact up to cubic terms
        fn = lambda u: 2.0 * u**3 - u**2 + 3.0 * u - 0.5
        for n, x in [(10, 1), (10, 5), (10, 9), (64, 33)]:
            assert_allclose(discrete_laplacian(fn, x, n), 12.0 * (x / n) - 2.0, atol=1e-9)

    def test_gradient_exact_on_affine(self):
        fn = lambda u: -3.0 * u + 1.0
        for n, x in [(7, 0), (7, 3), (7, 6)]:
            assert_allclose(discrete_gradient_plus(fn, x, n), -3.0, atol=1e-12)

    @given(coeffs=st.lists(st.floats(-2, 2), min_size=4, max_size=4), x=st.integers(1, 15))
    @settings(max_examples=100, deadline=None)
    def test_laplacian_is_gradient_difference(self, coeffs, x):
        n = 16
        fn = lambda u: coeffs[0] + coeffs[1] * u + coeffs[2] * u * u + coeffs[3] * math.sin(3 * u)
        lap = discrete_laplacian(fn, x, n)
        grad_diff = n * (discrete_gradient_plus(fn, x, n) - discrete_gradient_plus(fn, x - 1, n))
        assert_allclose(lap, grad_diff, rtol=1e-9, atol=1e-7)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            discrete_laplacian(lambda u: u, 0, 10)
        with pytest.raises(ValueError):
            discrete_gradient_plus(lambda u: u, 10, 10)


class TestWindowedAverage:
    def test_worked_value(self):
        occ = np.array([0, 1, 2, 3], dtype=np.int64)
        assert_allclose(windowed_average(occ, 1, 2, "right"), 1.5)

    def test_left_window(self):
        occ = np.array([0, 1, 2, 3], dtype=np.int64)
        assert_allclose(windowed_average(occ, 4, 3, "left"), 1.0)

    def test_window_must_stay_in_bulk(self):
        occ = np.array([0, 1, 2, 3], dtype=np.int64)
        with pytest.raises(ValueError):
            windowed_average(occ, 3, 2, "right")
        with pytest.raises(ValueError):
            windowed_average(occ, 2, 2, "left")

    @given(
        z=st.integers(1, 8),
        length=st.integers(1, 8),
        seed=st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=100, deadline=None)
    def test_average_within_occupancy_range(self, z, length, seed):
        rng = np.random.default_rng(seed)
        occ = rng.integers(0, 4, size=9).astype(np.int64)
        if z + length > 9:
            return
        val = windowed_average(occ, z, length, "right")
        assert 0.0 <= val <= 3.0


class TestProfile:
    def test_step_semantics(self):
        g = Profile.step(1.0, 3.0, at=0.5)
        assert g(0.4999) == 1.0
        assert g(0.5) == 3.0

    def test_table_interpolates_and_clamps(self):
        g = Profile.table([0.2, 0.8], [1.0, 4.0])
        assert_allclose(g(0.5), 2.5)
        assert g(0.0) == 1.0
        assert g(1.0) == 4.0

    def test_scaled_all_kinds(self):
        for g in [
            Profile.constant(2.0),
            Profile.linear(1.0, 3.0),
            Profile.step(2.0, 4.0, at=0.25),
            Profile.table([0.0, 1.0], [2.0, 6.0]),
        ]:
            h = g.scaled(0.5)
            for u in (0.0, 0.2, 0.25, 0.7, 1.0):
                assert_allclose(h(u), 0.5 * g(u), rtol=1e-14)

    def test_vectorised_evaluation(self):
        g = Profile.linear(0.0, 1.0)
        u = np.linspace(0, 1, 11)
        assert_allclose(g(u), u)

    def test_rejects_malformed(self):
        with pytest.raises(ValueError):
            Profile("constant", (1.0, 2.0))
        with pytest.raises(ValueError):
            Profile.table([0.5, 0.2], [1.0, 2.0])
        with pytest.raises(ValueError):
            Profile("weird", (1.0,))
