"""Event-driven engine: rate bookkeeping, sampling law, trajectory records."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sepsim import exact
from sepsim.engine import (
    EventLog,
    RateTable,
    build_state,
    net_reservoir_flux,
    read_event_log,
    reservoir_event_counts,
    run_trajectory,
    run_until,
    snapshot_profile,
    step,
    write_event_log,
    write_trajectory_csv,
)
from sepsim.model import (
    ModelParams,
    Profile,
    all_events,
    event_rate,
)


def make_params(**overrides):
    base = dict(alpha=2, n=8, theta=0.5, epsilon=0.8, gamma=0.2, delta=0.3, beta=0.9)
    base.update(overrides)
    return ModelParams(**base)


class TestRateTable:
    def test_total_and_leaves(self):
        t = RateTable([1.0, 2.0, 3.0, 4.0, 5.0])
        assert t.total_rate == 15.0
        assert t.rates().tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]
        assert t.rate(3) == 4.0

    def test_update_changes_total(self):
        t = RateTable([1.0, 2.0, 3.0])
        t.update(1, 10.0)
        assert t.total_rate == 14.0
        assert t.rate(1) == 10.0

    def test_sample_hand_case(self):
        # cumulative intervals [0,1), [1,3), [3,6)
        t = RateTable([1.0, 2.0, 3.0])
        assert t.sample(0.0) == 0
        assert t.sample(0.17) == 1  # 0.17*6 = 1.02
        assert t.sample(0.5) == 2
        assert t.sample(0.999) == 2

    def test_sample_skips_zero_rate(self):
        t = RateTable([0.0, 5.0, 0.0])
        for u in (0.0, 0.3, 0.9999):
            assert t.sample(u) == 1

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            RateTable([])
        with pytest.raises(ValueError):
            RateTable([1.0, -2.0])
        t = RateTable([1.0, 2.0])
        with pytest.raises(IndexError):
            t.update(2, 1.0)
        with pytest.raises(ValueError):
            t.update(0, -1.0)
        with pytest.raises(ValueError):
            t.sample(1.0)
        with pytest.raises(RuntimeError):
            RateTable([0.0, 0.0]).sample(0.5)

    def test_rebuild_is_bit_identical_after_many_updates(self):
        # ancestor updates perform the same additions as a fresh build,
        # so the internal nodes never drift from the rebuilt tree
        rng = np.random.default_rng(3)
        t = RateTable(rng.uniform(0.0, 5.0, size=37))
        for _ in range(20000):
            t.update(int(rng.integers(0, 37)), float(rng.uniform(0.0, 5.0)))
        assert t.rebuild() == 0.0

    @given(st.lists(st.floats(0.0, 100.0), min_size=1, max_size=40), st.floats(0.0, 1.0, exclude_max=True))
    @settings(max_examples=200, deadline=None)
    def test_sample_matches_cumulative_search(self, rates, u):
        total = sum(rates)
        if total <= 0.0:
            return
        t = RateTable(rates)
        idx = t.sample(u)
        # the sampled leaf owns the point u * total in cumulative order
        cum = np.cumsum(rates)
        expected = int(np.searchsorted(cum, u * t.total_rate, side="right"))
        expected = min(expected, len(rates) - 1)
        while expected > 0 and rates[expected] <= 0.0:
            expected -= 1
        assert idx == expected


class TestBuildState:
    def test_profile_initial_sampling_is_in_range(self):
        p = make_params()
        state = build_state(p, Profile.linear(0.2, 1.8), seed=5)
        assert state.occ.shape == (p.sites,)
        assert np.all(state.occ >= 0) and np.all(state.occ <= p.alpha)
        assert state.time == 0.0

    def test_explicit_occupancies_are_copied(self):
        p = make_params()
        occ = np.ones(p.sites, dtype=np.int64)
        state = build_state(p, occ, seed=0)
        occ[0] = 2
        assert state.occ[0] == 1

    def test_initial_rates_match_model(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=9)
        expected = [event_rate(state.occ, p, ev) for ev in all_events(p.n)]
        np.testing.assert_allclose(state.table.rates(), expected, rtol=0, atol=0)

    def test_rejects_bad_occupancies(self):
        p = make_params()
        with pytest.raises(ValueError):
            build_state(p, np.zeros(p.sites + 1, dtype=np.int64))
        with pytest.raises(ValueError):
            build_state(p, np.full(p.sites, p.alpha + 1))
        with pytest.raises(ValueError):
            build_state(p, -np.ones(p.sites, dtype=np.int64))

    def test_same_seed_reproduces_run(self):
        p = make_params()
        a = build_state(p, Profile.constant(1.0), seed=1234)
        b = build_state(p, Profile.constant(1.0), seed=1234)
        assert np.array_equal(a.occ, b.occ)
        run_until(a, 0.4)
        run_until(b, 0.4)
        assert np.array_equal(a.occ, b.occ)
        assert a.clock[0] == b.clock[0]
        assert a.events_applied == b.events_applied

    def test_different_seeds_differ(self):
        p = make_params(n=40)
        a = build_state(p, Profile.constant(1.0), seed=1)
        b = build_state(p, Profile.constant(1.0), seed=2)
        run_until(a, 0.2)
        run_until(b, 0.2)
        assert not np.array_equal(a.occ, b.occ) or a.events_applied != b.events_applied


class TestStepAndRun:
    def test_step_applies_one_event(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=3)
        before = state.occ.copy()
        event, dt = step(state)
        assert dt > 0.0
        assert state.events_applied == 1
        assert state.time_micro == pytest.approx(dt)
        assert int(np.abs(state.occ - before).sum()) in (1, 2)
        assert event in all_events(p.n)

    def test_rates_stay_consistent_along_a_run(self):
        # incremental refreshes after each event must agree with a from
        # scratch evaluation at the current configuration
        p = make_params(alpha=3, n=7, theta=0.2)
        state = build_state(p, Profile.constant(1.5), seed=21)
        for _ in range(500):
            step(state)
        expected = [event_rate(state.occ, p, ev) for ev in all_events(p.n)]
        np.testing.assert_array_equal(state.table.rates(), expected)
        assert state.table.rebuild() == 0.0

    def test_run_until_reaches_target_exactly(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=4)
        run_until(state, 0.25)
        assert state.time_micro == 0.25 * p.n * p.n
        assert run_until(state, 0.25) == 0

    def test_run_until_rejects_backwards_and_infinite(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=4)
        run_until(state, 0.2)
        with pytest.raises(ValueError):
            run_until(state, 0.1)
        with pytest.raises(ValueError):
            run_until(state, math.inf)

    def test_occupancies_stay_in_range_along_run(self):
        p = make_params(alpha=1, n=12, theta=-0.5)
        state = build_state(p, Profile.constant(0.5), seed=8)
        for _ in range(2000):
            step(state)
            assert np.all(state.occ >= 0) and np.all(state.occ <= p.alpha)

    def test_waits_are_unit_exponentials_after_rate_scaling(self):
        # dt * total_rate is Exp(1) whatever the configuration, so the
        # sample mean and a tail probability pin the waiting-time law
        p = ModelParams(alpha=2, n=6, theta=0.0, epsilon=0.8, gamma=0.2, delta=0.2, beta=0.8)
        state = build_state(p, Profile.constant(1.0), seed=11)
        k = 4000
        vals = np.empty(k)
        for i in range(k):
            total = state.table.total_rate
            _, dt = step(state)
            vals[i] = dt * total
        assert abs(vals.mean() - 1.0) < 3.0 / math.sqrt(k)
        tail = float(np.mean(vals > 1.0))
        assert abs(tail - math.exp(-1.0)) < 3.0 * math.sqrt(0.368 * 0.632 / k)


class TestAgainstExactLaw:
    def test_transient_distribution_matches_matrix_exponential(self):
        # empirical law of eta_t over 2000 runs against expm; the pilot
        # expectation of the sampling TV alone is about 0.043
        p = ModelParams(alpha=2, n=4, theta=0.2, epsilon=0.9, gamma=0.3, delta=0.4, beta=0.7)
        tab = exact.occupancy_table(p)
        prob_site = np.array([math.comb(p.alpha, k) * 0.4**k * 0.6 ** (p.alpha - k) for k in range(p.alpha + 1)])
        p0 = np.ones(tab.shape[0])
        for s in range(p.sites):
            p0 *= prob_site[tab[:, s]]
        pt = exact.evolve_distribution(p, p0, 0.08)
        runs = 2000
        counts = np.zeros(tab.shape[0])
        for r in range(runs):
            state = build_state(p, Profile.constant(0.8), seed=np.random.SeedSequence(entropy=(2025, r)))
            run_until(state, 0.08)
            counts[exact.state_index(state.occ, p.alpha)] += 1
        tv = 0.5 * np.abs(counts / runs - pt).sum()
        assert tv < 0.05

    def test_product_measure_is_preserved_when_reservoirs_match(self):
        # rho_minus == rho_plus == 1.2 although the two reservoirs act at
        # different speeds; site marginals must stay Binomial(2, 0.6)
        p = ModelParams(alpha=2, n=8, theta=0.3, epsilon=0.6, gamma=0.4, delta=0.3, beta=0.2)
        assert p.rho_minus == pytest.approx(p.rho_plus)
        runs = 2000
        occs = np.empty((runs, p.sites), dtype=np.int64)
        for r in range(runs):
            state = build_state(p, Profile.constant(1.2), seed=np.random.SeedSequence(entropy=(555, r)))
            run_until(state, 0.15)
            occs[r] = state.occ
        se_mean = math.sqrt(2 * 0.6 * 0.4 / runs)
        for s in range(p.sites):
            assert abs(occs[:, s].mean() - 1.2) < 3.0 * se_mean
        for k, pk in enumerate((0.16, 0.48, 0.36)):
            frac = float((occs == k).mean())
            assert abs(frac - pk) < 3.0 * math.sqrt(pk * (1 - pk) / (runs * p.sites))

    def test_single_site_time_average(self):
        # n=2 keeps one site fed by both reservoirs; its stationary
        # occupation probability is (epsilon+delta)/(epsilon+gamma+delta+beta)
        p = ModelParams(alpha=1, n=2, theta=0.7, epsilon=0.9, gamma=0.1, delta=0.2, beta=0.8)
        target = (p.epsilon + p.delta) / (p.epsilon + p.gamma + p.delta + p.beta)
        state = build_state(p, np.array([0]), seed=31)
        checkpoints = 1.0 + 1.25 * np.arange(500)
        record = run_trajectory(state, checkpoints)
        avg = record.occupancies[:, 0].mean()
        assert abs(avg - target) < 3.0 * math.sqrt(target * (1 - target) / 500)


class TestSnapshotProfile:
    def test_identity_binning(self):
        occ = np.array([2, 0, 1, 1, 2])
        prof = snapshot_profile(occ, n=6, m=5)
        np.testing.assert_array_equal(prof.density, occ.astype(float))
        np.testing.assert_allclose(prof.bin_centers, (np.arange(5) + 0.5) / 5)
        assert prof.site_counts.tolist() == [1, 1, 1, 1, 1]

    def test_coarse_bins_average_their_sites(self):
        # n=10, m=3: cells (0,1/3], (1/3,2/3], (2/3,1] hold sites
        # {1,2,3}, {4,5,6}, {7,8,9}
        occ = np.arange(9, dtype=np.int64)
        prof = snapshot_profile(occ, n=10, m=3)
        np.testing.assert_allclose(prof.density, [1.0, 4.0, 7.0])
        assert prof.site_counts.tolist() == [3, 3, 3]

    def test_rejects_bad_bin_counts(self):
        occ = np.zeros(5, dtype=np.int64)
        with pytest.raises(ValueError):
            snapshot_profile(occ, n=6, m=6)
        with pytest.raises(ValueError):
            snapshot_profile(occ, n=6, m=0)
        with pytest.raises(ValueError):
            snapshot_profile(np.zeros(4, dtype=np.int64), n=6, m=3)

    @given(st.integers(3, 40), st.integers(1, 39), st.integers(0, 10**6))
    @settings(max_examples=150, deadline=None)
    def test_mass_and_range_are_preserved(self, n, m, seed):
        if m > n - 1:
            return
        rng = np.random.default_rng(seed)
        occ = rng.integers(0, 4, size=n - 1)
        prof = snapshot_profile(occ, n=n, m=m)
        assert prof.site_counts.sum() == n - 1
        assert np.all(prof.site_counts >= 1)
        np.testing.assert_allclose(float(prof.density @ prof.site_counts), float(occ.sum()))
        assert np.all(prof.density >= occ.min() - 1e-12)
        assert np.all(prof.density <= occ.max() + 1e-12)


class TestTrajectories:
    def test_checkpoint_validation(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=6)
        with pytest.raises(ValueError):
            run_trajectory(state, [])
        with pytest.raises(ValueError):
            run_trajectory(state, [0.2, 0.1])
        with pytest.raises(ValueError):
            run_trajectory(state, [0.1, 0.1])
        run_until(state, 0.5)
        with pytest.raises(ValueError):
            run_trajectory(state, [0.4])

    def test_record_shapes_and_mass_balance(self):
        p = make_params(alpha=1, n=20, theta=0.0)
        state = build_state(p, Profile.constant(0.5), seed=17)
        record = run_trajectory(state, [0.05, 0.1, 0.2], m_bins=10, capture_log=True)
        assert record.profiles.shape == (3, 10)
        assert record.occupancies.shape == (3, p.sites)
        assert record.event_count == record.log.event_ids.size
        assert record.log.seg_ends.tolist()[-1] == record.event_count
        # reservoirs are the only mass source, so the logged boundary events
        # account for the whole change
        drift = int(record.occ_final.sum() - record.occ_initial.sum())
        assert drift == net_reservoir_flux(record.log.event_ids, p.n)
        inj_l, rem_l, inj_r, rem_r = reservoir_event_counts(record.log.event_ids, p.n)
        assert inj_l - rem_l + inj_r - rem_r == drift

    def test_chunked_capture_is_bit_identical(self):
        # each event consumes exactly two draws, so splitting the log
        # buffer cannot change the stream
        p = make_params(alpha=1, n=16, theta=0.0)
        a = build_state(p, Profile.constant(0.5), seed=99)
        b = build_state(p, Profile.constant(0.5), seed=99)
        ra = run_trajectory(a, [0.05, 0.15], capture_log=True, chunk=7)
        rb = run_trajectory(b, [0.05, 0.15], capture_log=True, chunk=1 << 20)
        np.testing.assert_array_equal(ra.log.event_ids, rb.log.event_ids)
        np.testing.assert_array_equal(ra.log.waits, rb.log.waits)
        np.testing.assert_array_equal(ra.occ_final, rb.occ_final)
        assert a.clock[0] == b.clock[0]

    def test_capture_after_a_warmup_uses_relative_times(self):
        p = make_params(alpha=1, n=10, theta=0.0)
        state = build_state(p, Profile.constant(0.5), seed=41)
        run_until(state, 0.3)
        epoch = state.time_micro
        record = run_trajectory(state, [0.4, 0.5], capture_log=True)
        np.testing.assert_allclose(
            record.log.seg_targets_micro,
            np.array([0.4, 0.5]) * p.n * p.n - epoch,
        )
        assert record.log.waits.sum() <= record.log.seg_targets_micro[-1] + 1e-9

    def test_final_checkpoint_matches_state(self):
        p = make_params()
        state = build_state(p, Profile.constant(1.0), seed=2)
        record = run_trajectory(state, [0.1, 0.2])
        np.testing.assert_array_equal(record.occupancies[-1], record.occ_final)
        np.testing.assert_array_equal(record.occ_final, state.occ)
        assert state.time == pytest.approx(0.2)


class TestEventLogSerialization:
    def _sample_record(self):
        p = make_params(alpha=1, n=12, theta=0.0)
        state = build_state(p, Profile.constant(0.5), seed=13)
        return run_trajectory(state, [0.03, 0.09], capture_log=True)

    def test_round_trip(self, tmp_path):
        record = self._sample_record()
        path = tmp_path / "events.bin"
        write_event_log(record.log, str(path))
        log = read_event_log(str(path))
        np.testing.assert_array_equal(log.event_ids, record.log.event_ids)
        np.testing.assert_array_equal(log.waits, record.log.waits)
        np.testing.assert_array_equal(log.seg_ends, record.log.seg_ends)
        np.testing.assert_array_equal(log.seg_targets_micro, record.log.seg_targets_micro)

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a log at all")
        with pytest.raises(ValueError):
            read_event_log(str(path))

    def test_log_validation(self):
        ids = np.array([0, 1], dtype=np.uint32)
        dts = np.array([0.1, 0.2])
        with pytest.raises(ValueError):
            EventLog(ids, dts[:1], np.array([2]), np.array([1.0]))
        with pytest.raises(ValueError):
            EventLog(ids, dts, np.array([1]), np.array([1.0]))  # ends before final event
        with pytest.raises(ValueError):
            EventLog(ids, dts, np.array([2, 1]), np.array([0.5, 1.0]))

    def test_trajectory_csv_layout(self, tmp_path):
        record = self._sample_record()
        path = tmp_path / "traj.csv"
        write_trajectory_csv(record, str(path))
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "macro_time,bin_index,bin_center,density"
        assert len(lines) == 1 + record.times.size * record.bin_centers.size
        first = lines[1].split(",")
        assert float(first[0]) == record.times[0]
        assert int(first[1]) == 0
        assert float(first[3]) == record.profiles[0, 0]
