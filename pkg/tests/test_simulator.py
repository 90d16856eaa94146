import random

import numpy as np
import pytest

from memsched.capacity import c_of_M, eta_vector
from memsched.channel import ChannelParams, belief_update, sample_step, symmetric
from memsched.policies import (
    ActivationVector,
    FixedRR,
    PacketKind,
    QRRConfig,
    RandRRSpec,
    RoundRobinState,
    TransmitUntilNack,
    all_activation_vectors,
    rr_step,
)
from memsched.simulator import (
    QUEUED,
    SATURATED,
    ArrivalConfig,
    SimConfig,
    SimMetrics,
    _streams,
    collect_dwell_histogram,
    run,
    run_queued,
    run_saturated,
    stability_report,
)

SYM2 = symmetric(2, 0.2, 0.2)
ASYM = [ChannelParams(0.1, 0.3), ChannelParams(0.3, 0.1)]
C2 = c_of_M(SYM2[0], 2)


def reference_rr(params, phi, horizon, seed):
    """Every channel stepped every slot, beliefs by the literal recursion."""
    rng = np.random.default_rng(seed)
    prng = random.Random(seed)
    n = len(params)
    states = (rng.random(n) < [p.pi_on for p in params]).astype(int)
    omega = np.array([p.pi_on for p in params])
    last_used = [None] * n
    st = RoundRobinState.start(phi, params, last_used)
    feedback = None
    delivered = np.zeros(n)
    for t in range(horizon):
        action, st, ended = rr_step(st, omega, feedback, prng)
        if ended:
            st = RoundRobinState.start(phi, params, last_used)
            action, st, _ = rr_step(st, omega, None, prng)
        k = action.served
        s = int(states[k])
        if action.packet_kind is PacketKind.DATA and s:
            delivered[k] += 1
        feedback = bool(s)
        last_used[k] = t
        omega = belief_update(omega, k, s, params)
        states = sample_step(states, params, rng)
    return delivered / horizon


class TestConfigValidation:
    def test_horizon(self):
        with pytest.raises(ValueError, match="horizon"):
            SimConfig(SYM2, FixedRR.first(2, 2), horizon=0, burn_in=0)

    def test_qrr_needs_queues(self):
        with pytest.raises(ValueError, match="queued"):
            SimConfig(SYM2, QRRConfig((0.1, 0.1)), horizon=100, burn_in=0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            SimConfig(SYM2, FixedRR.first(3, 3), horizon=100, burn_in=0)
        with pytest.raises(ValueError):
            SimConfig(SYM2, FixedRR.first(2, 2), horizon=100, burn_in=0, mode=QUEUED, arrivals=ArrivalConfig((0.1,)))

    def test_arrival_bounds(self):
        with pytest.raises(ValueError):
            ArrivalConfig((1.5,))
        assert ArrivalConfig((1.5,), a_max=2, law="binomial").lam == (1.5,)

    def test_mode_guards(self):
        cfg = SimConfig(SYM2, FixedRR.first(2, 2), horizon=100, burn_in=0)
        with pytest.raises(ValueError):
            run_queued(cfg)
        qcfg = SimConfig(SYM2, FixedRR.first(2, 2), horizon=100, burn_in=0, mode=QUEUED, arrivals=ArrivalConfig((0.1, 0.1)))
        with pytest.raises(ValueError):
            run_saturated(qcfg)


class TestSaturated:
    def test_asymmetric_rr(self):
        m = run(SimConfig(ASYM, FixedRR.first(2, 2), horizon=10**6, seed=2, record_dwells=False))
        target = eta_vector(ActivationVector.parse("11"), ASYM)
        assert np.abs(np.array(m.throughput) - target).max() <= 0.005
        assert m.violations == 0

    def test_throughput_is_delivered_over_slots(self):
        m = run(SimConfig(SYM2, FixedRR.first(2, 2), horizon=50_000, seed=1))
        assert m.throughput == [d / m.slots for d in m.delivered]
        assert m.slots == 50_000 - 10_000

    def test_dwell_histogram(self):
        m = run(SimConfig(SYM2, FixedRR.first(2, 2), horizon=300_000, seed=4))
        for lengths, counts, pmf in collect_dwell_histogram(m).values():
            table = dict(zip(lengths.tolist(), pmf.tolist()))
            assert abs(table[1] - 0.68) <= 0.01
            assert abs(table[2] - 0.064) <= 0.005
            assert abs(table[3] - 0.0512) <= 0.005

    def test_renewal_quantities(self):
        m = run(SimConfig(SYM2, FixedRR.first(2, 2), horizon=300_000, seed=5))
        assert m.mean_round_length == pytest.approx(5.2, abs=0.05)
        assert m.mean_round_reward == pytest.approx([1.6, 1.6], abs=0.03)

    def test_matches_reference_simulator(self):
        phi = ActivationVector.parse("11")
        ref = reference_rr(SYM2, phi, 200_000, seed=8)
        fast = run(SimConfig(SYM2, FixedRR(phi), horizon=200_000, seed=8, burn_in=0)).throughput
        assert ref == pytest.approx([C2 / 2] * 2, abs=0.01)
        assert fast == pytest.approx(ref, abs=0.012)

    def test_deterministic_replay(self):
        spec = RandRRSpec({phi: 1 / 7 for phi in all_activation_vectors(3)})
        cfg = SimConfig(symmetric(3, 0.1, 0.2), spec, horizon=30_000, seed=11)
        a, b = run(cfg), run(cfg)
        assert a.summary() == b.summary() and a.series == b.series and a.dwell_counts == b.dwell_counts
        c = run(SimConfig(symmetric(3, 0.1, 0.2), spec, horizon=30_000, seed=12))
        assert c.summary() != a.summary()


@pytest.fixture(scope="module")
def traced():
    spec = RandRRSpec({phi: 1 / 7 for phi in all_activation_vectors(3)})
    params = [ChannelParams(0.1, 0.2), ChannelParams(0.3, 0.1), ChannelParams(0.05, 0.05)]
    cfg = SimConfig(params, spec, horizon=5000, seed=3, burn_in=0, trace=True, debug_beliefs=True)
    return params, run(cfg)


class TestTrace:

    def test_beliefs_follow_recursion(self, traced):
        params, m = traced
        omega = np.array([p.pi_on for p in params])
        for rec in m.trace:
            omega = belief_update(omega, rec["served"], rec["state"], params)
            assert np.allclose(rec["omega"], omega, atol=1e-12)

    def test_dummy_only_on_fresh_switch(self, traced):
        _, m = traced
        prev = None
        for rec in m.trace:
            if rec["packet_kind"] == PacketKind.DUMMY.value and prev is not None:
                # the previous slot closed its visit: other channel, a dummy, or a NACK
                assert prev["served"] != rec["served"] or prev["packet_kind"] == "dummy" or prev["feedback"] == 0
            prev = rec

    def test_delivered_equals_dwell_minus_one(self, traced):
        _, m = traced
        visits = sum(sum((length - 1) * c for length, c in counter.items()) for counter in m.dwell_counts.values())
        acks = sum(1 for r in m.trace if r["packet_kind"] == "data" and r["state"] == 1)
        assert 0 <= acks - visits <= 200


class TestQueued:
    def test_zero_arrivals(self):
        cfg = SimConfig(SYM2, QRRConfig((0.0, 0.0)), horizon=20_000, mode=QUEUED, arrivals=ArrivalConfig((0.0, 0.0)))
        m = run(cfg)
        assert m.backlog_sum == 0 and all(row[1] == 0 for row in m.series)

    def test_queue_evolution_exact(self):
        lam = (0.3, 0.2)
        cfg = SimConfig(SYM2, QRRConfig(lam), horizon=3000, seed=6, mode=QUEUED, arrivals=ArrivalConfig(lam), burn_in=0, trace=True, series_stride=1)
        m = run(cfg)
        _, _, arr_rng = _streams(6)
        arrivals = cfg.arrivals.draw_block(arr_rng, 65536)
        U = np.zeros(2, dtype=int)
        for t, rec in enumerate(m.trace):
            mu = np.zeros(2, dtype=int)
            if rec["packet_kind"] == "data" and rec["state"] == 1:
                mu[rec["served"]] = 1
            U = np.maximum(U - mu, 0) + arrivals[t]
            assert m.series[t][1] == U.sum()
        assert m.final_backlog == U.tolist()

    def test_empty_queue_feedback_switch(self):
        lam = (0.05, 0.05)
        base = dict(horizon=2000, seed=1, mode=QUEUED, arrivals=ArrivalConfig(lam), burn_in=0, trace=True)
        kept = run(SimConfig(SYM2, FixedRR.first(2, 2), **base))
        dropped = run(SimConfig(SYM2, FixedRR.first(2, 2), empty_queue_feedback=False, **base))
        assert all(r["feedback"] != "" for r in kept.trace)
        assert any(r["feedback"] == "" for r in dropped.trace)

    def test_overflow_guard(self):
        lam = (0.9, 0.9)
        cfg = SimConfig(SYM2, QRRConfig(lam), horizon=100_000, mode=QUEUED, arrivals=ArrivalConfig(lam), backlog_cap=200)
        m = run(cfg)
        assert m.overflowed and m.total_slots < 100_000

    def test_heuristic_queued_runs(self):
        lam = (0.2, 0.2)
        m = run(SimConfig(SYM2, TransmitUntilNack(), horizon=50_000, mode=QUEUED, arrivals=ArrivalConfig(lam)))
        assert m.sum_throughput == pytest.approx(0.4, abs=0.02)

    def test_binomial_arrivals(self):
        arr = ArrivalConfig((1.2, 0.4), a_max=3, law="binomial")
        block = arr.draw_block(np.random.default_rng(0), 100_000)
        assert block.max() <= 3
        assert block.mean(axis=0) == pytest.approx([1.2, 0.4], abs=0.02)


class TestStabilityReport:
    def _metrics(self, totals):
        m = SimMetrics(n_channels=1)
        run_sum = 0.0
        for i, u in enumerate(totals, start=1):
            run_sum += u * 1000
            m.series.append((i * 1000, u, run_sum / (i * 1000), 0))
        return m

    def test_flat_series_is_stable(self):
        rng = np.random.default_rng(0)
        rep = stability_report(self._metrics(20 + rng.normal(0, 2, 1000)))
        assert rep.stable and not rep.slope_positive

    def test_linear_growth_detected(self):
        rep = stability_report(self._metrics(np.arange(1000) * 0.5))
        assert rep.slope_positive and not rep.stable

    def test_too_short(self):
        with pytest.raises(ValueError):
            stability_report(self._metrics([1, 2, 3]))
