"""Slot-level downlink simulation: channels, policy actions, feedback and queues."""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .channel import ON, BeliefTracker, ChannelBank, ChannelParams
from .policies import (
    FixedRR,
    PacketKind,
    Phase,
    PolicySpec,
    QRRConfig,
    RandRRSpec,
    RoundRobinState,
    TransmitUntilNack,
    UntilNackState,
    qrr_select,
)

SATURATED = "saturated"
QUEUED = "queued"


@dataclass(frozen=True)
class ArrivalConfig:
    """I.i.d. bounded arrivals: Bernoulli(lam) or Binomial(a_max, lam / a_max)."""

    lam: tuple[float, ...]
    a_max: int = 1
    law: str = "bernoulli"

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if self.a_max < 1:
            raise ValueError("a_max must be a positive integer")
        if self.law not in ("bernoulli", "binomial"):
            raise ValueError(f"unknown arrival law {self.law!r}")
        cap = 1 if self.law == "bernoulli" else self.a_max
        if any(not 0.0 <= v <= cap for v in self.lam):
            raise ValueError(f"arrival rates must lie in [0, {cap}] for law {self.law}, got {self.lam}")

    def draw_block(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lam = np.asarray(self.lam)
        if self.law == "bernoulli":
            return (rng.random((size, len(lam))) < lam).astype(np.int64)
        return rng.binomial(self.a_max, lam / self.a_max, size=(size, len(lam)))


@dataclass(frozen=True)
class SimConfig:
    params: tuple[ChannelParams, ...]
    policy: PolicySpec
    horizon: int = 1_000_000
    seed: int = 0
    mode: str = SATURATED
    arrivals: Optional[ArrivalConfig] = None
    burn_in: int = 10_000
    assertions_on: bool = True
    prior: Optional[tuple[float, ...]] = None
    backlog_cap: int = 10_000_000
    series_stride: int = 1000
    record_dwells: bool = True
    trace: bool = False
    empty_queue_feedback: bool = True
    debug_beliefs: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "params", tuple(self.params))
        n = len(self.params)
        if n < 1:
            raise ValueError("at least one channel is required")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0 <= self.burn_in < self.horizon:
            raise ValueError("burn_in must be in [0, horizon)")
        if self.series_stride < 1:
            raise ValueError("series_stride must be >= 1")
        if self.mode not in (SATURATED, QUEUED):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == QUEUED:
            if self.arrivals is None:
                raise ValueError("queued mode needs an arrival configuration")
            if len(self.arrivals.lam) != n:
                raise ValueError("arrival vector length differs from channel count")
        if isinstance(self.policy, QRRConfig):
            if self.mode != QUEUED:
                raise ValueError("QRR needs queue backlogs (mode = queued)")
            if len(self.policy.lam) != n:
                raise ValueError("QRR rate vector length differs from channel count")
        elif isinstance(self.policy, FixedRR):
            if self.policy.phi.n != n:
                raise ValueError("activation vector length differs from channel count")
        elif isinstance(self.policy, RandRRSpec):
            if self.policy.n != n:
                raise ValueError("RandRR activation vectors differ from channel count")
        elif isinstance(self.policy, TransmitUntilNack):
            chans = self.policy.channels
            if chans is not None and (not chans or any(not 0 <= c < n for c in chans)):
                raise ValueError("heuristic channel list out of range")
        else:
            raise TypeError(f"unsupported policy {self.policy!r}")
        if self.prior is not None and len(self.prior) != n:
            raise ValueError("prior length differs from channel count")


@dataclass
class SimMetrics:
    n_channels: int
    slots: int = 0
    delivered: list[int] = field(default_factory=list)
    total_slots: int = 0
    data_packets: int = 0
    dummy_packets: int = 0
    violations: int = 0
    overflowed: bool = False
    rounds: int = 0
    round_slots: int = 0
    round_slots_sq: int = 0
    round_rewards: list[int] = field(default_factory=list)
    dwell_counts: dict = field(default_factory=dict)
    dwell_sequences: dict = field(default_factory=dict)
    series: list[tuple] = field(default_factory=list)
    backlog_sum: float = 0.0
    final_backlog: list[int] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    @property
    def throughput(self) -> list[float]:
        return [d / self.slots for d in self.delivered]

    @property
    def sum_throughput(self) -> float:
        return sum(self.delivered) / self.slots

    @property
    def mean_round_length(self) -> float:
        """Renewal-period estimate E[T]."""
        return self.round_slots / self.rounds if self.rounds else math.nan

    @property
    def mean_round_reward(self) -> list[float]:
        """Per-channel successful transmissions per round, E[R_n]."""
        return [r / self.rounds if self.rounds else math.nan for r in self.round_rewards]

    @property
    def mean_backlog(self) -> float:
        return self.backlog_sum / self.total_slots if self.total_slots else 0.0

    def summary(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "slots_measured": self.slots,
            "slots_total": self.total_slots,
            "delivered": list(self.delivered),
            "throughput": self.throughput,
            "sum_throughput": self.sum_throughput,
            "data_packets": self.data_packets,
            "dummy_packets": self.dummy_packets,
            "belief_floor_violations": self.violations,
            "overflowed": self.overflowed,
            "rounds": self.rounds,
            "mean_round_length": self.mean_round_length,
            "mean_round_reward": self.mean_round_reward,
            "mean_backlog": self.mean_backlog,
            "final_backlog": list(self.final_backlog),
        }


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    chan, pol, arr = ss.spawn(3)
    return (
        random.Random(int(chan.generate_state(1, np.uint64)[0])),
        random.Random(int(pol.generate_state(1, np.uint64)[0])),
        np.random.default_rng(arr),
    )


def _simulate(cfg: SimConfig) -> SimMetrics:
    params = cfg.params
    n_ch = len(params)
    chan_rng, pol_rng, arr_rng = _streams(cfg.seed)
    bank = ChannelBank(params, chan_rng)
    beliefs = BeliefTracker(params, prior=cfg.prior, debug=cfg.debug_beliefs)
    queued = cfg.mode == QUEUED
    policy = cfg.policy
    strict = cfg.assertions_on
    debug = cfg.debug_beliefs

    m = SimMetrics(n_channels=n_ch, delivered=[0] * n_ch, round_rewards=[0] * n_ch)
    delivered = m.delivered
    U = [0] * n_ch
    total_U = 0
    backlog_sum = 0
    last_used: list[Optional[int]] = [None] * n_ch
    cum_delivered = [0] * n_ch
    data_packets = dummy_packets = 0

    # channel and belief state, advanced in place
    p01 = [p.p01 for p in params]
    p11 = [p.p11 for p in params]
    pi = beliefs.pi
    decay = beliefs.decay
    b_val = beliefs.anchor_value
    b_slot = beliefs.anchor_slot
    ch_state = bank.states
    ch_slot = bank.slots
    crand = chan_rng.random

    lam_est = list(policy.lam) if isinstance(policy, QRRConfig) else None
    arrivals_seen = [0] * n_ch
    arrivals = cfg.arrivals
    block: list = []
    block_size = 65536
    block_pos = block_size

    heuristic = isinstance(policy, TransmitUntilNack)
    state = None
    state_key = ""
    if heuristic:
        order = policy.channels if policy.channels is not None else tuple(range(n_ch))
        state = UntilNackState(order, n_ch)
        state_key = str(state.phi)

    round_start = 0
    round_reward = [0] * n_ch
    visit_start = 0
    visit_acks = 0
    dwell_counts = m.dwell_counts
    dwell_seq = m.dwell_sequences
    record_dwells = cfg.record_dwells
    burn_in = cfg.burn_in
    stride = cfg.series_stride
    series = m.series
    horizon = cfg.horizon
    backlog_cap = cfg.backlog_cap
    feedback_when_empty = cfg.empty_queue_feedback
    trace = m.trace if cfg.trace else None
    FRESH = Phase.FRESH_SWITCH
    DATA = PacketKind.DATA

    t = 0
    while t < horizon:
        if state is None or state.finished:
            if state is not None:
                length = t - round_start
                m.rounds += 1
                m.round_slots += length
                m.round_slots_sq += length * length
                for i in range(n_ch):
                    m.round_rewards[i] += round_reward[i]
                    round_reward[i] = 0
                m.violations += state.violations
            if isinstance(policy, FixedRR):
                phi = policy.phi
            elif isinstance(policy, RandRRSpec):
                phi = policy.sample(pol_rng)
            else:
                if policy.rate_source == "empirical" and t >= policy.warmup:
                    lam_est = [a / t for a in arrivals_seen]
                phi, _ = qrr_select(U, lam_est, params)
            state = RoundRobinState.start(phi, params, last_used, strict=strict)
            state_key = str(phi)
            round_start = t

        n = state.channel
        if state.phase is FRESH:
            omega = pi[n] + (b_val[n] - pi[n]) * decay[n] ** (t - b_slot[n])
            if debug:
                beliefs.check_reachable(n, t)
            visit_start = t
            visit_acks = 0
        else:
            omega = 0.0
        action = state.act(omega, pol_rng)

        # true state of the served channel, drawn from its k-step law
        k = t - ch_slot[n]
        if k:
            if k == 1:
                q = p11[n] if ch_state[n] else p01[n]
            else:
                q = pi[n] + (ch_state[n] - pi[n]) * decay[n] ** k
            ch_state[n] = s = 1 if crand() < q else 0
            ch_slot[n] = t
        else:
            s = ch_state[n]
        ack = s == ON
        observed = True
        if action.packet_kind is DATA:
            data_packets += 1
            if ack:
                visit_acks += 1
                round_reward[n] += 1
            if queued:
                if U[n] > 0:
                    if ack:
                        U[n] -= 1
                        total_U -= 1
                        cum_delivered[n] += 1
                        if t >= burn_in:
                            delivered[n] += 1
                elif not feedback_when_empty:
                    observed = False
                    ack = False
            elif ack:
                cum_delivered[n] += 1
                if t >= burn_in:
                    delivered[n] += 1
        else:
            dummy_packets += 1
        if observed:
            b_val[n] = p11[n] if s else p01[n]
            b_slot[n] = t + 1
            if debug:
                beliefs.last_observed[n] = s
        last_used[n] = t

        if trace is not None:
            trace.append({
                "slot": t,
                "served": n,
                "packet_kind": action.packet_kind.value,
                "state": s,
                "feedback": int(ack) if observed else "",
                "omega": beliefs.vector(t + 1).tolist(),
            })

        if queued:
            if block_pos == block_size:
                block = arrivals.draw_block(arr_rng, block_size).tolist()
                block_pos = 0
            a = block[block_pos]
            block_pos += 1
            for i in range(n_ch):
                if a[i]:
                    U[i] += a[i]
                    total_U += a[i]
                    arrivals_seen[i] += a[i]
            backlog_sum += total_U

        visit_ended, _ = state.observe(ack)
        if visit_ended:
            length = t - visit_start + 1
            if strict and observed and visit_acks != length - 1:
                raise AssertionError(f"visit of length {length} carried {visit_acks} successful data packets")
            key = (state_key, n)
            c = dwell_counts.get(key)
            if c is None:
                c = dwell_counts[key] = Counter()
                if record_dwells:
                    dwell_seq[key] = []
            c[length] += 1
            if record_dwells:
                dwell_seq[key].append(length)

        t += 1
        if t % stride == 0:
            series.append((t, total_U, backlog_sum / t, *cum_delivered))
        if total_U > backlog_cap:
            m.overflowed = True
            break

    if not heuristic and state is not None and not state.finished:
        m.violations += state.violations
    m.data_packets = data_packets
    m.dummy_packets = dummy_packets
    m.backlog_sum = backlog_sum
    m.total_slots = t
    m.slots = max(t - burn_in, 0)
    m.final_backlog = list(U)
    return m


def run_saturated(cfg: SimConfig) -> SimMetrics:
    """Infinite backlog on every queue; every data transmission carries a packet."""
    if cfg.mode != SATURATED:
        raise ValueError("run_saturated needs mode = saturated")
    return _simulate(cfg)


def run_queued(cfg: SimConfig) -> SimMetrics:
    """Finite queues fed by arrivals; stops early (``overflowed``) past the backlog cap."""
    if cfg.mode != QUEUED:
        raise ValueError("run_queued needs mode = queued")
    return _simulate(cfg)


def run(cfg: SimConfig) -> SimMetrics:
    return run_queued(cfg) if cfg.mode == QUEUED else run_saturated(cfg)


def collect_dwell_histogram(metrics: SimMetrics) -> dict:
    """Empirical pmf of visit lengths per (activation vector, channel).

    Values are ``(lengths, counts, pmf)`` arrays sorted by length.
    """
    out = {}
    for key, counter in metrics.dwell_counts.items():
        lengths = np.array(sorted(counter))
        counts = np.array([counter[k] for k in lengths])
        out[key] = (lengths, counts, counts / counts.sum())
    return out


@dataclass(frozen=True)
class StabilityReport:
    mid_mean: float
    last_decile_mean: float
    relative_change: float
    slope: float
    slope_ci: tuple[float, float]

    @property
    def plateau(self) -> bool:
        return self.relative_change <= 0.10

    @property
    def slope_contains_zero(self) -> bool:
        return self.slope_ci[0] <= 0.0 <= self.slope_ci[1]

    @property
    def slope_positive(self) -> bool:
        return self.slope_ci[0] > 0.0

    @property
    def stable(self) -> bool:
        return self.plateau and self.slope_contains_zero


def stability_report(metrics: SimMetrics, batches: int = 20, confidence: float = 0.95) -> StabilityReport:
    """Operational strong-stability check on the total-backlog series.

    Compares the running mean of total backlog over the last tenth of the run
    with its value at mid-run, and fits a line to batch means of the backlog
    over the second half.
    """
    series = np.array([(row[0], row[1], row[2]) for row in metrics.series], dtype=float)
    if len(series) < 2 * batches:
        raise ValueError("series too short for the stability test")
    t, backlog, running = series[:, 0], series[:, 1], series[:, 2]
    end = t[-1]
    mid_idx = int(np.searchsorted(t, end / 2))
    mid = running[mid_idx]
    last = running[t >= 0.9 * end].mean()
    rel = abs(last - mid) / mid if mid > 0 else (0.0 if last == 0 else math.inf)

    half = backlog[mid_idx:]
    th = t[mid_idx:]
    chunks = np.array_split(np.arange(len(half)), batches)
    x = np.array([th[c].mean() for c in chunks])
    y = np.array([half[c].mean() for c in chunks])
    fit = stats.linregress(x, y)
    q = stats.t.ppf(0.5 + confidence / 2, batches - 2)
    ci = (fit.slope - q * fit.stderr, fit.slope + q * fit.stderr)
    return StabilityReport(float(mid), float(last), float(rel), float(fit.slope), (float(ci[0]), float(ci[1])))
