"""Oracle verdict suite: closed forms against independent derivations and simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import capacity
from .capacity import (
    RegionModel,
    alpha_to_beta,
    beta_to_alpha,
    eta_vector,
    geometric_gap,
    inner_boundary_point,
    outer_membership,
    proximity_gap,
    round_length,
    user_diversity,
    Membership,
    MixtureWeights,
    WeightKind,
)
from .channel import ChannelParams, k_step, symmetric
from .oracles import (
    Verdict,
    analytic_dwell_pmf,
    brute_force_qrr,
    coupled_binary_sampler,
    coupling_experiment,
    diversity_by_hypersimplex,
    fictitious_channel_sim,
    lag1_autocorrelation,
    random_dominated_schedule,
    real_vs_fictitious,
    recursive_beta_to_alpha,
    total_variation,
)
from .policies import ActivationVector, FixedRR, QRRConfig, RandRRSpec, TransmitUntilNack, all_activation_vectors, qrr_select
from .simulator import QUEUED, ArrivalConfig, SimConfig, collect_dwell_histogram, run, stability_report

REFERENCE = (0.2, 0.2)


@dataclass(frozen=True)
class SuiteOptions:
    p01: float = 0.2
    p10: float = 0.2
    seed: int = 0
    quick: bool = False

    @property
    def horizon(self) -> int:
        return 10**5 if self.quick else 10**6

    @property
    def slack(self) -> float:
        """Multiplier on simulation tolerances; shorter runs need looser bounds."""
        return 3.0 if self.quick else 1.0

    @property
    def trials(self) -> int:
        return 20 if self.quick else 100


def _check(name: str, statistic: float, bound: float, passed: bool, detail: str = "") -> Verdict:
    return Verdict(name, float(statistic), float(bound), bool(passed), detail)


def check_c_of_m(p: ChannelParams, c_fn: Callable) -> list[Verdict]:
    out = []
    worst = 0.0
    for m in range(1, 9):
        phi = ActivationVector.of(range(m), 8)
        via_dwell = float(eta_vector(phi, [p] * 8).sum())
        worst = max(worst, abs(c_fn(p, m) - via_dwell))
    out.append(_check("c_M-closed-form", worst, 1e-12, worst <= 1e-12, "c_M vs summed RR(M) throughput, M=1..8"))
    if (p.p01, p.p10) == REFERENCE:
        err = max(abs(c_fn(p, 1) - 0.5), abs(c_fn(p, 2) - 0.615))
        out.append(_check("c_M-reference-values", err, 5e-4, err <= 5e-4, "c_1 = 0.5, c_2 = 0.615"))
        gain = (c_fn(p, 2) - c_fn(p, 1)) / c_fn(p, 1)
        out.append(_check("memory-gain", abs(gain - 0.231), 1e-3, abs(gain - 0.231) <= 1e-3, f"gain {gain:.4%}"))
    return out


def check_channel_algebra(p: ChannelParams) -> list[Verdict]:
    err = 0.0
    for a in range(1, 20):
        for b in range(1, 20):
            err = max(err, float(np.abs(k_step(p, a + b) - k_step(p, a) @ k_step(p, b)).max()))
    tol = 1e-12
    mono = all(
        p.p11 + tol >= p.p11_k(k) >= p.p11_k(k + 1) - tol
        and p.p11_k(k + 1) + tol >= p.pi_on >= p.p01_k(k + 1) - tol
        and p.p01_k(k + 1) + tol >= p.p01_k(k) >= p.p01 - tol
        for k in range(1, 64)
    )
    return [
        _check("chapman-kolmogorov", err, 1e-12, err <= 1e-12),
        _check("monotone-k-step", float(not mono), 0.0, mono),
    ]


def check_rr_throughput(p: ChannelParams, c_fn: Callable, opt: SuiteOptions) -> list[Verdict]:
    m = run(SimConfig(symmetric(2, p.p01, p.p10), FixedRR.first(2, 2), horizon=opt.horizon, seed=opt.seed))
    target = c_fn(p, 2) / 2
    err = max(abs(t - target) for t in m.throughput)
    tol = 0.005 * opt.slack
    out = [_check("rr2-throughput", err, tol, err <= tol, f"throughput {m.throughput}, target {target:.5f}")]
    hist = collect_dwell_histogram(m)
    ref = analytic_dwell_pmf(p, 2, 40)
    tv = max(total_variation(lengths, counts, ref) for lengths, counts, _ in hist.values())
    out.append(_check("dwell-law-tv", tv, 0.01 * opt.slack, tv < 0.01 * opt.slack))
    ac = max(abs(lag1_autocorrelation(seq)) for seq in m.dwell_sequences.values())
    out.append(_check("dwell-lag1", ac, 0.01 * opt.slack, ac <= 0.01 * opt.slack))
    return out


def check_belief_floor(opt: SuiteOptions) -> list[Verdict]:
    rng = np.random.default_rng(opt.seed + 11)
    n = 6
    phis = all_activation_vectors(n)
    spec = RandRRSpec(dict(zip(phis, rng.dirichlet(np.ones(len(phis))))))
    params = [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.02, 0.45, n), rng.uniform(0.02, 0.45, n))]
    m = run(SimConfig(params, spec, horizon=opt.horizon, seed=opt.seed, assertions_on=False, record_dwells=False))
    return [_check("belief-floor", m.violations, 0, m.violations == 0, "RandRR over all activation vectors, N=6")]


def check_heuristic(p: ChannelParams, opt: SuiteOptions) -> list[Verdict]:
    if (p.p01, p.p10) != REFERENCE:
        return []
    m = run(SimConfig(symmetric(2, p.p01, p.p10), TransmitUntilNack(), horizon=opt.horizon, seed=opt.seed))
    err = abs(m.sum_throughput - 0.65)
    tol = 0.01 * opt.slack
    return [_check("until-nack-sum-throughput", err, tol, err <= tol, f"sum {m.sum_throughput:.4f}")]


def check_qrr(opt: SuiteOptions) -> list[Verdict]:
    rng = np.random.default_rng(opt.seed + 7)
    mismatches = 0
    instances = 100 if opt.quick else 1000
    for _ in range(instances):
        n = int(rng.integers(1, 13))
        params = [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.01, 0.45, n), rng.uniform(0.01, 0.45, n))]
        if rng.random() < 0.3:
            params = [params[0]] * n
        U = rng.integers(0, 20, n).astype(float)
        lam = rng.uniform(0, 0.3, n)
        phi, f = qrr_select(U, lam, params)
        subset, g = brute_force_qrr(U, lam, params)
        if phi.active != subset or abs(f - g) > 1e-9 * (1 + abs(g)):
            mismatches += 1
    return [_check("qrr-vs-brute-force", mismatches, 0, mismatches == 0, f"{instances} instances, N<=12")]


def check_qrr_stability(p: ChannelParams, c_fn: Callable, opt: SuiteOptions) -> list[Verdict]:
    params = symmetric(2, p.p01, p.p10)
    inside = 0.9 * c_fn(p, 2) / 2
    out = []
    lam = (inside, inside)
    m = run(SimConfig(params, QRRConfig(lam), horizon=opt.horizon, seed=opt.seed, mode=QUEUED, arrivals=ArrivalConfig(lam), record_dwells=False))
    rep = stability_report(m)
    out.append(_check("qrr-stable-inside", rep.relative_change, 0.10, rep.stable and not m.overflowed, f"slope CI {rep.slope_ci}"))
    over = 1.12 * p.c_inf / 2
    lam = (over, over)
    m = run(SimConfig(params, QRRConfig(lam), horizon=opt.horizon, seed=opt.seed, mode=QUEUED, arrivals=ArrivalConfig(lam), record_dwells=False))
    rep = stability_report(m)
    out.append(_check("qrr-unstable-outside", rep.slope_ci[0], 0.0, rep.slope_positive or m.overflowed, f"rates {lam}"))
    return out


def weight_instances(count: int, rng: np.random.Generator):
    """Random (params, beta) pairs over subsets of up to 64 activation vectors on 7 channels."""
    phis = all_activation_vectors(7)
    for _ in range(count):
        params = [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.02, 0.45, 7), rng.uniform(0.02, 0.45, 7))]
        k = int(rng.integers(1, 65))
        chosen = [phis[i] for i in rng.choice(len(phis), size=k, replace=False)]
        beta = rng.dirichlet(np.ones(k))
        if k > 2 and rng.random() < 0.3:
            beta[rng.integers(k)] = 0.0
            beta /= beta.sum()
        yield params, MixtureWeights(dict(zip(chosen, beta)), WeightKind.TIME_FRACTION)


def check_weights(opt: SuiteOptions) -> list[Verdict]:
    """Closed-form conversion against the fixed-point system and the recursive construction."""
    rng = np.random.default_rng(opt.seed + 3)
    fixed_point = recursive = round_trip = 0.0
    for params, beta in weight_instances(100, rng):
        alpha = beta_to_alpha(beta, params)
        phis = list(beta.weights)
        chi = np.array([round_length(phi, params) for phi in phis])
        a = np.array([alpha.weights[phi] for phi in phis])
        b = np.array([beta.weights[phi] for phi in phis])
        fixed_point = max(fixed_point, float(np.abs(a * chi / np.dot(a, chi) - b).max()))
        recursive = max(recursive, float(np.abs(recursive_beta_to_alpha(b, chi) - a).max()))
        back = alpha_to_beta(alpha, params)
        round_trip = max(round_trip, max(abs(back.weights[phi] - beta.weights[phi]) for phi in phis))
    return [
        _check("weights-fixed-point", fixed_point, 1e-12, fixed_point <= 1e-12),
        _check("weights-recursive", recursive, 1e-12, recursive <= 1e-12, "100 instances, K<=64"),
        _check("weights-round-trip", round_trip, 1e-12, round_trip <= 1e-12),
    ]


def check_coupling(opt: SuiteOptions) -> list[Verdict]:
    rng = np.random.default_rng(opt.seed + 5)
    failures = 0
    worst = -math.inf
    for _ in range(opt.trials):
        a, b = rng.uniform(0.02, 0.6, 2)
        if a + b >= 0.98:
            a, b = a / 2, b / 2
        p = ChannelParams(float(a), float(b))
        _, sched = random_dominated_schedule(p, rng)
        r = coupling_experiment(p, sched, opt.horizon, rng)
        worst = max(worst, (r.pi_y - r.pi_x) / r.sigma)
        failures += not r.dominated
    return [_check("coupling-dominance", failures, 0, failures == 0, f"{opt.trials} trials, worst z {worst:.2f}")]


def check_bandit(opt: SuiteOptions) -> list[Verdict]:
    rng = np.random.default_rng(opt.seed + 9)
    failures = 0
    for _ in range(opt.trials):
        n = int(rng.integers(1, 6))
        params = [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.02, 0.45, n), rng.uniform(0.02, 0.45, n))]
        cap = max(p.c_inf for p in params)
        kind = rng.integers(3)
        if kind == 0:
            sel = rng.integers(0, n, opt.horizon)
        elif kind == 1:
            sel = np.arange(opt.horizon) % n
        else:
            sel = np.repeat(rng.integers(0, n, opt.horizon // 50 + 1), 50)[: opt.horizon]
        r = fictitious_channel_sim(params, sel, opt.horizon, rng)
        failures += r.sum_throughput > cap + 3.0 * r.sigma
    out = [_check("bandit-bound", failures, 0, failures == 0, f"{opt.trials} selection sequences")]
    best = fictitious_channel_sim(symmetric(2, 0.2, 0.2), "best", opt.horizon, rng)
    err = abs(best.sum_throughput - 0.2 / 0.28)
    out.append(_check("bandit-best-arm", err, 0.005 * opt.slack, err <= 0.005 * opt.slack))
    params = [ChannelParams(0.1, 0.3), ChannelParams(0.3, 0.1)]
    sel = rng.integers(0, 2, opt.horizon)
    rv = real_vs_fictitious(params, sel, opt.horizon, rng)
    out.append(_check("real-vs-fictitious", float(np.max(rv.real - rv.fictitious)), 0.0, rv.dominated))
    return out


def check_binary_sampler(opt: SuiteOptions) -> list[Verdict]:
    rng = np.random.default_rng(opt.seed + 13)
    n = 10**5 if not opt.quick else 2 * 10**4
    seq, hat = coupled_binary_sampler(lambda h: 0.1 if h and h[-1] else 0.25, 0.3, n, rng)
    err = abs(hat.mean() - 0.3)
    dominated = bool(np.all(hat >= seq))
    ac = abs(lag1_autocorrelation(hat))
    tol = 0.01 * opt.slack
    return [
        _check("binary-coupling-dominance", float(not dominated), 0.0, dominated),
        _check("binary-coupling-marginal", err, tol, err <= tol),
        _check("binary-coupling-lag1", ac, tol, ac <= tol),
    ]


def check_region(p: ChannelParams, c_fn: Callable) -> list[Verdict]:
    rng = np.random.default_rng(1)
    outside = 0
    for n in range(1, 9):
        for _ in range(3):
            params = [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.02, 0.45, n), rng.uniform(0.02, 0.45, n))]
            for phi in all_activation_vectors(n):
                if outer_membership(eta_vector(phi, params), params) is Membership.OUTSIDE:
                    outside += 1
    gap_ok = all(p.c_inf - c_fn(p, m) <= geometric_gap(p, m) + 1e-12 for m in range(1, 65))
    params = symmetric(2, p.p01, p.p10)
    lam_int = inner_boundary_point(RegionModel.build(params), (1, 1))
    prox = proximity_gap((1, 1), lam_int, p)
    out = [
        _check("vertices-inside-outer", outside, 0, outside == 0, "N<=8 random parameter grid"),
        _check("geometric-gap", float(not gap_ok), 0.0, gap_ok, "M=1..64"),
    ]
    if (p.p01, p.p10) == REFERENCE:
        out.append(_check("proximity-bound", abs(prox - 0.2571), 5e-4, abs(prox - 0.2571) <= 5e-4, f"bound {prox:.5f}"))
    div_bad = 0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        v = rng.integers(0, 5, n).astype(float)
        if not v.any():
            v[0] = 1
        div_bad += user_diversity(v) != diversity_by_hypersimplex(v)
    out.append(_check("user-diversity", div_bad, 0, div_bad == 0, "LP vs hypersimplex criterion"))
    return out


def run_suite(opt: Optional[SuiteOptions] = None, c_of_M: Callable = capacity.c_of_M) -> list[Verdict]:
    """Every check, in a fixed order. ``c_of_M`` is injectable so a broken closed form can be exercised."""
    opt = opt or SuiteOptions()
    p = ChannelParams(opt.p01, opt.p10)
    verdicts: list[Verdict] = []
    verdicts += check_c_of_m(p, c_of_M)
    verdicts += check_channel_algebra(p)
    verdicts += check_rr_throughput(p, c_of_M, opt)
    verdicts += check_belief_floor(opt)
    verdicts += check_heuristic(p, opt)
    verdicts += check_qrr(opt)
    verdicts += check_qrr_stability(p, c_of_M, opt)
    verdicts += check_weights(opt)
    verdicts += check_coupling(opt)
    verdicts += check_bandit(opt)
    verdicts += check_binary_sampler(opt)
    verdicts += check_region(p, c_of_M)
    return verdicts
