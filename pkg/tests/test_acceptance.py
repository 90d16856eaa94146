"""The ten acceptance criteria, each at its stated tolerance.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from memsched.capacity import (
    RegionModel,
    beta_to_alpha,
    c_of_M,
    eta_vector,
    geometric_gap,
    inner_boundary_point,
    memory_gain,
    outer_membership,
    proximity_gap,
    round_length,
    Membership,
)
from memsched.channel import ChannelParams, symmetric
from memsched.oracles import (
    analytic_dwell_pmf,
    brute_force_qrr,
    coupling_experiment,
    fictitious_channel_sim,
    lag1_autocorrelation,
    random_dominated_schedule,
    recursive_beta_to_alpha,
    total_variation,
)
from memsched.policies import FixedRR, QRRConfig, RandRRSpec, TransmitUntilNack, all_activation_vectors, qrr_select
from memsched.simulator import QUEUED, ArrivalConfig, SimConfig, run, stability_report
from memsched.verify import weight_instances

P = ChannelParams(0.2, 0.2)
SYM2 = symmetric(2, 0.2, 0.2)


def report(number: int, passed: bool, text: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def random_params(rng, n):
    return [ChannelParams(float(a), float(b)) for a, b in zip(rng.uniform(0.02, 0.45, n), rng.uniform(0.02, 0.45, n))]


@pytest.fixture(scope="module")
def rr2_run():
    start = time.perf_counter()
    m = run(SimConfig(SYM2, FixedRR.first(2, 2), horizon=10**6, seed=2024))
    return m, time.perf_counter() - start


def test_criterion_1_c_of_m():
    c1, c2 = c_of_M(P, 1), c_of_M(P, 2)
    ok = abs(c1 - 0.5) <= 5e-4 and abs(c2 - 0.615) <= 5e-4
    report(1, ok, f"c_1 = {c1:.5f} (0.5), c_2 = {c2:.5f} (0.615), tolerance 5e-4")


def test_criterion_2_rr2_throughput(rr2_run):
    m, elapsed = rr2_run
    target = c_of_M(P, 2) / 2
    err = max(abs(t - target) for t in m.throughput)
    ok = err <= 0.005 and elapsed < 5.0 and m.violations == 0
    report(2, ok, f"RR(2) throughput {[round(t, 5) for t in m.throughput]} vs {target:.5f}, max error {err:.5f} <= 0.005, {elapsed:.2f} s < 5 s")


def test_criterion_3_dwell_law(rr2_run):
    m, _ = rr2_run
    ref = analytic_dwell_pmf(P, 2, 60)
    worst_tv, worst_ac = 0.0, 0.0
    for key, seq in m.dwell_sequences.items():
        assert len(seq) >= 10**5, f"only {len(seq)} visits for {key}"
        visits = np.array(seq[: 10**5])
        lengths, counts = np.unique(visits, return_counts=True)
        worst_tv = max(worst_tv, total_variation(lengths, counts, ref))
        worst_ac = max(worst_ac, abs(lag1_autocorrelation(visits)))
    ok = worst_tv < 0.01 and worst_ac <= 0.01
    report(3, ok, f"dwell TV {worst_tv:.4f} < 0.01, lag-1 autocorrelation {worst_ac:.4f} within 0.01 (10^5 visits per channel)")


def test_criterion_4_belief_floor():
    rng = np.random.default_rng(6)
    phis = all_activation_vectors(6)
    spec = RandRRSpec(dict(zip(phis, rng.dirichlet(np.ones(len(phis))))))
    params = random_params(rng, 6)
    m = run(SimConfig(params, spec, horizon=10**6, seed=6, assertions_on=False, record_dwells=False))
    switches = m.rounds
    report(4, m.violations == 0, f"{m.violations} belief-floor violations over 10^6 slots of RandRR, N=6, {switches} rounds")


def test_criterion_5_two_user_example():
    m = run(SimConfig(SYM2, TransmitUntilNack(), horizon=10**6, seed=5))
    gain = memory_gain(P, 2)
    ok = abs(m.sum_throughput - 0.65) <= 0.01 and abs(gain - 0.231) <= 0.001
    report(5, ok, f"until-NACK sum throughput {m.sum_throughput:.4f} (0.65 +- 0.01), memory gain {gain:.2%} (23.1% +- 0.1%)")


def test_criterion_6_qrr_stability():
    start = time.perf_counter()
    inside = 0.9 * c_of_M(P, 2) / 2
    lam = (inside, inside)
    m_in = run(SimConfig(SYM2, QRRConfig(lam), horizon=10**6, seed=61, mode=QUEUED, arrivals=ArrivalConfig(lam), record_dwells=False))
    rep_in = stability_report(m_in)
    lam = (0.40, 0.40)
    m_out = run(SimConfig(SYM2, QRRConfig(lam), horizon=10**6, seed=62, mode=QUEUED, arrivals=ArrivalConfig(lam), record_dwells=False))
    rep_out = stability_report(m_out)
    elapsed = time.perf_counter() - start
    ok = rep_in.plateau and rep_in.slope_contains_zero and not m_in.overflowed and rep_out.slope_positive and elapsed < 30
    report(
        6,
        ok,
        f"inside: plateau change {rep_in.relative_change:.3f} <= 0.10, slope CI ({rep_in.slope_ci[0]:.2e}, {rep_in.slope_ci[1]:.2e}) contains 0; "
        f"outside: slope CI lower {rep_out.slope_ci[0]:.3f} > 0; {elapsed:.1f} s < 30 s",
    )


def test_criterion_7_qrr_brute_force():
    rng = np.random.default_rng(7)
    mismatches = 0
    for i in range(1000):
        n = int(rng.integers(1, 13))
        params = random_params(rng, n)
        if i % 3 == 0:
            params = [params[0]] * n  # symmetric channels create ties
        U = rng.integers(0, 15, n).astype(float)
        if i % 50 == 0:
            U[:] = 0
        lam = rng.uniform(0, 0.3, n)
        phi, f = qrr_select(U, lam, params)
        subset, g = brute_force_qrr(U, lam, params)
        mismatches += phi.active != subset or abs(f - g) > 1e-9 * (1 + abs(g))
    report(7, mismatches == 0, f"{mismatches} disagreements with exhaustive argmax on 1000 instances, N <= 12")


def test_criterion_8_weight_conversion():
    rng = np.random.default_rng(8)
    fixed_point = recursive = 0.0
    for params, beta in weight_instances(100, rng):
        alpha = beta_to_alpha(beta, params)
        phis = list(beta.weights)
        chi = np.array([round_length(phi, params) for phi in phis])
        a = np.array([alpha.weights[phi] for phi in phis])
        b = np.array([beta.weights[phi] for phi in phis])
        fixed_point = max(fixed_point, float(np.abs(a * chi / np.dot(a, chi) - b).max()))
        recursive = max(recursive, float(np.abs(recursive_beta_to_alpha(b, chi) - a).max()))
    ok = fixed_point <= 1e-12 and recursive <= 1e-12
    report(8, ok, f"fixed-point residual {fixed_point:.1e}, recursive construction gap {recursive:.1e} (both <= 1e-12, 100 instances, K <= 64)")


def test_criterion_9_coupling_and_bandit():
    rng = np.random.default_rng(9)
    coupling_ok = 0
    for _ in range(100):
        a, b = rng.uniform(0.02, 0.48, 2)
        p = ChannelParams(float(a), float(b))
        _, sched = random_dominated_schedule(p, rng)
        coupling_ok += coupling_experiment(p, sched, 10**6, rng).dominated
    bandit_ok = 0
    for i in range(100):
        n = int(rng.integers(1, 6))
        params = random_params(rng, n)
        cap = max(p.c_inf for p in params)
        if i % 3 == 0:
            sel = rng.integers(0, n, 10**6)
        elif i % 3 == 1:
            sel = np.arange(10**6) % n
        else:
            sel = np.repeat(rng.integers(0, n, 10**6 // 40), 40)
        r = fictitious_channel_sim(params, sel, 10**6, rng)
        bandit_ok += r.sum_throughput <= cap + 3 * r.sigma
    report(9, coupling_ok == 100 and bandit_ok == 100, f"coupling {coupling_ok}/100, bandit bound {bandit_ok}/100 trials at 10^6 steps")


def test_criterion_10_region_geometry():
    rng = np.random.default_rng(10)
    outside = vertices = 0
    for n in range(1, 9):
        grid = [symmetric(n, 0.2, 0.2), symmetric(n, 0.05, 0.1)] + [random_params(rng, n) for _ in range(3)]
        for params in grid:
            for phi in all_activation_vectors(n):
                vertices += 1
                outside += outer_membership(eta_vector(phi, params), params) is Membership.OUTSIDE
    gap_ok = all(P.c_inf - c_of_M(P, m) <= geometric_gap(P, m) + 1e-15 for m in range(1, 65))
    lam_int = inner_boundary_point(RegionModel.build(SYM2), (1, 1))
    prox = proximity_gap((1, 1), lam_int, P)
    ok = outside == 0 and gap_ok and math.isclose(prox, 0.2571, abs_tol=1e-4)
    report(10, ok, f"{outside}/{vertices} vertices outside the outer bound, geometric gap holds for M=1..64: {gap_ok}, proximity bound {prox:.4f} (0.2571)")
