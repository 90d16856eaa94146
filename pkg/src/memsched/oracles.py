"""Independent reference implementations used to check the closed forms and the simulator."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .channel import ChannelParams, markov_path

DOMINANCE_TOL = 1e-12


@dataclass(frozen=True)
class Verdict:
    experiment: str
    statistic: float
    bound: float
    passed: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "statistic": self.statistic,
            "bound": self.bound,
            "passed": bool(self.passed),
            "detail": self.detail,
        }


def batch_sigma(x: np.ndarray, batches: int = 50) -> float:
    """Standard error of the mean of a correlated series via batch means."""
    x = np.asarray(x, dtype=float)
    if len(x) < 2 * batches:
        return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.inf
    usable = len(x) - len(x) % batches
    means = x[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


# --- dwell law ---------------------------------------------------------------


@dataclass(frozen=True)
class DwellPmf:
    pmf: np.ndarray  # pmf[j - 1] = P(L = j), j = 1..j_max
    tail: float  # P(L > j_max)
    mean: float


def analytic_dwell_pmf(params: ChannelParams, m: int, j_max: int) -> DwellPmf:
    if j_max < 2:
        raise ValueError("j_max must be >= 2")
    x = params.p01 + params.p10
    q = params.p01 * (1.0 - (1.0 - x) ** m) / x  # P01^(m)
    j = np.arange(2, j_max + 1)
    body = q * params.p11 ** (j - 2) * params.p10
    pmf = np.concatenate(([1.0 - q], body))
    tail = q * params.p11 ** (j_max - 1)
    return DwellPmf(pmf, float(tail), 1.0 + q / params.p10)


def total_variation(lengths: Sequence[int], counts: Sequence[int], ref: DwellPmf) -> float:
    """TV distance between an empirical histogram and the analytic law (tail lumped)."""
    j_max = len(ref.pmf)
    emp = np.zeros(j_max + 1)
    total = float(np.sum(counts))
    for length, c in zip(lengths, counts):
        emp[min(length, j_max + 1) - 1] += c / total
    theo = np.append(ref.pmf, ref.tail)
    return 0.5 * float(np.abs(emp - theo).sum())


def lag1_autocorrelation(seq: Sequence[float]) -> float:
    a = np.asarray(seq, dtype=float)
    a = a - a.mean()
    denom = float(np.dot(a, a))
    return float(np.dot(a[:-1], a[1:]) / denom) if denom > 0 else 0.0


# --- two-chain coupling -----------------------------------------------------


@dataclass(frozen=True)
class CouplingResult:
    pi_y: float
    pi_x: float
    sigma: float

    @property
    def dominated(self) -> bool:
        return self.pi_y <= self.pi_x + 3.0 * self.sigma


Schedule = Union[Callable[[np.ndarray], tuple], tuple]


def _evaluate_schedule(schedule: Schedule, horizon: int):
    if callable(schedule):
        q01, q11 = schedule(np.arange(horizon))
    else:
        q01, q11 = schedule
    q01 = np.broadcast_to(np.asarray(q01, dtype=float), (horizon,))
    q11 = np.broadcast_to(np.asarray(q11, dtype=float), (horizon,))
    return q01, q11


def coupling_experiment(
    p: ChannelParams,
    schedule: Schedule,
    horizon: int,
    rng: np.random.Generator,
    y0: int = 0,
) -> CouplingResult:
    """Run Y(t) under time-varying Q(t) dominated by P and report its ON fraction.

    ``schedule`` is either ``(q01, q11)`` (scalars or length-``horizon`` arrays)
    or a callable mapping slot indices to such a pair.
    """
    q01, q11 = _evaluate_schedule(schedule, horizon)
    if np.any(q01 < -DOMINANCE_TOL) or np.any(q11 < -DOMINANCE_TOL) or np.any(q01 > 1) or np.any(q11 > 1):
        raise ValueError("schedule entries must be probabilities")
    if np.any(q01 > p.p01 + DOMINANCE_TOL) or np.any(q11 > p.p11 + DOMINANCE_TOL):
        raise ValueError("dominance violated: need Q01(t) <= P01 and Q11(t) <= P11 for all t")
    y = markov_path(rng.random(horizon), q01, q11, y0)
    return CouplingResult(float(y.mean()), p.p01 / (p.p01 + p.p10), batch_sigma(y))


def random_dominated_schedule(p: ChannelParams, rng: np.random.Generator, kind: Optional[str] = None):
    """A random member of a family of schedules with Q(t) <= P entrywise."""
    kinds = ("constant", "alternating", "iid", "blocks", "periodic", "near")
    kind = kind or kinds[int(rng.integers(len(kinds)))]
    if kind == "constant":
        a, b = rng.uniform(0, p.p01), rng.uniform(0, p.p11)
        return kind, (a, b)
    if kind == "alternating":
        a = rng.uniform(0, p.p01, 2)
        b = rng.uniform(0, p.p11, 2)
        return kind, lambda t: (a[t % 2], b[t % 2])
    if kind == "iid":
        seed = int(rng.integers(2**63))
        def sched(t):
            g = np.random.default_rng(seed)
            return g.uniform(0, p.p01, len(t)), g.uniform(0, p.p11, len(t))
        return kind, sched
    if kind == "blocks":
        size = int(rng.integers(10, 1000))
        levels = int(rng.integers(2, 8))
        a = rng.uniform(0, p.p01, levels)
        b = rng.uniform(0, p.p11, levels)
        return kind, lambda t: (a[(t // size) % levels], b[(t // size) % levels])
    if kind == "near":
        seed = int(rng.integers(2**63))
        def sched(t):
            g = np.random.default_rng(seed)
            return p.p01 * g.uniform(0.9, 1.0, len(t)), p.p11 * g.uniform(0.97, 1.0, len(t))
        return kind, sched
    if kind != "periodic":
        raise ValueError(f"unknown schedule kind {kind!r}")
    period = float(rng.uniform(5, 500))
    return kind, lambda t: (
        p.p01 * 0.5 * (1 + np.sin(2 * np.pi * t / period)),
        p.p11 * 0.5 * (1 + np.cos(2 * np.pi * t / period)),
    )


# --- coupled binary sequences ----------------------------------------------


def coupled_binary_sampler(
    conditional_p: Callable[[Sequence[int]], float],
    p_cap: float,
    n: int,
    rng,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw I_1..I_n from ``conditional_p(history)`` and an augmented copy Î >= I.

    When I_k = 0 the copy is raised to 1 with probability
    ``(p_cap - p) / (1 - p)``, which makes Î i.i.d. Bernoulli(p_cap).
    """
    if not 0.0 <= p_cap < 1.0:
        raise ValueError("p_cap must lie in [0, 1)")
    seq: list[int] = []
    hat = np.empty(n, dtype=np.int8)
    for k in range(n):
        p = conditional_p(seq)
        if p > p_cap + DOMINANCE_TOL or p < 0.0:
            raise ValueError(f"conditional probability {p} exceeds the cap {p_cap}")
        i = 1 if rng.random() < p else 0
        if i:
            h = 1
        else:
            h = 1 if rng.random() < (p_cap - p) / (1.0 - p) else 0
        seq.append(i)
        hat[k] = h
    out = np.array(seq, dtype=np.int8)
    if np.any(hat < out):
        raise AssertionError("augmented sequence fell below the original")
    return out, hat


# --- fictitious two-mode channels ------------------------------------------


@dataclass(frozen=True)
class FictitiousResult:
    throughput: np.ndarray
    sum_throughput: float
    sigma: float


def _selection_array(params, selection, horizon: int) -> np.ndarray:
    if isinstance(selection, str):
        if selection != "best":
            raise ValueError(f"unknown selection {selection!r}")
        best = int(np.argmax([p.c_inf for p in params]))
        return np.full(horizon, best, dtype=np.int64)
    sel = np.asarray(selection, dtype=np.int64)
    if sel.shape != (horizon,):
        raise ValueError("selection sequence length differs from horizon")
    if sel.min() < 0 or sel.max() >= len(params):
        raise ValueError("selection refers to an unknown channel")
    return sel


def fictitious_channel_sim(
    params: Sequence[ChannelParams],
    selection,
    horizon: int,
    rng: np.random.Generator,
    uniforms: Optional[np.ndarray] = None,
) -> FictitiousResult:
    """Serve fictitious channels along ``selection`` (a channel index per slot, or "best").

    A served channel in mode M1 succeeds with probability p11, in mode M2 with
    probability pi_on; success moves it to M1, failure to M2. Idle channels keep
    their mode. Every channel starts in M2.
    """
    sel = _selection_array(params, selection, horizon)
    u = rng.random(horizon) if uniforms is None else np.asarray(uniforms)
    reward = np.zeros(horizon, dtype=np.int8)
    for n, p in enumerate(params):
        slots = np.flatnonzero(sel == n)
        if len(slots):
            reward[slots] = markov_path(u[slots], p.pi_on, p.p11, 0)
    per = np.bincount(sel, weights=reward, minlength=len(params)) / horizon
    return FictitiousResult(per, float(reward.mean()), batch_sigma(reward))


@dataclass(frozen=True)
class RealVsFictitious:
    real: np.ndarray
    fictitious: np.ndarray
    sigma: np.ndarray  # standard error of the per-channel difference

    @property
    def dominated(self) -> bool:
        return bool(np.all(self.fictitious >= self.real - 3.0 * self.sigma))


def real_vs_fictitious(
    params: Sequence[ChannelParams],
    selection,
    horizon: int,
    rng: np.random.Generator,
) -> RealVsFictitious:
    """Drive real and fictitious channels with the same selections and uniforms.

    On the real channel a served slot succeeds iff the uniform falls below the
    current belief, which has the law of the true ON event given the feedback
    history.
    """
    sel = _selection_array(params, selection, horizon)
    u = rng.random(horizon)
    fict = np.zeros(horizon, dtype=np.int8)
    real = np.zeros(horizon, dtype=np.int8)
    for n, p in enumerate(params):
        slots = np.flatnonzero(sel == n)
        if not len(slots):
            continue
        fict[slots] = markov_path(u[slots], p.pi_on, p.p11, 0)
        gap = np.diff(slots)
        decay = (1.0 - p.x) ** gap
        pi = p.pi_on
        q01 = np.concatenate(([pi], pi + (p.p01 - pi) * decay))
        q11 = np.concatenate(([pi], pi + (p.p11 - pi) * decay))
        real[slots] = markov_path(u[slots], q01, q11, 0)
    n_ch = len(params)
    r = np.bincount(sel, weights=real, minlength=n_ch) / horizon
    f = np.bincount(sel, weights=fict, minlength=n_ch) / horizon
    sig = np.array([batch_sigma(np.where(sel == n, fict - real, 0)) for n in range(n_ch)])
    return RealVsFictitious(r, f, sig)


# --- mixture weights ---------------------------------------------------------


def recursive_beta_to_alpha(beta: Sequence[float], chi: Sequence[float]) -> np.ndarray:
    """Inductive construction of selection weights from time fractions.

    Zero entries of beta get zero alpha. On the positive support the first
    weight is fixed from the solution gamma of the reduced problem on the
    remaining entries, and the others are (1 - alpha_1) gamma_k.
    """
    beta = np.asarray(beta, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if beta.shape != chi.shape or beta.ndim != 1:
        raise ValueError("beta and chi must be vectors of equal length")
    alpha = np.zeros_like(beta)
    support = np.flatnonzero(beta > 0)
    if not len(support):
        raise ValueError("beta has no positive entry")
    alpha[support] = _recurse(beta[support] / beta[support].sum(), chi[support])
    return alpha


def _recurse(beta: np.ndarray, chi: np.ndarray) -> np.ndarray:
    k = len(beta)
    if k == 1:
        return np.ones(1)
    if k == 2:
        a1 = chi[1] * beta[0] / (chi[0] * beta[1] + chi[1] * beta[0])
        return np.array([a1, 1.0 - a1])
    gamma = _recurse(beta[1:] / beta[1:].sum(), chi[1:])
    s = float(np.dot(gamma, chi[1:]))
    b1 = beta[0]
    a1 = b1 * s / (chi[0] * (1.0 - b1) + b1 * s)
    return np.concatenate(([a1], (1.0 - a1) * gamma))


# --- QRR brute force ---------------------------------------------------------


def brute_force_qrr(U: Sequence[float], lam: Sequence[float], params: Sequence[ChannelParams]):
    """Exhaustive argmax of the round drift score over every nonempty channel subset.

    Ties within 1e-9 relative are resolved towards fewer active channels, then
    the lexicographically smallest index set. Returns ``(active_indices, score)``.
    """
    n = len(params)
    w = float(np.dot(U, lam))
    cands = []
    for m in range(1, n + 1):
        ratios = []
        for p in params:
            g = (1.0 - p.p01 - p.p10) ** m
            ratios.append(p.p01 * (1.0 - g) / (p.p01 + p.p10) / p.p10)
        for subset in itertools.combinations(range(n), m):
            f = sum(U[i] * ratios[i] - (1.0 + ratios[i]) * w for i in subset)
            cands.append((f, m, subset))
    f_max = max(c[0] for c in cands)
    tol = 1e-9 * (1.0 + abs(f_max))
    near = [c for c in cands if c[0] >= f_max - tol]
    f, _, subset = min(near, key=lambda c: (c[1], c[2]))
    return subset, f


# --- user diversity ---------------------------------------------------------


def diversity_by_hypersimplex(v: Sequence[float]) -> int:
    """Largest d with d * max(v) <= sum(v); the cone test for the d-subset vectors."""
    v = np.asarray(v, dtype=float)
    top, total = float(v.max()), float(v.sum())
    d = int(math.floor(total / top + 1e-9))
    return max(1, min(d, len(v)))
