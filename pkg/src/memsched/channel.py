"""Markov ON/OFF channels: parameters, k-step algebra, beliefs and sampling."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

PROB_TOL = 1e-12

OFF = 0
ON = 1


class Mode(enum.Enum):
    """Aggregated belief mode: M1 after an observed ON, M2 after an observed OFF."""

    M1 = "M1"
    M2 = "M2"


@dataclass(frozen=True)
class ChannelParams:
    """Transition probabilities of one positively correlated ON/OFF chain.

    ``check=False`` skips the ergodicity/correlation invariants; it exists only
    so degenerate chains can drive sampler tests.
    """

    p01: float
    p10: float
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (0.0 <= self.p01 <= 1.0 and 0.0 <= self.p10 <= 1.0):
            raise ValueError(f"transition probabilities must lie in [0, 1], got p01={self.p01}, p10={self.p10}")
        if not self.check:
            return
        if self.p01 <= 0.0:
            raise ValueError(f"p01 must be > 0 (ergodic chain), got {self.p01}")
        if self.p10 <= 0.0:
            raise ValueError(f"p10 must be > 0 (no constantly-ON channel), got {self.p10}")
        if self.p01 + self.p10 >= 1.0:
            raise ValueError(
                f"p01 + p10 must be < 1 (positive correlation), got {self.p01 + self.p10:.6g}"
            )

    @property
    def p00(self) -> float:
        return 1.0 - self.p01

    @property
    def p11(self) -> float:
        return 1.0 - self.p10

    @property
    def x(self) -> float:
        return self.p01 + self.p10

    @property
    def pi_on(self) -> float:
        return self.p01 / self.x

    @property
    def c_inf(self) -> float:
        """Best single-arm reward rate of the bounding two-mode chain."""
        return self.p01 / (self.x * self.p10 + self.p01)

    def matrix(self) -> np.ndarray:
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    def p_on_after(self, state: int, k: int) -> float:
        """P(ON at t+k | state at t) from the closed form; k >= 0."""
        pi = self.pi_on
        return pi + (state - pi) * (1.0 - self.x) ** k

    def p01_k(self, k: int) -> float:
        return self.p01 * (1.0 - (1.0 - self.x) ** k) / self.x

    def p11_k(self, k: int) -> float:
        return (self.p01 + self.p10 * (1.0 - self.x) ** k) / self.x


def symmetric(n: int, p01: float, p10: float) -> list[ChannelParams]:
    return [ChannelParams(p01, p10) for _ in range(n)]


def k_step(params: ChannelParams, k: int) -> np.ndarray:
    """Closed-form k-step transition matrix, rows indexed OFF, ON."""
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    x = params.x
    g = (1.0 - x) ** k
    p01, p10 = params.p01, params.p10
    return np.array(
        [
            [(p10 + p01 * g) / x, p01 * (1.0 - g) / x],
            [p10 * (1.0 - g) / x, (p01 + p10 * g) / x],
        ]
    )


def idle_belief(omega: float, params: ChannelParams) -> float:
    return omega * params.p11 + (1.0 - omega) * params.p01


def belief_update(
    omega: Sequence[float],
    served: Optional[int],
    observed: Optional[int],
    params: Sequence[ChannelParams],
) -> np.ndarray:
    """One slot of the information-state recursion.

    The served channel resets to ``p11`` on ACK (ON) or ``p01`` on NACK (OFF);
    every other channel drifts by one step of its own chain.
    """
    if (served is None) != (observed is None):
        raise ValueError("observed must be given exactly when a channel is served")
    out = np.empty(len(omega))
    for n, (w, p) in enumerate(zip(omega, params)):
        if n == served:
            out[n] = p.p11 if observed else p.p01
        else:
            out[n] = idle_belief(w, p)
    return out


def mode_of(omega_n: float, params: ChannelParams) -> Mode:
    if omega_n < params.p01 - PROB_TOL or omega_n > params.p11 + PROB_TOL:
        raise ValueError(
            f"belief {omega_n} outside reachable range [{params.p01}, {params.p11}]"
        )
    return Mode.M1 if omega_n > params.pi_on else Mode.M2


def sample_step(states: Sequence[int], params: Sequence[ChannelParams], rng) -> np.ndarray:
    """Advance every channel one slot; draws one uniform per channel."""
    s = np.asarray(states, dtype=np.int8)
    u = rng.random(len(s))
    p_on = np.array([p.p11 if st else p.p01 for st, p in zip(s, params)])
    return (u < p_on).astype(np.int8)


def markov_path(u: np.ndarray, q01, q11, y0: int) -> np.ndarray:
    """Binary chain driven by uniforms: ``y[t+1] = u[t] < (q11 if y[t] else q01)``.

    ``q01``/``q11`` may be scalars or per-step arrays. Returns ``y[1..len(u)]``.
    Vectorised: steps where both thresholds agree reset the chain, the others
    either copy or flip the previous value.
    """
    u = np.asarray(u)
    a = u < q01
    b = u < q11
    reset = a == b
    flip = a & ~b
    parity = np.cumsum(flip, dtype=np.int64)
    idx = np.arange(len(u))
    last = np.maximum.accumulate(np.where(reset, idx, -1))
    has = last >= 0
    safe = np.where(has, last, 0)
    base = np.where(has, a[safe].astype(np.int64), y0)
    since = np.where(has, parity - parity[safe], parity)
    return ((base + since) & 1).astype(np.int8)


def sample_path(state0: int, params: ChannelParams, steps: int, rng) -> np.ndarray:
    """States at slots 1..steps of one channel; same uniforms as repeated sample_step."""
    u = rng.random(steps)
    return markov_path(u, params.p01, params.p11, state0)


class BeliefTracker:
    """Information state of every channel, advanced lazily.

    Each entry stores the belief at an anchor slot; the idle recursion is an
    affine contraction towards ``pi_on`` so the value k slots later is
    ``pi + (w - pi)(1 - x)^k``. With ``debug`` the last observed state and the
    observation slot are kept so membership in the reachable set can be checked.
    """

    def __init__(self, params: Sequence[ChannelParams], prior: Optional[Sequence[float]] = None, debug: bool = False):
        self.params = list(params)
        n = len(self.params)
        self.pi = [p.pi_on for p in self.params]
        self.decay = [1.0 - p.x for p in self.params]
        self.anchor_value = list(prior) if prior is not None else list(self.pi)
        if len(self.anchor_value) != n:
            raise ValueError("prior length does not match channel count")
        for w, p in zip(self.anchor_value, self.params):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"prior belief {w} is not a probability")
        self.anchor_slot = [0] * n
        self.debug = debug
        self.last_observed: list[Optional[int]] = [None] * n

    def __len__(self) -> int:
        return len(self.params)

    def value(self, n: int, t: int) -> float:
        pi = self.pi[n]
        return pi + (self.anchor_value[n] - pi) * self.decay[n] ** (t - self.anchor_slot[n])

    def vector(self, t: int) -> np.ndarray:
        return np.array([self.value(n, t) for n in range(len(self.params))])

    def observe(self, n: int, t: int, state: int) -> None:
        """Feedback for slot ``t`` on channel ``n``; the belief for slot t+1 resets."""
        p = self.params[n]
        self.anchor_value[n] = p.p11 if state else p.p01
        self.anchor_slot[n] = t + 1
        if self.debug:
            self.last_observed[n] = state

    def check_reachable(self, n: int, t: int) -> None:
        """Assert the belief equals P_{i1}^{(k)} for the last observation (debug only)."""
        if not self.debug:
            return
        state = self.last_observed[n]
        if state is None:
            return  # still on the prior
        p = self.params[n]
        w = self.value(n, t)
        k = t - self.anchor_slot[n] + 1
        expected = p.p11_k(k) if state else p.p01_k(k)
        if abs(w - expected) > 1e-10:
            raise AssertionError(f"belief {w} of channel {n} not in reachable set (expected {expected})")


class ChannelBank:
    """True channel states, sampled only when a channel is served.

    A channel left alone for k slots is drawn from its k-step law, which gives
    the same joint distribution as stepping every channel every slot.
    """

    def __init__(self, params: Sequence[ChannelParams], rng, initial: Optional[Sequence[int]] = None):
        self.params = list(params)
        self.rng = rng
        n = len(self.params)
        if initial is None:
            initial = [int(rng.random() < p.pi_on) for p in self.params]
        self.states = list(initial)
        self.slots = [0] * n

    def state(self, n: int, t: int) -> int:
        k = t - self.slots[n]
        if k:
            p = self.params[n]
            if k == 1:
                q = p.p11 if self.states[n] else p.p01
            else:
                q = p.p_on_after(self.states[n], k)
            self.states[n] = 1 if self.rng.random() < q else 0
            self.slots[n] = t
        return self.states[n]
