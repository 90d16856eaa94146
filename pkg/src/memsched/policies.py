"""Round-robin scheduling policies: RR(phi), RandRR, QRR and transmit-until-NACK."""

from __future__ import annotations

import bisect
import enum
import functools
import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .channel import PROB_TOL, ChannelParams

WEIGHT_TOL = 1e-9


@dataclass(frozen=True, order=True)
class ActivationVector:
    """Binary vector over channels; the set of users served in one round."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError(f"activation vector must be binary, got {self.bits}")
        if not any(bits):
            raise ValueError("activation vector must have at least one active channel")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def parse(cls, text: str) -> "ActivationVector":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ValueError(f"not a bitstring: {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def of(cls, active: Iterable[int], n: int) -> "ActivationVector":
        s = set(active)
        return cls(tuple(1 if i in s else 0 for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.bits)

    @functools.cached_property
    def m(self) -> int:
        return sum(self.bits)

    @functools.cached_property
    def active(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)


def all_activation_vectors(n: int) -> list[ActivationVector]:
    """Every nonzero binary vector of length n, ordered by size then lexicographically."""
    out = []
    for m in range(1, n + 1):
        for combo in itertools.combinations(range(n), m):
            out.append(ActivationVector.of(combo, n))
    return out


class Phase(enum.Enum):
    FRESH_SWITCH = "fresh"
    DRAINING = "draining"


class PacketKind(enum.Enum):
    DATA = "data"
    DUMMY = "dummy"
    NONE = "none"


@dataclass(frozen=True)
class SlotAction:
    served: Optional[int]
    packet_kind: PacketKind


IDLE = SlotAction(None, PacketKind.NONE)


class BeliefFloorViolation(AssertionError):
    """A fresh switch found the belief below P01^(M); the round-robin invariant is broken."""


def lru_order(phi: ActivationVector, last_used: Sequence[Optional[int]]) -> tuple[int, ...]:
    """Active channels, least recently used first; never-used channels lead, lowest index first."""
    def key(n: int):
        t = last_used[n]
        return (t is not None, -1 if t is None else t, n)

    return tuple(sorted(phi.active, key=key))


_ACTIONS: dict = {PacketKind.DATA: {}, PacketKind.DUMMY: {}, PacketKind.NONE: {}}


def slot_action(n: Optional[int], kind: PacketKind) -> SlotAction:
    """Interned SlotAction; the simulator emits one per slot."""
    table = _ACTIONS[kind]
    a = table.get(n)
    if a is None:
        a = table[n] = SlotAction(n, kind)
    return a


_DATA = _ACTIONS[PacketKind.DATA]
_DUMMY = _ACTIONS[PacketKind.DUMMY]
_FLOORS: dict = {}


def _floors(phi: "ActivationVector", params: Sequence[ChannelParams]) -> dict:
    key = (phi, tuple(params))
    f = _FLOORS.get(key)
    if f is None:
        m = phi.m
        f = {n: params[n].p01_k(m) for n in phi.active}
        if len(_FLOORS) > 4096:
            _FLOORS.clear()
        _FLOORS[key] = f
    return f


_FRESH = Phase.FRESH_SWITCH
_DRAINING = Phase.DRAINING
_DATA_KIND = PacketKind.DATA


class RoundRobinState:
    """One round of RR(phi): visit each active channel once in ``serve_order``.

    On the first slot at a channel a data packet is sent with probability
    ``P01^(M) / omega_n`` and a dummy otherwise; after an ACK on data the
    channel is kept, after a dummy or a NACK the round moves on.
    """

    __slots__ = ("phi", "serve_order", "floor", "position", "phase", "channel",
                 "finished", "last_action", "strict", "violations")

    def __init__(self, phi: ActivationVector, serve_order: Sequence[int], floor: dict, strict: bool = True):
        if sorted(serve_order) != list(phi.active):
            raise ValueError("serve order must be a permutation of the active channels")
        self.phi = phi
        self.serve_order = tuple(serve_order)
        for n in self.serve_order:
            if n not in _DUMMY:
                slot_action(n, PacketKind.DATA)
                slot_action(n, PacketKind.DUMMY)
        self.floor = floor
        self.position = 0
        self.phase = _FRESH
        self.channel: Optional[int] = self.serve_order[0]
        self.finished = False
        self.last_action: Optional[SlotAction] = None
        self.strict = strict
        self.violations = 0

    @classmethod
    def start(
        cls,
        phi: ActivationVector,
        params: Sequence[ChannelParams],
        last_used: Sequence[Optional[int]],
        strict: bool = True,
    ) -> "RoundRobinState":
        if phi.n != len(params):
            raise ValueError(f"activation vector has {phi.n} entries for {len(params)} channels")
        return cls(phi, lru_order(phi, last_used), _floors(phi, params), strict=strict)

    def act(self, omega_n: float, rng) -> SlotAction:
        """Action for the current slot; ``omega_n`` is read only on a fresh switch."""
        n = self.channel
        if self.phase is _DRAINING:
            action = _DATA[n]
        else:
            floor = self.floor[n]
            if omega_n < floor - PROB_TOL:
                self.violations += 1
                if self.strict:
                    raise BeliefFloorViolation(
                        f"channel {n}: belief {omega_n!r} below P01^({self.phi.m}) = {floor!r}"
                    )
            action = _DATA[n] if rng.random() * omega_n < floor else _DUMMY[n]
        self.last_action = action
        return action

    def observe(self, ack: bool) -> tuple[bool, bool]:
        """Apply feedback for the last action. Returns (visit_ended, round_ended)."""
        action = self.last_action
        if action is None:
            raise RuntimeError("observe() called before act()")
        if ack and action.packet_kind is _DATA_KIND:
            self.phase = _DRAINING
            return False, False
        self.position += 1
        self.phase = _FRESH
        if self.position >= len(self.serve_order):
            self.finished = True
            self.channel = None
            return True, True
        self.channel = self.serve_order[self.position]
        return True, False


def rr_step(state: RoundRobinState, omega: Sequence[float], feedback: Optional[bool], rng):
    """Functional wrapper: apply last slot's feedback, then act for this slot.

    Returns ``(action, state, round_ended)``. When the feedback closes the
    round no action is taken and ``IDLE`` is returned.
    """
    if feedback is not None and state.last_action is not None:
        _, ended = state.observe(feedback)
        if ended:
            return IDLE, state, True
    n = state.channel
    return state.act(omega[n], rng), state, False


@dataclass(frozen=True)
class FixedRR:
    """RR(phi) every round. RR(M) is ``FixedRR`` on the first M channels."""

    phi: ActivationVector

    @classmethod
    def first(cls, m: int, n: int) -> "FixedRR":
        return cls(ActivationVector.of(range(m), n))


@dataclass(frozen=True)
class RandRRSpec:
    """Per-round selection probabilities alpha over activation vectors."""

    weights: Mapping[ActivationVector, float]

    def __post_init__(self) -> None:
        items = [(phi, float(w)) for phi, w in self.weights.items()]
        if not items:
            raise ValueError("RandRR needs at least one activation vector")
        sizes = {phi.n for phi, _ in items}
        if len(sizes) != 1:
            raise ValueError("activation vectors of different lengths")
        if any(w < 0 for _, w in items):
            raise ValueError("RandRR weights must be nonnegative")
        total = sum(w for _, w in items)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"RandRR weights sum to {total!r}, not 1")
        object.__setattr__(self, "weights", {phi: w / total for phi, w in sorted(items)})
        support = [(phi, w) for phi, w in self.weights.items() if w > 0]
        cum, acc = [], 0.0
        for _, w in support:
            acc += w
            cum.append(acc)
        object.__setattr__(self, "_support", tuple(phi for phi, _ in support))
        object.__setattr__(self, "_cum", tuple(cum))

    @classmethod
    def from_bitstrings(cls, mapping: Mapping[str, float]) -> "RandRRSpec":
        return cls({ActivationVector.parse(k): float(v) for k, v in mapping.items()})

    def to_bitstrings(self) -> dict[str, float]:
        return {str(phi): w for phi, w in self.weights.items()}

    @property
    def n(self) -> int:
        return next(iter(self.weights)).n

    def sample(self, rng) -> ActivationVector:
        u = rng.random() * self._cum[-1]
        i = bisect.bisect_right(self._cum, u)
        return self._support[min(i, len(self._support) - 1)]


def randrr_pick(
    spec: RandRRSpec,
    last_used: Sequence[Optional[int]],
    rng,
    params: Sequence[ChannelParams],
    strict: bool = True,
) -> RoundRobinState:
    return RoundRobinState.start(spec.sample(rng), params, last_used, strict=strict)


@dataclass(frozen=True)
class QRRConfig:
    """Queue-dependent round robin. ``rate_source='empirical'`` is experimental."""

    lam: tuple[float, ...]
    rate_source: str = "known"
    warmup: int = 10_000

    def __post_init__(self) -> None:
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        if any(not 0.0 <= v < 1.0 for v in self.lam):
            raise ValueError(f"QRR arrival rates must lie in [0, 1), got {self.lam}")
        if self.rate_source not in ("known", "empirical"):
            raise ValueError(f"unknown rate source {self.rate_source!r}")


@dataclass(frozen=True)
class TransmitUntilNack:
    """Circular order over ``channels`` (all when None); data until a NACK."""

    channels: Optional[tuple[int, ...]] = None


PolicySpec = Union[FixedRR, RandRRSpec, QRRConfig, TransmitUntilNack]


def qrr_score(U: Sequence[float], lam: Sequence[float], n: int, m: int, params: Sequence[ChannelParams]) -> float:
    """Channel n's summand of the round drift score when m channels are active."""
    if not 1 <= m <= len(params):
        raise ValueError(f"M must be in 1..{len(params)}, got {m}")
    r = params[n].p01_k(m) / params[n].p10
    weighted = sum(u * l for u, l in zip(U, lam))
    return U[n] * r - (1.0 + r) * weighted


def _tie_tol(value: float) -> float:
    return 1e-9 * (1.0 + abs(value))


def round_score(U, lam, phi: ActivationVector, params) -> float:
    """f(U, RR(phi)) summed over active channels in index order."""
    m = phi.m
    return sum(qrr_score(U, lam, n, m, params) for n in phi.active)


def qrr_select(U: Sequence[float], lam: Sequence[float], params: Sequence[ChannelParams]):
    """Maximise the round score over all activation vectors in O(N^2 log N).

    For each size M the best vector activates the M largest summands; the
    overall winner is the best size, preferring smaller M within tolerance.
    Returns ``(phi, score)``.
    """
    n_ch = len(params)
    if len(U) != n_ch or len(lam) != n_ch:
        raise ValueError("queue, rate and channel vectors differ in length")
    weighted = sum(u * l for u, l in zip(U, lam))
    best = []
    idx = range(n_ch)
    for m, ratios in enumerate(_ratio_table(params), start=1):
        scores = [u * r - (1.0 + r) * weighted for u, r in zip(U, ratios)]
        # stable sort keeps the lower index first among equal scores
        top = sorted(sorted(idx, key=lambda i: -scores[i])[:m])
        best.append((sum(scores[i] for i in top), top))
    f_max = max(f for f, _ in best)
    for f, top in best:
        if f >= f_max - _tie_tol(f_max):
            return _interned(tuple(top), n_ch), f
    raise AssertionError("unreachable")


@functools.lru_cache(maxsize=4096)
def _interned(active: tuple, n: int) -> ActivationVector:
    return ActivationVector.of(active, n)


_RATIOS: dict = {}


def _ratio_table(params: Sequence[ChannelParams]) -> list:
    """Rows m = 1..N of P01^(m) / P10 per channel."""
    key = tuple(params)
    table = _RATIOS.get(key)
    if table is None:
        n_ch = len(key)
        table = [[p.p01_k(m) / p.p10 for p in key] for m in range(1, n_ch + 1)]
        if len(_RATIOS) > 256:
            _RATIOS.clear()
        _RATIOS[key] = table
    return table


def heuristic_until_nack_step(position: int, order: Sequence[int], feedback: Optional[bool]):
    """Transmit-until-NACK: returns ``(action, new_position)``; moves on only after a NACK."""
    if feedback is False:
        position = (position + 1) % len(order)
    return slot_action(order[position], PacketKind.DATA), position


class UntilNackState:
    """Running state of the transmit-until-NACK heuristic; never ends a round."""

    finished = False

    def __init__(self, order: Sequence[int], n_channels: int):
        if not order:
            raise ValueError("heuristic needs at least one channel")
        self.order = tuple(order)
        self.phi = ActivationVector.of(self.order, n_channels)
        self.position = 0
        self.channel = self.order[0]
        self.phase = Phase.FRESH_SWITCH
        self.violations = 0

    def act(self, omega_n: float, rng) -> SlotAction:
        return slot_action(self.channel, PacketKind.DATA)

    def observe(self, ack: bool) -> tuple[bool, bool]:
        if ack:
            self.phase = Phase.DRAINING
            return False, False
        self.position = (self.position + 1) % len(self.order)
        self.channel = self.order[self.position]
        self.phase = Phase.FRESH_SWITCH
        return True, False
