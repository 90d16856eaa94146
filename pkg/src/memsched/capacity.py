"""Closed-form throughput quantities and inner/outer capacity-region geometry."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .channel import ChannelParams
from .policies import ActivationVector, RandRRSpec, all_activation_vectors

MAX_CHANNELS = 16
LP_TOL = 1e-9


class Membership(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


def _is_symmetric(params: Sequence[ChannelParams]) -> bool:
    first = params[0]
    return all(p.p01 == first.p01 and p.p10 == first.p10 for p in params)


def c_of_M(params: ChannelParams, m) -> float:
    """Sum throughput of RR(M) on symmetric channels; ``m=math.inf`` gives the limit."""
    if m != math.inf and (int(m) != m or m < 1):
        raise ValueError(f"M must be a positive integer or inf, got {m!r}")
    x, p01, p10 = params.x, params.p01, params.p10
    g = 1.0 if m == math.inf else 1.0 - (1.0 - x) ** int(m)
    return p01 * g / (x * p10 + p01 * g)


def c_tilde(params: ChannelParams, m: int) -> float:
    return params.c_inf * (1.0 - (1.0 - params.x) ** m)


def geometric_gap(params: ChannelParams, m) -> float:
    """Upper bound c_inf (1-x)^M on c_inf - c_M."""
    if m == math.inf:
        return 0.0
    return params.c_inf * (1.0 - params.x) ** m


def expected_dwell(params: ChannelParams, m: int) -> float:
    """Mean visit length of one channel under RR with m active channels."""
    return 1.0 + params.p01_k(m) / params.p10


def eta_vector(phi: ActivationVector, params: Sequence[ChannelParams]) -> np.ndarray:
    """Per-channel throughput of RR(phi)."""
    if phi.n != len(params):
        raise ValueError(f"activation vector has {phi.n} entries for {len(params)} channels")
    m = phi.m
    dwell = {n: expected_dwell(params[n], m) for n in phi.active}
    total = sum(dwell.values())
    eta = np.zeros(len(params))
    for n, e in dwell.items():
        eta[n] = (e - 1.0) / total
    return eta


def round_length(phi: ActivationVector, params: Sequence[ChannelParams]) -> float:
    """Expected round duration chi_phi: sum of mean dwells of the active channels."""
    m = phi.m
    return sum(expected_dwell(params[n], m) for n in phi.active)


@dataclass(frozen=True)
class RegionModel:
    """Inner-bound vertices {eta^phi} and the outer-bound hyperplanes."""

    params: tuple[ChannelParams, ...]
    vertices: Mapping[ActivationVector, np.ndarray]
    pi_on: np.ndarray
    sum_cap: float

    @classmethod
    def build(cls, params: Sequence[ChannelParams]) -> "RegionModel":
        params = tuple(params)
        if not params:
            raise ValueError("at least one channel is required")
        if len(params) > MAX_CHANNELS:
            raise ValueError(f"region computations are capped at {MAX_CHANNELS} channels, got {len(params)}")
        vertices = {phi: eta_vector(phi, params) for phi in all_activation_vectors(len(params))}
        return cls(
            params=params,
            vertices=vertices,
            pi_on=np.array([p.pi_on for p in params]),
            sum_cap=max(p.c_inf for p in params),
        )

    @property
    def n(self) -> int:
        return len(self.params)

    def vertex_matrix(self) -> tuple[list[ActivationVector], np.ndarray]:
        phis = list(self.vertices)
        return phis, np.column_stack([self.vertices[p] for p in phis])


def _max_scale(direction: np.ndarray, etas: np.ndarray):
    """Largest theta with theta*direction <= sum_k beta_k eta_k, beta a distribution."""
    n, k = etas.shape
    # variables: beta_1..beta_k, theta ; maximise theta
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-etas, direction.reshape(-1, 1)])
    b_ub = np.zeros(n)
    a_eq = np.zeros((1, k + 1))
    a_eq[0, :k] = 1.0
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + 1), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return res.x[-1], res.x[:k]


@dataclass(frozen=True)
class InnerResult:
    status: Membership
    scale: float
    certificate: Optional[dict[ActivationVector, float]]

    def mixture(self, region: RegionModel) -> np.ndarray:
        mu = np.zeros(region.n)
        for phi, b in (self.certificate or {}).items():
            mu += b * region.vertices[phi]
        return mu


def inner_membership(lam: Sequence[float], region: RegionModel) -> InnerResult:
    """Is lam entrywise dominated by a convex combination of the vertices?

    Solved as the LP ``max theta : theta*lam <= sum beta_phi eta^phi``; lam is
    inside when theta > 1, on the boundary when theta = 1 within tolerance.
    The certificate is the vertex mixture beta.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (region.n,):
        raise ValueError(f"rate vector has shape {lam.shape}, region has {region.n} channels")
    if np.any(lam < 0):
        raise ValueError("rates must be nonnegative")
    phis, etas = region.vertex_matrix()
    if not np.any(lam > 0):
        # the origin is dominated by any single vertex
        return InnerResult(Membership.INSIDE, math.inf, {phis[0]: 1.0})
    theta, beta = _max_scale(lam, etas)
    beta = np.clip(beta, 0.0, None)
    beta = beta / beta.sum()
    cert = {phi: float(b) for phi, b in zip(phis, beta) if b > 0}
    if theta > 1.0 + LP_TOL:
        status = Membership.INSIDE
    elif theta >= 1.0 - LP_TOL:
        status = Membership.BOUNDARY
    else:
        status = Membership.OUTSIDE
        cert = None
    return InnerResult(status, float(theta), cert)


def outer_membership(lam: Sequence[float], params: Sequence[ChannelParams]) -> Membership:
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (len(params),):
        raise ValueError("rate vector and channel list differ in length")
    if np.any(lam < 0):
        raise ValueError("rates must be nonnegative")
    caps_ok = all(l <= p.pi_on + LP_TOL for l, p in zip(lam, params))
    sum_ok = lam.sum() <= max(p.c_inf for p in params) + LP_TOL
    return Membership.INSIDE if caps_ok and sum_ok else Membership.OUTSIDE


class WeightKind(enum.Enum):
    SELECTION = "alpha"  # per-round selection probabilities
    TIME_FRACTION = "beta"  # long-run fraction of time per activation vector


@dataclass(frozen=True)
class MixtureWeights:
    weights: Mapping[ActivationVector, float]
    kind: WeightKind

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("mixture weights must be nonnegative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > LP_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, not 1")


def _reweight(weights: MixtureWeights, params, power: int, kind: WeightKind) -> MixtureWeights:
    raw = {phi: w * round_length(phi, params) ** power for phi, w in weights.weights.items()}
    total = sum(raw.values())
    return MixtureWeights({phi: v / total for phi, v in raw.items()}, kind)


def beta_to_alpha(beta: MixtureWeights, params: Sequence[ChannelParams]) -> MixtureWeights:
    """Selection probabilities that realise the time fractions ``beta``: alpha ∝ beta/chi."""
    if beta.kind is not WeightKind.TIME_FRACTION:
        raise ValueError("expected time-fraction (beta) weights")
    return _reweight(beta, params, -1, WeightKind.SELECTION)


def alpha_to_beta(alpha: MixtureWeights, params: Sequence[ChannelParams]) -> MixtureWeights:
    """Long-run time fractions of a RandRR with selection probabilities alpha: beta ∝ alpha*chi."""
    if alpha.kind is not WeightKind.SELECTION:
        raise ValueError("expected selection (alpha) weights")
    return _reweight(alpha, params, 1, WeightKind.TIME_FRACTION)


def _vectors_of_size(n: int, d: int) -> list[ActivationVector]:
    return [ActivationVector.of(c, n) for c in itertools.combinations(range(n), d)]


def _cone_weights(v: np.ndarray, d: int) -> Optional[dict[ActivationVector, float]]:
    """Nonnegative weights on size-d vectors summing to v, or None if infeasible."""
    phis = _vectors_of_size(len(v), d)
    a_eq = np.column_stack([np.array(p.bits, dtype=float) for p in phis])
    res = linprog(np.zeros(len(phis)), A_eq=a_eq, b_eq=v, bounds=[(0, None)] * len(phis), method="highs")
    if res.status != 0:
        return None
    if np.max(np.abs(a_eq @ res.x - v)) > LP_TOL * max(1.0, float(v.max())):
        return None
    return {phi: float(w) for phi, w in zip(phis, res.x) if w > LP_TOL * float(v.sum())}


def _check_direction(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or np.any(v < 0) or not np.any(v > 0):
        raise ValueError(f"direction must be nonnegative and nonzero, got {v}")
    return v


def user_diversity(v: Sequence[float]) -> int:
    """Largest d such that v is a nonnegative combination of size-d activation vectors."""
    v = _check_direction(v)
    for d in range(len(v), 0, -1):
        if _cone_weights(v, d) is not None:
            return d
    raise AssertionError("every direction is 1-user diverse")


def guaranteed_sum_throughput(v: Sequence[float], params: ChannelParams):
    """Sum rate c_{d(v)} guaranteed in direction v, with a RandRR mixing size-d(v) rounds."""
    v = _check_direction(v)
    d = user_diversity(v)
    w = _cone_weights(v, d)
    total = sum(w.values())
    spec = RandRRSpec({phi: x / total for phi, x in w.items()})
    return c_of_M(params, d), spec


def proximity_gap(v: Sequence[float], lambda_int: Sequence[float], params: ChannelParams) -> float:
    """Upper bound on the sum-rate loss of the inner bound in direction v (symmetric channels)."""
    d = user_diversity(v)
    peak = float(np.max(lambda_int))
    second = math.inf if peak <= 0 else params.pi_on / peak - 1.0
    return params.c_inf * min((1.0 - params.x) ** d, second)


def inner_boundary_point(region: RegionModel, direction: Sequence[float]) -> np.ndarray:
    v = _check_direction(direction)
    u = v / v.sum()
    _, etas = region.vertex_matrix()
    theta, _ = _max_scale(u, etas)
    return theta * u


def outer_boundary_point(params: Sequence[ChannelParams], direction: Sequence[float]) -> np.ndarray:
    """Nearest crossing of the ray with the N+1 outer hyperplanes."""
    v = _check_direction(direction)
    u = v / v.sum()
    theta = max(p.c_inf for p in params)  # sum of u is 1
    for un, p in zip(u, params):
        if un > 0:
            theta = min(theta, p.pi_on / un)
    return theta * u


@dataclass(frozen=True)
class SweepRow:
    direction: tuple[float, ...]
    inner: tuple[float, ...]
    outer: tuple[float, ...]

    @property
    def gap(self) -> float:
        return sum(self.outer) - sum(self.inner)


def boundary_sweep(region: RegionModel, directions: Sequence[Sequence[float]]) -> list[SweepRow]:
    if len(directions) == 0:
        raise ValueError("no directions given")
    rows = []
    for d in directions:
        inner = inner_boundary_point(region, d)
        outer = outer_boundary_point(region.params, d)
        rows.append(SweepRow(tuple(float(x) for x in d), tuple(inner.tolist()), tuple(outer.tolist())))
    return rows


def planar_directions(count: int) -> list[tuple[float, float]]:
    """``count`` directions evenly spaced over the first quadrant, axes included."""
    if count < 2:
        return [(1.0, 1.0)]
    out = []
    for i in range(count):
        a = (math.pi / 2) * i / (count - 1)
        out.append((max(math.cos(a), 0.0), max(math.sin(a), 0.0)))
    out[0], out[-1] = (1.0, 0.0), (0.0, 1.0)
    return out


def blind_point(params: Sequence[ChannelParams], direction: Sequence[float]) -> Optional[np.ndarray]:
    """Boundary of the memoryless-treatment region (sum rate pi_on); symmetric channels only."""
    if not _is_symmetric(params):
        return None
    v = _check_direction(direction)
    return params[0].pi_on * v / v.sum()


def memory_gain(params: ChannelParams, m: int = 2) -> float:
    """Relative sum-rate gain of RR(m) over treating the channel as memoryless."""
    c1 = c_of_M(params, 1)
    return (c_of_M(params, m) - c1) / c1
