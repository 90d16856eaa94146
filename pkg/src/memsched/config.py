"""Experiment configuration: a TOML file layered over explicit defaults."""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .capacity import MAX_CHANNELS
from .channel import ChannelParams
from .policies import (
    ActivationVector,
    FixedRR,
    PolicySpec,
    QRRConfig,
    RandRRSpec,
    TransmitUntilNack,
)
from .simulator import QUEUED, SATURATED, ArrivalConfig, SimConfig

DEFAULTS_TOML = """\
# memsched experiment configuration; every key is optional.

[run]
mode = "saturated"          # saturated | queued
horizon = 1000000           # slots per replication
burn_in = 10000             # slots excluded from throughput estimates
replications = 1
seed = 0
assertions = true           # belief-floor and dwell assertions
series_stride = 1000        # slots between rows of series.csv
empty_queue_feedback = true # an empty-queue data slot still returns ACK/NACK
debug_beliefs = false       # check every belief against its reachable set

[channels]
n = 2
p01 = 0.2                   # scalar (all channels) or one value per channel
p10 = 0.2
prior = []                  # initial beliefs; empty means stationary

[policy]
kind = "rr"                 # rr | randrr | qrr | until-nack
phi = ""                    # rr: activation bitstring, empty means all channels
weights = {}                # randrr: {"bitstring" = alpha}
weights_file = ""           # randrr: JSON map {"bitstring": alpha}
channels = []               # until-nack: circular order, empty means all

[arrivals]
rates = []                  # packets/slot per user (queued mode)
a_max = 1
law = "bernoulli"           # bernoulli | binomial
backlog_cap = 10000000      # total backlog that stops a run as unstable

[qrr]
rate_source = "known"       # known | empirical (experimental)
warmup = 10000

[region]
directions = 361            # evenly spaced planar directions, axes and diagonal included
directions_file = ""        # CSV of direction vectors, one per line
blind_line = true           # add the memoryless reference line when symmetric
"""

DEFAULTS: dict = tomllib.loads(DEFAULTS_TOML)


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {path!r}")
        if isinstance(base[key], dict) and key != "weights":
            if not isinstance(value, dict):
                raise ConfigError(f"{path!r} must be a table")
            out[key] = _merge(base[key], value, path)
        else:
            out[key] = value
    return out


def load_raw(path: Optional[str | Path] = None, overrides: Optional[dict] = None) -> dict:
    raw = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, "rb") as fh:
            try:
                raw = _merge(raw, tomllib.load(fh))
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if overrides:
        raw = _merge(raw, overrides)
    return raw


def _per_channel(value, n: int, name: str) -> list[float]:
    if isinstance(value, (int, float)):
        return [float(value)] * n
    vals = [float(v) for v in value]
    if len(vals) != n:
        raise ConfigError(f"channels.{name} has {len(vals)} entries for n = {n}")
    return vals


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    params: tuple[ChannelParams, ...]
    policy: PolicySpec
    arrivals: Optional[ArrivalConfig]
    base_dir: Path

    @property
    def run(self) -> dict:
        return self.raw["run"]

    @property
    def n(self) -> int:
        return len(self.params)

    def sim_config(self, seed: int, horizon: Optional[int] = None, trace: bool = False) -> SimConfig:
        r = self.run
        horizon = int(horizon if horizon is not None else r["horizon"])
        prior = self.raw["channels"]["prior"]
        return SimConfig(
            params=self.params,
            policy=self.policy,
            horizon=horizon,
            seed=seed,
            mode=r["mode"],
            arrivals=self.arrivals,
            burn_in=min(int(r["burn_in"]), horizon - 1),
            assertions_on=bool(r["assertions"]),
            prior=tuple(prior) if prior else None,
            backlog_cap=int(self.raw["arrivals"]["backlog_cap"]),
            series_stride=int(r["series_stride"]),
            record_dwells=False,
            trace=trace,
            empty_queue_feedback=bool(r["empty_queue_feedback"]),
            debug_beliefs=bool(r["debug_beliefs"]),
        )


def _build_policy(raw: dict, n: int, base_dir: Path, lam) -> PolicySpec:
    pol = raw["policy"]
    kind = pol["kind"]
    if kind == "rr":
        phi = ActivationVector.parse(pol["phi"]) if pol["phi"] else ActivationVector.of(range(n), n)
        if phi.n != n:
            raise ConfigError(f"policy.phi has {phi.n} entries for n = {n}")
        return FixedRR(phi)
    if kind == "randrr":
        weights = dict(pol["weights"])
        if pol["weights_file"]:
            if weights:
                raise ConfigError("give policy.weights or policy.weights_file, not both")
            with open(base_dir / pol["weights_file"]) as fh:
                weights = json.load(fh)
        if not weights:
            raise ConfigError("randrr needs policy.weights or policy.weights_file")
        spec = RandRRSpec.from_bitstrings(weights)
        if spec.n != n:
            raise ConfigError(f"randrr weights use {spec.n} channels for n = {n}")
        return spec
    if kind == "qrr":
        if raw["run"]["mode"] != QUEUED:
            raise ConfigError("qrr needs run.mode = 'queued'")
        q = raw["qrr"]
        return QRRConfig(tuple(lam), rate_source=q["rate_source"], warmup=int(q["warmup"]))
    if kind == "until-nack":
        chans = tuple(int(c) for c in pol["channels"]) or None
        if chans is not None and any(not 0 <= c < n for c in chans):
            raise ConfigError("policy.channels refers to an unknown channel")
        return TransmitUntilNack(chans)
    raise ConfigError(f"unknown policy.kind {kind!r}")


def build(raw: dict, base_dir: str | Path = ".") -> ExperimentConfig:
    """Validate every section and assemble the typed configuration."""
    base_dir = Path(base_dir)
    ch = raw["channels"]
    n = int(ch["n"])
    if not 1 <= n <= MAX_CHANNELS:
        raise ConfigError(f"channels.n must lie in 1..{MAX_CHANNELS}, got {n}")
    p01 = _per_channel(ch["p01"], n, "p01")
    p10 = _per_channel(ch["p10"], n, "p10")
    params = []
    for i, (a, b) in enumerate(zip(p01, p10)):
        try:
            params.append(ChannelParams(a, b))
        except ValueError as exc:
            raise ConfigError(f"channel {i}: {exc}") from exc
    if ch["prior"] and len(ch["prior"]) != n:
        raise ConfigError(f"channels.prior has {len(ch['prior'])} entries for n = {n}")

    r = raw["run"]
    if r["mode"] not in (SATURATED, QUEUED):
        raise ConfigError(f"run.mode must be 'saturated' or 'queued', got {r['mode']!r}")
    if int(r["horizon"]) < 1:
        raise ConfigError("run.horizon must be >= 1")
    if int(r["replications"]) < 1:
        raise ConfigError("run.replications must be >= 1")

    arr = raw["arrivals"]
    lam = [float(v) for v in arr["rates"]]
    arrivals = None
    if r["mode"] == QUEUED:
        if len(lam) != n:
            raise ConfigError(f"arrivals.rates has {len(lam)} entries for n = {n}")
        try:
            arrivals = ArrivalConfig(tuple(lam), a_max=int(arr["a_max"]), law=arr["law"])
        except ValueError as exc:
            raise ConfigError(f"arrivals: {exc}") from exc
    try:
        policy = _build_policy(raw, n, base_dir, lam)
    except ConfigError:
        raise
    except ValueError as exc:  # invariant failures raised by the policy types
        raise ConfigError(f"policy: {exc}") from exc

    cfg = ExperimentConfig(raw, tuple(params), policy, arrivals, base_dir)
    try:
        cfg.sim_config(seed=int(r["seed"]))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path: Optional[str | Path] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    base = Path(path).parent if path is not None else Path(".")
    return build(load_raw(path, overrides), base)
