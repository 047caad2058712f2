"""Periodic flow specifications and cycle-timing parameters.

All durations here are integer microseconds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import reduce
from pathlib import Path as FsPath
from typing import Iterable, Sequence

from .errors import (
    ConfigError,
    CycleTooLarge,
    CycleTooSmall,
    EmptyPeriodSet,
    FlowError,
    NotDivisible,
    PeriodNotDivisible,
    QueueNumTooSmall,
)
from .net_model import Path, ValidatedTopology, shortest_path

FlowId = str


@dataclass(frozen=True)
class FlowSpec:
    """One periodic unicast flow.

    ``release_us`` is the instant within the period at which the talker
    emits its packets when nobody controls it. Schedulers that cannot pick
    the offset (naive, CS) start from the cycle containing it.
    """

    id: FlowId
    src: str
    dst: str
    period_us: int
    packets: int
    deadline_us: int
    path: Path | None = None
    release_us: int = 0

    def __post_init__(self):
        if self.period_us <= 0:
            raise FlowError(f"flow {self.id}: period must be positive")
        if self.deadline_us <= 0:
            raise FlowError(f"flow {self.id}: deadline must be positive")
        if self.packets < 1:
            raise FlowError(f"flow {self.id}: packets per period must be >= 1")
        if not 0 <= self.release_us < self.period_us:
            raise FlowError(f"flow {self.id}: release must lie in [0, period)")
        if self.src == self.dst:
            raise FlowError(f"flow {self.id}: source equals destination")
        if self.path is not None and (self.path.src != self.src or self.path.dst != self.dst):
            raise FlowError(f"flow {self.id}: path endpoints do not match flow endpoints")

    @property
    def hops(self) -> int:
        return len(self.path) if self.path is not None else 0


@dataclass(frozen=True)
class ScheduleConfig:
    t_cycle_us: int = 125
    queue_len: int = 10
    queue_num: int = 3
    bandwidth_bps: int = 1_000_000_000
    mtu_bytes: int = 1500
    proc_delay_us: int = 0


@dataclass(frozen=True)
class ValidatedConfig(ScheduleConfig):
    hyper_us: int = 0
    beta: int = 1

    @property
    def t_cycle_ns(self) -> int:
        return self.t_cycle_us * 1000

    @property
    def max_shift(self) -> int:
        return self.queue_num - 2

    def stride(self, period_us: int) -> int:
        """Cycles per flow period."""
        return period_us // self.t_cycle_us

    def deadline_cycles(self, deadline_us: int) -> int:
        return deadline_us // self.t_cycle_us


def hyper_cycle(periods: Iterable[int]) -> int:
    periods = list(periods)
    if not periods:
        raise EmptyPeriodSet("no periods given")
    if any(p <= 0 for p in periods):
        raise ConfigError("periods must be positive")
    return reduce(math.lcm, periods)


def max_cycle_time(periods: Iterable[int]) -> int:
    periods = list(periods)
    if not periods:
        raise EmptyPeriodSet("no periods given")
    if any(p <= 0 for p in periods):
        raise ConfigError("periods must be positive")
    return reduce(math.gcd, periods)


def min_cycle_time(queue_len: int, mtu_bytes: int, bandwidth_bps: int, proc_delay_us: int = 0) -> int:
    """Smallest cycle (whole µs) that drains a full queue of MTU-sized packets."""
    bits = queue_len * mtu_bytes * 8
    # ceil(proc + bits / bw) in µs, in integers
    num = proc_delay_us * bandwidth_bps + bits * 1_000_000
    return -(-num // bandwidth_bps)


def beta(hyper_us: int, t_cycle_us: int) -> int:
    if t_cycle_us <= 0 or hyper_us % t_cycle_us:
        raise NotDivisible(f"hyper-cycle {hyper_us} µs is not a multiple of cycle {t_cycle_us} µs")
    return hyper_us // t_cycle_us


def validate_config(flows: Sequence[FlowSpec], cfg: ScheduleConfig) -> ValidatedConfig:
    if cfg.queue_num < 2:
        raise QueueNumTooSmall(f"queue_num={cfg.queue_num}, need at least 2")
    if cfg.queue_len < 1 or cfg.t_cycle_us <= 0 or cfg.bandwidth_bps <= 0 or cfg.mtu_bytes <= 0:
        raise ConfigError("queue_len, t_cycle_us, bandwidth_bps and mtu_bytes must be positive")
    if cfg.proc_delay_us < 0:
        raise ConfigError("proc_delay_us must be non-negative")

    t = cfg.t_cycle_us
    lower = min_cycle_time(cfg.queue_len, cfg.mtu_bytes, cfg.bandwidth_bps, cfg.proc_delay_us)
    if t < lower:
        raise CycleTooSmall(f"t_cycle {t} µs < minimum {lower} µs for L={cfg.queue_len}")

    periods = sorted({f.period_us for f in flows})
    if periods:
        upper = max_cycle_time(periods)
        if t > upper:
            raise CycleTooLarge(f"t_cycle {t} µs > GCD of periods {upper} µs")
        for f in flows:
            if f.period_us % t:
                raise PeriodNotDivisible(f"flow {f.id}: period {f.period_us} µs not a multiple of {t} µs")
        hyper = hyper_cycle(periods)
    else:
        hyper = t
    base = {k: getattr(cfg, k) for k in ScheduleConfig.__dataclass_fields__}
    return ValidatedConfig(**base, hyper_us=hyper, beta=beta(hyper, t))


def smallest_valid_cycle(periods: Iterable[int], queue_len: int, mtu_bytes: int = 1500,
                         bandwidth_bps: int = 1_000_000_000, proc_delay_us: int = 0) -> int:
    """Smallest divisor of GCD(periods) that is at least the minimum cycle time."""
    g = max_cycle_time(periods)
    lower = min_cycle_time(queue_len, mtu_bytes, bandwidth_bps, proc_delay_us)
    for t in range(lower, g + 1):
        if g % t == 0:
            return t
    raise CycleTooSmall(f"no divisor of {g} µs is >= {lower} µs")


def route_flows(flows: Iterable[FlowSpec], topo: ValidatedTopology) -> list[FlowSpec]:
    """Fill in missing paths with the delay-shortest route."""
    return [f if f.path is not None else replace(f, path=shortest_path(topo, f.src, f.dst)) for f in flows]


# -- file formats ---------------------------------------------------------

def flow_to_dict(f: FlowSpec) -> dict:
    out = {
        "id": f.id,
        "src": f.src,
        "dst": f.dst,
        "period_us": f.period_us,
        "packets": f.packets,
        "deadline_us": f.deadline_us,
    }
    if f.release_us:
        out["release_us"] = f.release_us
    return out


def flow_from_dict(d: dict) -> FlowSpec:
    try:
        return FlowSpec(
            id=str(d["id"]),
            src=str(d["src"]),
            dst=str(d["dst"]),
            period_us=int(d["period_us"]),
            packets=int(d["packets"]),
            deadline_us=int(d["deadline_us"]),
            release_us=int(d.get("release_us", 0)),
        )
    except KeyError as exc:
        raise FlowError(f"flow record {d!r} is missing field {exc}") from exc


def load_flows(path: str | FsPath, topo: ValidatedTopology | None = None) -> list[FlowSpec]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise FlowError(f"{path}: expected a JSON array of flows")
    flows = [flow_from_dict(d) for d in data]
    ids = [f.id for f in flows]
    if len(set(ids)) != len(ids):
        raise FlowError(f"{path}: duplicate flow ids")
    return route_flows(flows, topo) if topo is not None else flows


def save_flows(flows: Iterable[FlowSpec], path: str | FsPath) -> None:
    with open(path, "w") as fh:
        json.dump([flow_to_dict(f) for f in flows], fh, indent=1)
        fh.write("\n")


_CONFIG_KEYS = ("t_cycle_us", "queue_len", "queue_num", "bandwidth_bps", "mtu_bytes", "proc_delay_us")


def config_from_dict(d: dict) -> ScheduleConfig:
    unknown = set(d) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return ScheduleConfig(**{k: int(v) for k, v in d.items()})


def config_to_dict(cfg: ScheduleConfig) -> dict:
    return {k: getattr(cfg, k) for k in _CONFIG_KEYS}


def load_config(path: str | FsPath) -> ScheduleConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))
