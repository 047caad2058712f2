"""Evaluation topologies and periodic traffic, reproducible from a seed.

All randomness goes through ``numpy.random.Generator(PCG64(seed))``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import InfeasibleEdgeCount, PathUnreachable, Unreachable
from .flow_model import FlowSpec
from .net_model import ValidatedTopology, build_topology, shortest_path

SPEED_OF_LIGHT = 299_792_458.0  # m/s
EARTH_RADIUS_KM = 6371.0088


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TrafficProfile:
    period_choices: tuple[int, ...] = (4000, 8000, 16000, 32000)  # µs
    packets_choices: tuple[int, ...] = (1, 2, 3)
    deadline_range: tuple[int, int] = (30000, 50000)  # µs, sampled in whole ms
    flow_count: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.period_choices or not self.packets_choices:
            raise ValueError("period and packet choices must be non-empty")
        if self.deadline_range[0] > self.deadline_range[1]:
            raise ValueError("deadline range is inverted")
        if self.flow_count < 0:
            raise ValueError("flow_count must be >= 0")


PAPER_PROFILE = TrafficProfile()


def gen_er_topology(n: int, m: int, delay_range_us: tuple[float, float] = (100, 2000),
                    seed: int = 0) -> ValidatedTopology:
    """Connected G(n, m): random spanning tree plus m-(n-1) extra links.

    Every undirected link becomes two directed edges with the same delay,
    drawn uniformly (integer ns) from ``delay_range_us``.
    """
    if n < 2 or m < n - 1 or m > n * (n - 1) // 2:
        raise InfeasibleEdgeCount(f"cannot build a connected simple graph with n={n}, m={m}")
    rng = rng_for(seed)
    lo, hi = (int(round(d * 1000)) for d in delay_range_us)
    nodes = [f"v{i}" for i in range(n)]

    perm = rng.permutation(n)
    pairs = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        a, b = int(perm[i]), int(perm[j])
        pairs.append((min(a, b), max(a, b)))
    present = set(pairs)
    candidates = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in present]
    extra = m - (n - 1)
    if extra:
        for i in sorted(rng.choice(len(candidates), size=extra, replace=False)):
            pairs.append(candidates[i])

    delays = rng.integers(lo, hi + 1, size=len(pairs))
    links = [(nodes[a], nodes[b], int(d)) for (a, b), d in zip(pairs, delays)]
    return build_topology(nodes, links, bidirectional=True)


def haversine_km(p: tuple[float, float], q: tuple[float, float]) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (*p, *q))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def propagation_delay_ns(distance_km: float) -> int:
    return int(round(distance_km * 1000 / (2 * SPEED_OF_LIGHT / 3) * 1e9))


def internet2_data() -> dict:
    return json.loads(resources.files("csqf").joinpath("data/internet2.json").read_text())


def internet2_topology() -> ValidatedTopology:
    data = internet2_data()
    cities = data["cities"]
    links = [
        (a, b, propagation_delay_ns(haversine_km(cities[a], cities[b])))
        for a, b in data["links"]
    ]
    return build_topology(list(cities), links, bidirectional=True)


def gen_flows(profile: TrafficProfile, topo: ValidatedTopology, max_resample: int = 100) -> list[FlowSpec]:
    """Random unicast flows routed on delay-shortest paths.

    Each flow also gets an uncontrolled release instant drawn uniformly
    (integer µs) within its period.
    """
    if len(topo.nodes) < 2:
        raise ValueError("need at least two nodes")
    rng = rng_for(profile.seed)
    n = len(topo.nodes)
    dl_lo, dl_hi = profile.deadline_range
    flows = []
    for i in range(profile.flow_count):
        for _ in range(max_resample):
            a, b = rng.choice(n, size=2, replace=False)
            src, dst = topo.nodes[int(a)], topo.nodes[int(b)]
            try:
                path = shortest_path(topo, src, dst)
                break
            except Unreachable:
                continue
        else:
            raise PathUnreachable(f"no routable pair found in {max_resample} draws")
        period = int(rng.choice(profile.period_choices))
        packets = int(rng.choice(profile.packets_choices))
        deadline = int(rng.integers(dl_lo // 1000, dl_hi // 1000 + 1)) * 1000
        release = int(rng.integers(0, period))
        flows.append(FlowSpec(f"f{i}", src, dst, period, packets, deadline, path, release))
    return flows


def with_profile(profile: TrafficProfile, **changes) -> TrafficProfile:
    return replace(profile, **changes)
