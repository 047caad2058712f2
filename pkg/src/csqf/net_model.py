"""Network topology, validation and delay-weighted shortest-path routing.

Delays are kept as integer nanoseconds so that cycle arithmetic
(ceiling divisions, divisibility) stays exact.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath
from typing import Mapping, Sequence

from .errors import (
    DanglingNodeRef,
    DuplicateEdge,
    NonPositiveDelay,
    SelfLoop,
    TopologyError,
    Unreachable,
)

NodeId = str
EdgeId = int


@dataclass(frozen=True)
class Edge:
    src: NodeId
    dst: NodeId
    delay_ns: int


@dataclass
class Topology:
    """Raw, unchecked topology as read from a file or built by hand."""

    nodes: list[NodeId]
    edges: list[tuple[NodeId, NodeId, int]]
    proc_delay_ns: dict[NodeId, int] = field(default_factory=dict)
    default_proc_delay_ns: int = 0


@dataclass(frozen=True)
class ValidatedTopology:
    nodes: tuple[NodeId, ...]
    edges: tuple[Edge, ...]
    proc_delay_ns: Mapping[NodeId, int]
    node_index: Mapping[NodeId, int] = field(init=False, repr=False, compare=False)
    edge_index: Mapping[tuple[NodeId, NodeId], EdgeId] = field(init=False, repr=False, compare=False)
    out_edges: Mapping[NodeId, tuple[EdgeId, ...]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "node_index", {n: i for i, n in enumerate(self.nodes)})
        object.__setattr__(
            self, "edge_index", {(e.src, e.dst): i for i, e in enumerate(self.edges)}
        )
        out: dict[NodeId, list[EdgeId]] = {n: [] for n in self.nodes}
        for i, e in enumerate(self.edges):
            out[e.src].append(i)
        object.__setattr__(self, "out_edges", {n: tuple(v) for n, v in out.items()})

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge(self, eid: EdgeId) -> Edge:
        return self.edges[eid]

    def proc_delay(self, node: NodeId) -> int:
        return self.proc_delay_ns.get(node, 0)


@dataclass(frozen=True)
class Path:
    edges: tuple[EdgeId, ...]
    src: NodeId
    dst: NodeId

    def __len__(self) -> int:
        return len(self.edges)

    def nodes(self, topo: ValidatedTopology) -> list[NodeId]:
        out = [self.src]
        for eid in self.edges:
            out.append(topo.edges[eid].dst)
        return out

    def link_delays(self, topo: ValidatedTopology) -> list[int]:
        return [topo.edges[eid].delay_ns for eid in self.edges]

    def weight(self, topo: ValidatedTopology) -> int:
        return sum(self.link_delays(topo))

    def check(self, topo: ValidatedTopology) -> None:
        """Raise TopologyError unless this is a loop-free src->dst walk in topo."""
        if not self.edges:
            raise TopologyError("empty path")
        at = self.src
        seen = {at}
        for eid in self.edges:
            if not 0 <= eid < topo.num_edges:
                raise TopologyError(f"unknown edge id {eid}")
            e = topo.edges[eid]
            if e.src != at:
                raise TopologyError(f"edge {eid} ({e.src}->{e.dst}) does not leave {at}")
            if e.dst in seen:
                raise TopologyError(f"path revisits node {e.dst}")
            seen.add(e.dst)
            at = e.dst
        if at != self.dst:
            raise TopologyError(f"path ends at {at}, expected {self.dst}")


def validate_topology(raw: Topology) -> ValidatedTopology:
    node_set = set()
    for n in raw.nodes:
        if n in node_set:
            raise TopologyError(f"duplicate node {n!r}")
        node_set.add(n)

    seen: set[tuple[NodeId, NodeId]] = set()
    edges = []
    for src, dst, delay in raw.edges:
        if src == dst:
            raise SelfLoop(f"self-loop edge ({src!r}, {dst!r})")
        for n in (src, dst):
            if n not in node_set:
                raise DanglingNodeRef(f"edge ({src!r}, {dst!r}) references unknown node {n!r}")
        if delay <= 0:
            raise NonPositiveDelay(f"edge ({src!r}, {dst!r}) has non-positive delay {delay}")
        if (src, dst) in seen:
            raise DuplicateEdge(f"duplicate edge ({src!r}, {dst!r})")
        seen.add((src, dst))
        edges.append(Edge(src, dst, int(delay)))

    if raw.default_proc_delay_ns < 0:
        raise NonPositiveDelay(f"negative default processing delay {raw.default_proc_delay_ns}")
    proc = {n: raw.default_proc_delay_ns for n in raw.nodes}
    for n, d in raw.proc_delay_ns.items():
        if n not in node_set:
            raise DanglingNodeRef(f"processing delay given for unknown node {n!r}")
        if d < 0:
            raise NonPositiveDelay(f"node {n!r} has negative processing delay {d}")
        proc[n] = int(d)

    return ValidatedTopology(tuple(raw.nodes), tuple(edges), proc)


def shortest_path(topo: ValidatedTopology, src: NodeId, dst: NodeId) -> Path:
    """Dijkstra over link delays.

    Ties between equal-weight routes go to the one whose predecessor of the
    relaxed node has the smaller node ordinal, which makes the result
    independent of heap internals.
    """
    if src not in topo.node_index or dst not in topo.node_index:
        raise DanglingNodeRef(f"unknown node in query ({src!r}, {dst!r})")
    if src == dst:
        raise TopologyError("source and destination must differ")

    order = topo.node_index
    dist = {src: 0}
    pred: dict[NodeId, EdgeId] = {}
    done = set()
    heap = [(0, order[src], src)]
    while heap:
        d, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        for eid in topo.out_edges[u]:
            v = topo.edges[eid].dst
            if v in done:
                continue
            nd = d + topo.edges[eid].delay_ns
            old = dist.get(v)
            if old is None or nd < old or (
                nd == old and order[u] < order[topo.edges[pred[v]].src]
            ):
                dist[v] = nd
                pred[v] = eid
                heapq.heappush(heap, (nd, order[v], v))

    if dst not in done:
        raise Unreachable(f"no directed path from {src!r} to {dst!r}")
    edges = []
    at = dst
    while at != src:
        eid = pred[at]
        edges.append(eid)
        at = topo.edges[eid].src
    return Path(tuple(reversed(edges)), src, dst)


def link_delay_cycles(link_delay: int, t_cycle: int) -> int:
    """Number of whole cycles a link delay spans, ceil(link_delay / t_cycle).

    Both arguments must be in the same integer unit.
    """
    if t_cycle <= 0:
        raise ValueError("t_cycle must be positive")
    if link_delay < 0:
        raise ValueError("link_delay must be non-negative")
    return -(-link_delay // t_cycle)


def us_to_ns(value: float) -> int:
    return int(round(value * 1000))


def topology_from_dict(data: dict) -> ValidatedTopology:
    try:
        nodes = [str(n) for n in data["nodes"]]
        edges = [(str(e["src"]), str(e["dst"]), us_to_ns(e["delay_us"])) for e in data["edges"]]
    except (KeyError, TypeError) as exc:
        raise TopologyError(f"malformed topology document: missing {exc}") from exc
    proc = {str(k): us_to_ns(v) for k, v in data.get("proc_delay_us", {}).items()}
    default = us_to_ns(data.get("default_proc_delay_us", 0))
    return validate_topology(Topology(nodes, edges, proc, default))


def topology_to_dict(topo: ValidatedTopology) -> dict:
    out = {
        "nodes": list(topo.nodes),
        "edges": [
            {"src": e.src, "dst": e.dst, "delay_us": e.delay_ns / 1000} for e in topo.edges
        ],
    }
    proc = {n: d / 1000 for n, d in topo.proc_delay_ns.items() if d}
    if proc:
        out["proc_delay_us"] = proc
    return out


def load_topology(path: str | FsPath) -> ValidatedTopology:
    with open(path) as fh:
        return topology_from_dict(json.load(fh))


def save_topology(topo: ValidatedTopology, path: str | FsPath) -> None:
    with open(path, "w") as fh:
        json.dump(topology_to_dict(topo), fh, indent=2)
        fh.write("\n")


def build_topology(
    nodes: Sequence[NodeId],
    links: Sequence[tuple[NodeId, NodeId, int]],
    bidirectional: bool = False,
    proc_delay_ns: dict[NodeId, int] | None = None,
) -> ValidatedTopology:
    """Convenience constructor; with bidirectional=True each link yields two edges."""
    edges = []
    for src, dst, d in links:
        edges.append((src, dst, d))
        if bidirectional:
            edges.append((dst, src, d))
    return validate_topology(Topology(list(nodes), edges, dict(proc_delay_ns or {})))
