"""Per-flow cycle-tag computation (naive, FO, CS, FO-CS) and batch scheduling."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import FlowError, NotScheduled
from .flow_model import FlowSpec, ValidatedConfig
from .net_model import ValidatedTopology, link_delay_cycles
from .resource_grid import ResourceGrid

ALGORITHMS = ("naive", "fo", "cs", "focs")


@dataclass(frozen=True)
class FlowSolution:
    flow: str
    offset: int
    deltas: tuple[int, ...]
    transmit_cycles: tuple[int, ...]
    scheduled: bool

    def to_dict(self, beta: int) -> dict:
        return {
            "id": self.flow,
            "offset": self.offset,
            "deltas": list(self.deltas),
            "sid_tags": [c % beta for c in self.transmit_cycles],
            "transmit_cycles": list(self.transmit_cycles),
            "scheduled": self.scheduled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlowSolution":
        deltas = tuple(int(x) for x in d.get("deltas", ()))
        tx = d.get("transmit_cycles")
        return cls(
            flow=str(d["id"]),
            offset=int(d["offset"]),
            deltas=deltas,
            transmit_cycles=tuple(int(x) for x in tx) if tx is not None else (),
            scheduled=bool(d["scheduled"]),
        )


@dataclass
class BatchResult:
    scheduled: list[FlowSolution] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    per_flow_runtime: dict[str, float] = field(default_factory=dict)
    total_runtime: float = 0.0

    @property
    def count(self) -> int:
        return len(self.scheduled)

    def solution(self, flow_id: str) -> FlowSolution | None:
        for s in self.scheduled:
            if s.flow == flow_id:
                return s
        return None


def path_delay_cycles(flow: FlowSpec, topo: ValidatedTopology, cfg: ValidatedConfig) -> list[int]:
    if flow.path is None:
        raise FlowError(f"flow {flow.id} has no path")
    t_ns = cfg.t_cycle_ns
    return [link_delay_cycles(topo.edges[e].delay_ns, t_ns) for e in flow.path.edges]


def check_deadline(flow: FlowSpec, deltas: Sequence[int], topo: ValidatedTopology,
                   cfg: ValidatedConfig) -> bool:
    ldc = path_delay_cycles(flow, topo, cfg)
    return 1 + sum(ldc) + sum(deltas) <= cfg.deadline_cycles(flow.deadline_us)


def release_cycle(flow: FlowSpec, cfg: ValidatedConfig) -> int:
    return flow.release_us // cfg.t_cycle_us


def _search(flow: FlowSpec, grid: ResourceGrid, topo: ValidatedTopology, cfg: ValidatedConfig,
            offsets: np.ndarray, max_shift: int) -> FlowSolution:
    """Greedy cycle-shift walk for every candidate offset; keep the first that fits.

    For each offset the walk visits the path in order and, at every hop,
    takes the smallest shift in [0, max_shift] whose block still has room.
    Offsets are independent of each other, so they are evaluated together;
    the accepted offset is the smallest feasible one, exactly as a loop
    ``for offset in offsets`` would find it.
    """
    ldc = path_delay_cycles(flow, topo, cfg)
    stride = cfg.stride(flow.period_us)
    budget = cfg.deadline_cycles(flow.deadline_us)
    limit = grid.queue_len - flow.packets

    cur = offsets.copy()
    ok = np.ones(len(offsets), dtype=bool)
    chosen_per_hop = []
    for eid, hop_cycles in zip(flow.path.edges, ldc):
        free = grid.class_max(eid, stride) <= limit
        chosen = np.full(len(offsets), -1, dtype=np.int64)
        for d in range(max_shift + 1):
            hit = (chosen < 0) & free[(cur + d) % stride]
            chosen[hit] = d
        ok &= chosen >= 0
        d = np.maximum(chosen, 0)
        chosen_per_hop.append(d)
        cur = cur + d + hop_cycles
        ok &= 1 + cur - offsets <= budget
        if not ok.any():
            return FlowSolution(flow.id, int(offsets[0]), (), (), False)

    i = int(np.argmax(ok))
    omega = int(offsets[i])
    deltas = tuple(int(c[i]) for c in chosen_per_hop)
    tx = []
    a = omega
    for d, hop_cycles in zip(deltas, ldc):
        tx.append(a + d)
        a += d + hop_cycles

    for eid, c in zip(flow.path.edges, tx):
        if not grid.try_claim(flow.id, eid, range(c % stride, grid.beta, stride), flow.packets):
            grid.release(flow.id)
            raise RuntimeError(f"grid rejected a claim the search accepted for flow {flow.id}")
    return FlowSolution(flow.id, omega, deltas, tuple(tx), True)


def schedule_naive(flow, grid, topo, cfg) -> FlowSolution:
    """Transmit as released: no offset control, no cycle shift."""
    return _search(flow, grid, topo, cfg, np.array([release_cycle(flow, cfg)]), 0)


def schedule_cs(flow, grid, topo, cfg) -> FlowSolution:
    """Uncontrolled offset; shift each hop into a later receive queue when full."""
    return _search(flow, grid, topo, cfg, np.array([release_cycle(flow, cfg)]), cfg.max_shift)


def schedule_fo(flow, grid, topo, cfg) -> FlowSolution:
    """Search the first-hop offset over the whole period with all shifts at zero."""
    return _search(flow, grid, topo, cfg, np.arange(cfg.stride(flow.period_us)), 0)


def schedule_focs(flow, grid, topo, cfg) -> FlowSolution:
    """Offsets in ascending order; per offset, the greedy cycle-shift walk."""
    return _search(flow, grid, topo, cfg, np.arange(cfg.stride(flow.period_us)), cfg.max_shift)


SCHEDULERS = {
    "naive": schedule_naive,
    "fo": schedule_fo,
    "cs": schedule_cs,
    "focs": schedule_focs,
}


def new_grid(topo: ValidatedTopology, cfg: ValidatedConfig) -> ResourceGrid:
    return ResourceGrid(topo.num_edges, cfg.beta, cfg.queue_len)


def run_batch(flows: Sequence[FlowSpec], grid: ResourceGrid, algo: str,
              topo: ValidatedTopology, cfg: ValidatedConfig) -> BatchResult:
    try:
        schedule = SCHEDULERS[algo]
    except KeyError:
        raise ValueError(f"unknown algorithm {algo!r}; choose from {ALGORITHMS}") from None
    result = BatchResult()
    clock = time.perf_counter
    start = clock()
    for f in flows:
        t0 = clock()
        sol = schedule(f, grid, topo, cfg)
        result.per_flow_runtime[f.id] = clock() - t0
        if sol.scheduled:
            result.scheduled.append(sol)
        else:
            result.failed.append(f.id)
    result.total_runtime = clock() - start
    return result


def cycle_tags(sol: FlowSolution, beta: int) -> list[tuple[int, int]]:
    """Per-hop (hop number, transmit cycle mod beta) labels in path order."""
    if not sol.scheduled:
        raise NotScheduled(f"flow {sol.flow} is not scheduled")
    return [(k + 1, c % beta) for k, c in enumerate(sol.transmit_cycles)]
