"""Independent checks of produced schedules.

Nothing here uses ResourceGrid or the schedulers: replay re-derives every
cycle and occupancy count from the raw solution, and the oracle enumerates
assignments on its own.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InstanceTooLarge, MalformedSolution
from .flow_model import FlowSpec, ValidatedConfig
from .net_model import Path, ValidatedTopology
from .scheduler import FlowSolution


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def delay_bounds(link_delays: Sequence[int], proc_delays: Sequence[int], t_cycle: int) -> tuple[int, int, int]:
    """Two-queue latency bounds: (max, min, jitter) for h hops."""
    h = len(link_delays)
    base = sum(link_delays) + sum(proc_delays)
    d_max = base + (h + 1) * t_cycle
    d_min = base + (h - 1) * t_cycle
    return d_max, d_min, d_max - d_min


def e2e_bounds(path: Path, topo: ValidatedTopology, cfg: ValidatedConfig) -> tuple[int, int, int]:
    """Analytic (d_max, d_min, jitter) in nanoseconds for a path.

    Processing delay is charged once per forwarding node, i.e. at the
    source of every traversed edge.
    """
    if not path.edges:
        raise ValueError("empty path")
    lds = [topo.edges[e].delay_ns for e in path.edges]
    pds = [topo.proc_delay(topo.edges[e].src) for e in path.edges]
    return delay_bounds(lds, pds, cfg.t_cycle_ns)


@dataclass(frozen=True)
class Violation:
    kind: str
    flow: str | None = None
    edge: int | None = None
    cycle: int | None = None
    observed: int | None = None
    bound: int | None = None

    def describe(self, topo: ValidatedTopology | None = None) -> str:
        parts = [self.kind]
        if self.flow is not None:
            parts.append(f"flow={self.flow}")
        if self.edge is not None:
            name = f"{topo.edges[self.edge].src}->{topo.edges[self.edge].dst}" if topo else self.edge
            parts.append(f"edge={name}")
        if self.cycle is not None:
            parts.append(f"cycle={self.cycle}")
        if self.observed is not None:
            parts.append(f"observed={self.observed}")
        if self.bound is not None:
            parts.append(f"bound={self.bound}")
        return " ".join(parts)


@dataclass(frozen=True)
class FlowReplay:
    e2e_delay_min_ns: int
    e2e_delay_max_ns: int
    jitter_ns: int
    deadline_met: bool
    realized_cycles: tuple[int, ...]


@dataclass
class VerificationReport:
    per_flow: dict[str, FlowReplay] = field(default_factory=dict)
    max_queue_occupancy: dict[tuple[int, int], int] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "per_flow": {
                f: {
                    "e2e_delay_min_us": r.e2e_delay_min_ns / 1000,
                    "e2e_delay_max_us": r.e2e_delay_max_ns / 1000,
                    "jitter_us": r.jitter_ns / 1000,
                    "deadline_met": r.deadline_met,
                }
                for f, r in self.per_flow.items()
            },
            "max_queue_occupancy": [[e, c, n] for (e, c), n in sorted(self.max_queue_occupancy.items())],
            "violations": [vars(v) for v in self.violations],
        }


def replay(topo: ValidatedTopology, flows: Iterable[FlowSpec], solutions: Iterable[FlowSolution],
           cfg: ValidatedConfig) -> VerificationReport:
    """Walk one hyper-cycle of every scheduled flow at cycle granularity.

    Each packet enters the first hop in the offset cycle, is carried over
    each link in whole cycles, waits in the receive queue until the cycle
    named by its tag, and is counted against that queue block for every
    period repetition. Arrival inside a cycle is taken at the cycle
    boundary, so delays are worst/best case over the intra-cycle position.
    """
    by_id = {f.id: f for f in flows}
    report = VerificationReport()
    occ: Counter = Counter()
    t = cfg.t_cycle_us
    t_ns = t * 1000
    beta = cfg.hyper_us // t
    max_wait = cfg.queue_num - 2
    bad = report.violations.append

    for sol in solutions:
        if not sol.scheduled:
            continue
        f = by_id.get(sol.flow)
        if f is None:
            bad(Violation("UnknownFlow", sol.flow))
            continue
        if f.path is None:
            raise MalformedSolution(f"flow {f.id} has no path")
        hops = len(f.path)
        if len(sol.deltas) != hops or (sol.transmit_cycles and len(sol.transmit_cycles) != hops):
            raise MalformedSolution(
                f"flow {f.id}: path has {hops} hops, solution has {len(sol.deltas)} shifts "
                f"and {len(sol.transmit_cycles)} tags"
            )
        stride = f.period_us // t
        if not 0 <= sol.offset < stride:
            bad(Violation("OffsetOutOfRange", f.id, observed=sol.offset, bound=stride - 1))

        lds = [_ceil_div(topo.edges[e].delay_ns, t_ns) for e in f.path.edges]
        tags = sol.transmit_cycles
        if not tags:
            tags, a = [], sol.offset
            for d, ld in zip(sol.deltas, lds):
                tags.append(a + d)
                a += d + ld

        arrive = sol.offset
        for k, (eid, tag, ld) in enumerate(zip(f.path.edges, tags, lds)):
            declared = sol.deltas[k]
            if not 0 <= declared <= max_wait:
                bad(Violation("DeltaOutOfRange", f.id, eid, tag % beta, declared, max_wait))
            wait = tag - arrive
            if wait < 0:
                bad(Violation("CausalityViolation", f.id, eid, tag % beta, tag, arrive))
            elif wait > max_wait and wait != declared:
                bad(Violation("DeltaOutOfRange", f.id, eid, tag % beta, wait, max_wait))
            if wait != declared:
                bad(Violation("TagMismatch", f.id, eid, tag % beta, wait, declared))
            for lam in range(cfg.hyper_us // f.period_us):
                occ[(eid, (tag + lam * stride) % beta)] += f.packets
            arrive = tag + ld

        span = arrive - sol.offset
        budget = f.deadline_us // t
        met = 1 + span <= budget
        if not met:
            bad(Violation("DeadlineMiss", f.id, observed=1 + span, bound=budget))
        # entry anywhere in the offset cycle, delivery anywhere in the arrival cycle
        d_max = (span + 1) * t_ns
        d_min = max(span - 1, 0) * t_ns
        jitter = d_max - d_min
        if jitter > 2 * t_ns:
            bad(Violation("JitterExceeded", f.id, observed=jitter, bound=2 * t_ns))
        report.per_flow[f.id] = FlowReplay(d_min, d_max, jitter, met, tuple(tags))

    for (eid, c), n in sorted(occ.items()):
        report.max_queue_occupancy[(eid, c)] = n
        if n > cfg.queue_len:
            bad(Violation("OccupancyOverflow", None, eid, c, n, cfg.queue_len))
    return report


@dataclass(frozen=True)
class OracleLimits:
    max_flows: int = 5
    max_hops: int = 4
    max_beta: int = 64
    max_queue_num: int = 4


def _placements(f: FlowSpec, topo: ValidatedTopology, cfg: ValidatedConfig):
    """Every feasible (offset, shifts) for one flow, deduplicated by grid footprint."""
    t = cfg.t_cycle_us
    t_ns = t * 1000
    beta = cfg.hyper_us // t
    stride = f.period_us // t
    budget = f.deadline_us // t
    lds = [_ceil_div(topo.edges[e].delay_ns, t_ns) for e in f.path.edges]
    seen = set()
    out = []
    for omega in range(stride):
        for deltas in itertools.product(range(cfg.queue_num - 1), repeat=len(lds)):
            if 1 + sum(lds) + sum(deltas) > budget:
                continue
            tags, a = [], omega
            for d, ld in zip(deltas, lds):
                tags.append(a + d)
                a += d + ld
            cells = tuple(
                eid * beta + c
                for eid, tag in zip(f.path.edges, tags)
                for c in range(tag % stride, beta, stride)
            )
            key = frozenset(cells)
            if key in seen:
                continue
            seen.add(key)
            out.append((cells, FlowSolution(f.id, omega, deltas, tuple(tags), True)))
    return out


def brute_force_max(flows: Sequence[FlowSpec], topo: ValidatedTopology, cfg: ValidatedConfig,
                    limits: OracleLimits = OracleLimits()) -> tuple[int, list[FlowSolution]]:
    """Exact maximum number of simultaneously schedulable flows.

    Depth-first over flows, each either skipped or given one of its
    feasible placements; branches that cannot beat the incumbent are cut.
    """
    beta = cfg.hyper_us // cfg.t_cycle_us
    if len(flows) > limits.max_flows:
        raise InstanceTooLarge(f"{len(flows)} flows > {limits.max_flows}")
    if beta > limits.max_beta:
        raise InstanceTooLarge(f"beta={beta} > {limits.max_beta}")
    if cfg.queue_num > limits.max_queue_num:
        raise InstanceTooLarge(f"N={cfg.queue_num} > {limits.max_queue_num}")
    for f in flows:
        if f.path is None or len(f.path) > limits.max_hops:
            raise InstanceTooLarge(f"flow {f.id} exceeds {limits.max_hops} hops or has no path")

    options = [_placements(f, topo, cfg) for f in flows]
    packets = [f.packets for f in flows]
    cap = cfg.queue_len
    occ = [0] * (topo.num_edges * beta)
    n = len(flows)
    best: list = [0, []]
    chosen: list[FlowSolution] = []

    def dfs(i: int) -> bool:
        if len(chosen) > best[0]:
            best[0], best[1] = len(chosen), list(chosen)
            if best[0] == n:
                return True
        if i == n or len(chosen) + (n - i) <= best[0]:
            return False
        pk = packets[i]
        for cells, sol in options[i]:
            if all(occ[c] + pk <= cap for c in cells):
                for c in cells:
                    occ[c] += pk
                chosen.append(sol)
                done = dfs(i + 1)
                chosen.pop()
                for c in cells:
                    occ[c] -= pk
                if done:
                    return True
        return dfs(i + 1)

    dfs(0)
    return best[0], best[1]
