"""Edge x cycle queue resource blocks with bounded-queue admission."""
from __future__ import annotations

import csv
from typing import Iterable, Sequence

import numpy as np

from .errors import HopOutOfRange, IndexOutOfRange
from .net_model import Path, ValidatedTopology, link_delay_cycles


def arrival_cycle(offset: int, path: Path, deltas: Sequence[int], hop_index: int,
                  topo: ValidatedTopology, t_cycle_ns: int) -> int:
    """Unreduced cycle in which a flow reaches the output port of hop ``hop_index``.

    Hops are 1-based. The first hop is reached in the offset cycle; each
    later hop adds the previous link's delay in cycles and the previous
    hop's shift.
    """
    if not 1 <= hop_index <= len(path):
        raise HopOutOfRange(f"hop {hop_index} outside 1..{len(path)}")
    a = offset
    for k in range(hop_index - 1):
        a += link_delay_cycles(topo.edges[path.edges[k]].delay_ns, t_cycle_ns) + deltas[k]
    return a


def occupied_cycles(transmit_cycle: int, period_us: int, t_cycle_us: int, hyper_us: int) -> list[int]:
    """Grid indices used by a flow transmitting in ``transmit_cycle`` of every period."""
    beta = hyper_us // t_cycle_us
    stride = period_us // t_cycle_us
    return [(transmit_cycle + lam * stride) % beta for lam in range(hyper_us // period_us)]


class ResourceGrid:
    """Packet counters per (edge, cycle index mod beta).

    Per-edge claims are atomic; a whole-path admission is made
    transactional by the caller through :meth:`release`.
    """

    def __init__(self, num_edges: int, beta: int, queue_len: int):
        self.beta = beta
        self.queue_len = queue_len
        self.counts = np.zeros((num_edges, beta), dtype=np.int32)
        self.claims: dict[str, list[tuple[int, tuple[int, ...], int]]] = {}

    @property
    def num_edges(self) -> int:
        return self.counts.shape[0]

    def occupancy(self, edge: int, t: int) -> int:
        if not 0 <= t < self.beta:
            raise IndexOutOfRange(f"cycle {t} outside 0..{self.beta - 1}")
        if not 0 <= edge < self.num_edges:
            raise IndexOutOfRange(f"edge {edge} outside 0..{self.num_edges - 1}")
        return int(self.counts[edge, t])

    def try_claim(self, flow: str, edge: int, cycles: Iterable[int], packets: int) -> bool:
        idx = np.fromiter((c % self.beta for c in cycles), dtype=np.intp)
        if packets < 1 or idx.size == 0:
            raise ValueError("a claim needs at least one packet and one cycle")
        idx = np.unique(idx)
        row = self.counts[edge]
        if int(row[idx].max()) + packets > self.queue_len:
            return False
        row[idx] += packets
        self.claims.setdefault(flow, []).append((edge, tuple(int(i) for i in idx), packets))
        return True

    def release(self, flow: str) -> None:
        for edge, idx, packets in self.claims.pop(flow, ()):
            self.counts[edge, list(idx)] -= packets

    def is_claimed(self, flow: str) -> bool:
        return flow in self.claims

    def class_max(self, edge: int, stride: int) -> np.ndarray:
        """Highest occupancy within each residue class mod ``stride`` on ``edge``.

        A flow with period ``stride`` cycles whose transmit cycle is ``c``
        occupies exactly the residue class ``c % stride``, so it fits iff
        ``class_max(edge, stride)[c % stride] + packets <= queue_len``.
        """
        return self.counts[edge].reshape(self.beta // stride, stride).max(axis=0)

    def recompute(self) -> np.ndarray:
        """Occupancy rebuilt from the claim ledger alone."""
        out = np.zeros_like(self.counts)
        for claims in self.claims.values():
            for edge, idx, packets in claims:
                out[edge, list(idx)] += packets
        return out

    def consistent(self) -> bool:
        return (
            bool(np.array_equal(self.recompute(), self.counts))
            and int(self.counts.min(initial=0)) >= 0
            and int(self.counts.max(initial=0)) <= self.queue_len
        )

    def copy(self) -> "ResourceGrid":
        new = ResourceGrid.__new__(ResourceGrid)
        new.beta = self.beta
        new.queue_len = self.queue_len
        new.counts = self.counts.copy()
        new.claims = {f: list(c) for f, c in self.claims.items()}
        return new

    def snapshot(self) -> tuple[bytes, tuple]:
        """Hashable summary used to assert bit-identical state."""
        ledger = tuple(sorted((f, tuple(c)) for f, c in self.claims.items()))
        return self.counts.tobytes(), ledger

    def dump_csv(self, path, topo: ValidatedTopology | None = None) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge", "cycle_index", "occupancy"])
            for e in range(self.num_edges):
                name = f"{topo.edges[e].src}->{topo.edges[e].dst}" if topo else e
                for t in range(self.beta):
                    w.writerow([name, t, int(self.counts[e, t])])
