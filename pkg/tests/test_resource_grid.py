import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from csqf.errors import HopOutOfRange, IndexOutOfRange
from csqf.net_model import Path, build_topology
from csqf.resource_grid import ResourceGrid, arrival_cycle, occupied_cycles

T_NS = 125_000


@pytest.fixture
def fig7():
    # e1 and e2 links each take two cycles
    topo = build_topology(["A", "B", "C", "D"], [("A", "B", 2 * T_NS), ("B", "C", 2 * T_NS), ("C", "D", T_NS)])
    return topo, Path((0, 1, 2), "A", "D")


def test_arrival_first_hop_is_offset(fig7):
    topo, path = fig7
    assert arrival_cycle(0, path, [], 1, topo, T_NS) == 0
    assert arrival_cycle(4, path, [], 1, topo, T_NS) == 4


def test_arrival_fig7(fig7):
    topo, path = fig7
    deltas = [0, 1, 0]
    a2 = arrival_cycle(0, path, deltas, 2, topo, T_NS)
    assert (a2, a2 + deltas[1]) == (2, 3)
    a3 = arrival_cycle(0, path, deltas, 3, topo, T_NS)
    assert (a3, a3 + deltas[2]) == (5, 5)


def test_arrival_hop_out_of_range(fig7):
    topo, path = fig7
    with pytest.raises(HopOutOfRange):
        arrival_cycle(0, path, [0, 0, 0], 4, topo, T_NS)
    with pytest.raises(HopOutOfRange):
        arrival_cycle(0, path, [0, 0, 0], 0, topo, T_NS)


def test_occupied_cycles():
    assert occupied_cycles(3, 4000, 125, 32000) == [3, 35, 67, 99, 131, 163, 195, 227]
    assert occupied_cycles(3, 32000, 125, 32000) == [3]
    assert sorted(occupied_cycles(255, 16000, 125, 32000)) == [127, 255]


def test_claim_on_empty_grid():
    g = ResourceGrid(2, 8, 10)
    assert g.try_claim("f", 0, [1, 5], 1)
    assert g.occupancy(0, 1) == 1 and g.occupancy(0, 5) == 1 and g.occupancy(1, 1) == 0


def test_claim_rejected_at_capacity_leaves_grid_unchanged():
    g = ResourceGrid(1, 4, 10)
    assert g.try_claim("full", 0, [2], 10)
    before = g.snapshot()
    assert not g.try_claim("f", 0, [0, 2], 1)
    assert g.snapshot() == before

    g = ResourceGrid(1, 4, 10)
    g.try_claim("nine", 0, [0], 9)
    before = g.snapshot()
    assert not g.try_claim("f", 0, [0], 3)
    assert g.snapshot() == before


def test_release():
    g = ResourceGrid(1, 4, 10)
    empty = g.snapshot()
    g.try_claim("a", 0, [1], 1)
    g.release("a")
    assert g.snapshot() == empty
    g.release("ghost")
    assert g.snapshot() == empty

    g.try_claim("a", 0, [1], 1)
    g.try_claim("b", 0, [1], 1)
    assert g.occupancy(0, 1) == 2
    g.release("a")
    assert g.occupancy(0, 1) == 1


def test_occupancy_bounds():
    g = ResourceGrid(1, 4, 10)
    assert g.occupancy(0, 0) == 0
    g.try_claim("a", 0, [3], 2)
    assert g.occupancy(0, 3) == 2
    with pytest.raises(IndexOutOfRange):
        g.occupancy(0, 4)
    with pytest.raises(IndexOutOfRange):
        g.occupancy(1, 0)


def test_class_max_matches_explicit_scan():
    rng = np.random.default_rng(3)
    g = ResourceGrid(1, 32, 10)
    g.counts[0] = rng.integers(0, 10, size=32)
    for stride in (1, 2, 4, 8, 16, 32):
        cm = g.class_max(0, stride)
        for c in range(stride):
            assert cm[c] == max(g.counts[0, c::stride])


def test_copy_is_independent():
    g = ResourceGrid(1, 4, 10)
    g.try_claim("a", 0, [0], 1)
    h = g.copy()
    h.try_claim("a", 0, [1], 1)
    h.release("a")
    assert g.occupancy(0, 0) == 1 and g.is_claimed("a")
    assert g.consistent() and h.consistent()


def test_dump_csv(tmp_path):
    topo = build_topology(["A", "B"], [("A", "B", 1)])
    g = ResourceGrid(1, 2, 10)
    g.try_claim("a", 0, [1], 3)
    p = tmp_path / "g.csv"
    g.dump_csv(p, topo)
    assert p.read_text().splitlines() == ["edge,cycle_index,occupancy", "A->B,0,0", "A->B,1,3"]


class GridMachine(RuleBasedStateMachine):
    """Random claim/release sequences never break the capacity or the ledger."""

    def __init__(self):
        super().__init__()
        self.grid = ResourceGrid(3, 16, 4)
        self.n = 0

    @rule(edge=st.integers(0, 2), stride=st.sampled_from([1, 2, 4, 8, 16]),
          start=st.integers(0, 15), packets=st.integers(1, 5))
    def claim(self, edge, stride, start, packets):
        before = self.grid.snapshot()
        cycles = range(start % stride, 16, stride)
        fits = all(self.grid.counts[edge, c] + packets <= 4 for c in cycles)
        self.n += 1
        ok = self.grid.try_claim(f"f{self.n}", edge, cycles, packets)
        assert ok == fits
        if not ok:
            assert self.grid.snapshot() == before

    @rule(k=st.integers(0, 40))
    def release(self, k):
        self.grid.release(f"f{k}")

    @invariant()
    def safe_and_consistent(self):
        assert self.grid.consistent()


TestGridMachine = GridMachine.TestCase
TestGridMachine.settings = settings(max_examples=60, stateful_step_count=40, deadline=None)


@given(st.integers(0, 10_000), st.sampled_from([1000, 2000, 4000, 8000]))
def test_periodicity(tx, period):
    cycles = occupied_cycles(tx, period, 125, 8000)
    assert len(set(cycles)) == 8000 // period
    stride = period // 125
    assert all(c % stride == tx % stride for c in cycles)
