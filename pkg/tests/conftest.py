import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from csqf.flow_model import FlowSpec, ScheduleConfig, route_flows, validate_config  # noqa: E402
from csqf.net_model import build_topology  # noqa: E402
from csqf.workload import rng_for  # noqa: E402

T_US = 125


def line_topology(n_nodes, hop_cycles=1, t_us=T_US):
    """n0 -> n1 -> ... with every link exactly ``hop_cycles`` cycles long."""
    nodes = [f"n{i}" for i in range(n_nodes)]
    delay = max(1, hop_cycles * t_us * 1000)
    return build_topology(nodes, [(a, b, delay) for a, b in zip(nodes, nodes[1:])], bidirectional=True)


def make_flows(topo, specs):
    """specs: (id, src, dst, period_us, packets, deadline_us[, release_us])."""
    flows = [FlowSpec(*s[:6], release_us=s[6] if len(s) > 6 else 0) for s in specs]
    return route_flows(flows, topo)


def make_cfg(flows, **kw):
    base = dict(t_cycle_us=T_US, queue_len=10, queue_num=3)
    base.update(kw)
    return validate_config(flows, ScheduleConfig(**base))


def tiny_instance(seed):
    """Contended instance inside the oracle limits: <= 4 flows, <= 3 hops, beta <= 32."""
    rng = rng_for(seed)
    n = int(rng.integers(3, 5))
    topo = line_topology(n, hop_cycles=int(rng.integers(1, 3)))
    specs = []
    for i in range(int(rng.integers(2, 5))):
        a, b = sorted(rng.choice(n, size=2, replace=False))
        period = int(rng.choice([250, 500, 1000, 4000]))
        deadline = int(rng.choice([750, 1000, 2000]))
        specs.append((f"f{i}", f"n{a}", f"n{b}", period, int(rng.integers(1, 3)), deadline))
    flows = make_flows(topo, specs)
    cfg = make_cfg(flows, queue_len=int(rng.integers(1, 3)), queue_num=int(rng.integers(2, 5)))
    return topo, flows, cfg


# -- acceptance summary ---------------------------------------------------

ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[number] = (passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def record():
    return record_criterion
