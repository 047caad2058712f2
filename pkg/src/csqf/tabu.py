"""Flow-ordering tabu search on top of FO-CS.

Random numbers come from numpy's PCG64 seeded with the caller's seed, so a
run is reproducible across platforms.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .flow_model import FlowSpec, ValidatedConfig
from .net_model import ValidatedTopology
from .resource_grid import ResourceGrid
from .scheduler import BatchResult, FlowSolution, new_grid, run_batch, schedule_focs

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TabuParams:
    max_iterations: int = 1000
    max_no_improve: int = 100
    removal_fraction: float = 0.1
    tabu_capacity: int = 50
    min_removed: int = 1
    # attempts to draw a removal set that is not tabu before skipping the move
    max_redraws: int = 20

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_no_improve < 1:
            raise ValueError("max_iterations and max_no_improve must be >= 1")
        if not 0 < self.removal_fraction <= 1:
            raise ValueError("removal_fraction must lie in (0, 1]")


PAPER_PARAMS = TabuParams(max_iterations=1000, max_no_improve=100)
DESK_PARAMS = TabuParams(max_iterations=100, max_no_improve=20)


@dataclass
class TabuState:
    current_order: list[str]
    current: dict[str, FlowSolution]
    grid: ResourceGrid
    best_order: list[str]
    best: dict[str, FlowSolution]
    tabu_list: deque
    iteration: int = 0
    no_improve: int = 0
    rng_seed: int = 0
    history: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def current_count(self) -> int:
        return len(self.current)

    @property
    def best_count(self) -> int:
        return len(self.best)


def _removal_size(n_scheduled: int, params: TabuParams) -> int:
    if n_scheduled == 0:
        return 0
    k = int(params.removal_fraction * n_scheduled)
    return min(n_scheduled, max(params.min_removed, k))


def neighbor(state: TabuState, flows: dict[str, FlowSpec], topo: ValidatedTopology,
             cfg: ValidatedConfig, params: TabuParams, rng: np.random.Generator):
    """One exchange move from the current solution.

    Releases a random subset of the scheduled flows, tries to admit the
    failed flows in random order, then re-admits the removed ones into
    whatever space is left. Returns ``(order, solutions, grid)`` for the
    move, or ``None`` when every drawn removal set was tabu.
    """
    scheduled = [f for f in state.current_order if f in state.current]
    failed = [f for f in state.current_order if f not in state.current]
    k = _removal_size(len(scheduled), params)

    removed: list[str] = []
    for _ in range(params.max_redraws):
        idx = sorted(rng.choice(len(scheduled), size=k, replace=False)) if k else []
        removed = [scheduled[i] for i in idx]
        signature = tuple(sorted(removed))
        if signature not in state.tabu_list:
            break
    else:
        return None
    state.tabu_list.append(signature)

    grid = state.grid.copy()
    solutions = dict(state.current)
    for fid in removed:
        grid.release(fid)
        del solutions[fid]

    removed_set = set(removed)
    kept = [f for f in scheduled if f not in removed_set]
    retry = [failed[i] for i in rng.permutation(len(failed))]
    back = [removed[i] for i in rng.permutation(len(removed))]
    admitted, still_failed = [], []
    for fid in retry + back:
        sol = schedule_focs(flows[fid], grid, topo, cfg)
        if sol.scheduled:
            solutions[fid] = sol
            admitted.append(fid)
        else:
            still_failed.append(fid)
    return kept + admitted + still_failed, solutions, grid


def tabu_focs(flows: Sequence[FlowSpec], topo: ValidatedTopology, cfg: ValidatedConfig,
              params: TabuParams = DESK_PARAMS, seed: int = 0,
              progress=None) -> tuple[BatchResult, list[str], TabuState]:
    """Search flow orders for the largest FO-CS admission set.

    Starts from a uniformly random order. Each iteration applies one
    exchange move; a move that does not lose flows becomes the current
    solution. Stops after ``max_iterations`` moves or ``max_no_improve``
    moves without a new best. ``progress`` is called with
    ``(iteration, current_count, best_count)`` after every move.
    """
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(seed))
    by_id = {f.id: f for f in flows}
    order = [flows[i].id for i in rng.permutation(len(flows))]
    grid = new_grid(topo, cfg)
    init = run_batch([by_id[f] for f in order], grid, "focs", topo, cfg)
    current = {s.flow: s for s in init.scheduled}

    state = TabuState(
        current_order=order,
        current=current,
        grid=grid,
        best_order=list(order),
        best=dict(current),
        tabu_list=deque(maxlen=params.tabu_capacity),
        rng_seed=seed,
    )
    per_flow = dict(init.per_flow_runtime)

    while state.iteration < params.max_iterations and state.no_improve < params.max_no_improve:
        if state.best_count == len(flows):
            break
        state.iteration += 1
        move = neighbor(state, by_id, topo, cfg, params, rng)
        if move is not None:
            new_order, solutions, new_grid_ = move
            if len(solutions) >= state.current_count:
                state.current_order, state.current, state.grid = new_order, solutions, new_grid_
        if state.current_count > state.best_count:
            state.best_order = list(state.current_order)
            state.best = dict(state.current)
            state.no_improve = 0
        else:
            state.no_improve += 1
        state.history.append((state.iteration, state.current_count, state.best_count))
        log.debug("tabu iter=%d current=%d best=%d", *state.history[-1])
        if progress is not None:
            progress(*state.history[-1])

    result = BatchResult(
        scheduled=[state.best[f] for f in state.best_order if f in state.best],
        failed=[f for f in state.best_order if f not in state.best],
        per_flow_runtime=per_flow,
        total_runtime=time.perf_counter() - t0,
    )
    return result, state.best_order, state
