"""End-to-end planning of a structure: sequential, parallel, or in one piece."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from .decompose import Decomposition, Substructure, decompose, merge_substructures
from .milp import NoPlanError, PlanningInstance, PlanResult, plan_substructure
from .ordering import BuildOrder, ParallelSchedule, order_substructures, parallel_schedule
from .parallel import StagePlan, _with_blocks, assemble_global, plan_stages
from .simulate import ActionSchedule, concat, replay
from .world import HeightMap

log = logging.getLogger(__name__)


class ReplayMismatch(RuntimeError):
    """A finished plan does not rebuild its target when replayed."""


@dataclass
class SubstructureRow:
    """One line of the per-substructure report."""

    index: int
    makespan: int
    sum_of_costs: int
    solve_time: float
    total_solve_time: float
    variables: int = 0
    constraints: int = 0


@dataclass
class StructurePlan:
    target: HeightMap
    schedule: ActionSchedule
    rows: list = field(default_factory=list)  # SubstructureRow per planned piece
    order: Optional[BuildOrder] = None
    stages: Optional[list] = None  # StagePlan list in parallel mode
    decomposition: Optional[Decomposition] = None
    merges: list = field(default_factory=list)  # (unbuildable, partner) index pairs merged while planning

    @property
    def makespan(self) -> int:
        return self.schedule.makespan

    @property
    def sum_of_costs(self) -> int:
        return self.schedule.sum_of_costs

    @property
    def solve_time(self) -> float:
        """Sum over pieces of the time spent on each final model."""
        return sum(r.solve_time for r in self.rows)

    @property
    def total_solve_time(self) -> float:
        return sum(r.total_solve_time for r in self.rows)

    @property
    def n_substructures(self) -> int:
        return len(self.rows)


def _row(index: int, res: PlanResult) -> SubstructureRow:
    return SubstructureRow(index, res.makespan, res.objective, res.solve_time, res.total_solve_time,
                           res.model_size.get("variables", 0), res.model_size.get("constraints", 0))


def verify(start: HeightMap, schedule: ActionSchedule, target: HeightMap, max_robots: int) -> None:
    final = replay(start, schedule, max_robots=max_robots, floor=start)
    if final != target:
        raise ReplayMismatch("replayed schedule does not reproduce the target heightmap")


def plan_sequential(target: HeightMap, adapter=None, max_robots: int = 1, t_max: int = 200,
                    time_budget: float = 10_000.0) -> StructurePlan:
    """Decompose, order, and plan each substructure on top of the ones before it.

    A substructure with no plan on top of its predecessors is merged with
    the one planned just before it, and the union is planned from the
    world before that one.
    """
    d = decompose(target)
    order = order_substructures(d)
    empty = HeightMap.empty(target.dims)
    deadline = time.perf_counter() + time_budget
    done: list[tuple[Substructure, HeightMap, PlanResult]] = []  # (piece, world before it, plan)
    merges = []
    for sub in order.in_order():
        piece = sub
        while True:
            env = _with_blocks(done[-1][1], [done[-1][0]]) if done else empty
            try:
                res = plan_substructure(PlanningInstance(target.dims, env, _with_blocks(env, [piece]), max_robots),
                                        adapter, t_max=t_max, time_budget=deadline - time.perf_counter())
                break
            except NoPlanError:
                if not done:
                    raise
                prev = done.pop()[0]
                log.warning("substructure %d has no plan; merged with %d", piece.index, prev.index)
                merges.append((piece.index, prev.index))
                piece = merge_substructures(prev, piece)
        log.info("substructure %d: T=%d cost=%d", piece.index, res.makespan, res.objective)
        done.append((piece, env, res))
    schedule = concat([res.schedule for _, _, res in done])
    verify(empty, schedule, target, max_robots)
    rows = [_row(piece.index, res) for piece, _, res in done]
    return StructurePlan(target, schedule, rows, order=order, decomposition=d, merges=merges)


def plan_parallel(target: HeightMap, adapter=None, max_robots: int = 1, t_max: int = 200,
                  time_budget: float = 10_000.0) -> StructurePlan:
    """Plan stage by stage; members of one stage are built at the same time."""
    d = decompose(target)
    ps: ParallelSchedule = parallel_schedule(d)
    stages = [ps.stage_members(k) for k in range(len(ps.stages))]
    merges: list = []
    plans: list[StagePlan] = plan_stages(stages, HeightMap.empty(target.dims), adapter, max_robots,
                                         t_max, time_budget, merges)
    schedule = assemble_global(plans, HeightMap.empty(target.dims))
    verify(HeightMap.empty(target.dims), schedule, target, max_robots)
    rows = [_row(i, r) for p in plans for i, r in p.results.items()]
    return StructurePlan(target, schedule, rows, stages=plans, decomposition=d, merges=merges)


def plan_whole(target: HeightMap, adapter=None, max_robots: int = 1, t_max: int = 200,
               time_budget: float = 10_000.0) -> StructurePlan:
    """Single MILP for the full structure, no decomposition."""
    empty = HeightMap.empty(target.dims)
    res = plan_substructure(PlanningInstance(target.dims, empty, target, max_robots), adapter,
                            t_max=t_max, time_budget=time_budget)
    verify(empty, res.schedule, target, max_robots)
    return StructurePlan(target, res.schedule, [_row(0, res)])
