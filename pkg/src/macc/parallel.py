"""Stage-wise planning: members of one stage share a clock and avoid each other.

Members are planned one after another.  Each later member sees the earlier
members' schedules as frozen actions, so its robots dodge theirs and the
robot cap counts everyone.  A member that cannot be planned alongside the
others is deferred to a stage of its own right after.  A member that cannot
be planned even alone is merged with a member of the stage before it.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .decompose import Substructure, merge_substructures
from .milp import NoPlanError, PlanningInstance, PlanResult, plan_substructure
from .simulate import ActionSchedule, ReplayError, IllegalAction, compact_robots, concat, overlay, replay
from .world import HeightMap

log = logging.getLogger(__name__)


class AssemblyError(RuntimeError):
    def __init__(self, stage: int, detail: str):
        super().__init__(f"stage {stage}: {detail}")
        self.stage = stage


@dataclass
class StagePlan:
    stage: tuple[int, ...]  # members planned in this stage, in planning order
    member_schedules: dict  # index -> ActionSchedule padded to the stage clock
    merged: ActionSchedule
    env_before: HeightMap
    env_after: HeightMap
    results: dict = field(default_factory=dict)  # index -> PlanResult
    deferred: tuple[int, ...] = ()
    substructures: tuple = ()  # the planned members themselves

    @property
    def makespan(self) -> int:
        return self.merged.makespan

    @property
    def sum_of_costs(self) -> int:
        return self.merged.sum_of_costs

    @property
    def solve_time(self) -> float:
        return sum(r.solve_time for r in self.results.values())

    @property
    def total_solve_time(self) -> float:
        return sum(r.total_solve_time for r in self.results.values())


def _with_blocks(env: HeightMap, subs: Sequence[Substructure]) -> HeightMap:
    h = env.heights.copy()
    for s in subs:
        for b in s.blocks:
            h[b.x, b.y] = max(h[b.x, b.y], b.z)
    return env.with_heights(h)


def plan_stage(stage: Sequence[Substructure], env: HeightMap, adapter=None, max_robots: int = 1,
               t_max: int = 200, time_budget: float = 10_000.0) -> StagePlan:
    """Plan every member of ``stage`` on a shared clock starting from ``env``.

    Members are taken in index order.  Member k must reach ``env`` plus
    members 0..k while the schedules of members 0..k-1 run unchanged.  A
    member with no plan up to ``t_max`` is left out and listed in
    ``deferred``; the timeout of the solver is not a deferral and propagates.
    """
    members = sorted(stage, key=lambda s: s.index)
    deadline = time.perf_counter() + time_budget
    planned: list[Substructure] = []
    schedules: dict = {}
    results: dict = {}
    deferred = []
    frozen: Optional[ActionSchedule] = None
    for sub in members:
        target = _with_blocks(env, planned + [sub])
        inst = PlanningInstance(env.dims, env, target, max_robots, frozen_actions=frozen)
        try:
            res = plan_substructure(inst, adapter, t_max=t_max, time_budget=deadline - time.perf_counter())
        except NoPlanError:
            log.info("substructure %d deferred: no joint plan up to T=%d", sub.index, t_max)
            deferred.append(sub.index)
            continue
        planned.append(sub)
        results[sub.index] = res
        schedules[sub.index] = res.schedule
        frozen = overlay(list(schedules.values())) if len(schedules) > 1 else res.schedule
        # keep the frozen schedule as small as the cap demands
        frozen = compact_robots(frozen)
    makespan = max((s.makespan for s in schedules.values()), default=0)
    padded = {i: s.padded(makespan, s.n_robots) for i, s in schedules.items()}
    merged = compact_robots(overlay(list(padded.values()))) if padded else ActionSchedule.empty()
    env_after = _with_blocks(env, planned)
    try:
        final = replay(env, merged, max_robots=max_robots, floor=env)
    except (IllegalAction, ReplayError) as exc:
        raise AssemblyError(-1, f"merged stage schedule does not replay: {exc}") from exc
    if final != env_after:
        raise AssemblyError(-1, "merged stage schedule misses the stage target")
    return StagePlan(tuple(s.index for s in planned), padded, merged, env, env_after, results, tuple(deferred),
                     tuple(planned))


def _partner(failed: Substructure, candidates: Sequence[Substructure]) -> Substructure:
    """The candidate touching ``failed`` along the most column edges; later index on ties."""
    cols = failed.columns()

    def touching(s: Substructure) -> int:
        return sum(abs(x - u) + abs(y - v) <= 1 for x, y in s.columns() for u, v in cols)

    return max(candidates, key=lambda s: (touching(s), s.index))


def plan_stages(stages: Sequence[Sequence[Substructure]], start: HeightMap, adapter=None,
                max_robots: int = 1, t_max: int = 200, time_budget: float = 10_000.0,
                merges: Optional[list] = None) -> list[StagePlan]:
    """Plan stages in build order; deferred members form a new stage right after their own.

    A member with no plan even alone cannot be built on top of what came
    before it.  It is merged with the member of the previous stage it
    touches most, and that stage is planned again from its own start.
    Pairs (unbuildable, partner) are appended to ``merges`` when given.
    """
    queue = [list(s) for s in stages]
    deadline = time.perf_counter() + time_budget
    plans: list[StagePlan] = []
    env = start
    while queue:
        members = queue.pop(0)
        plan = plan_stage(members, env, adapter, max_robots, t_max, deadline - time.perf_counter())
        by_index = {s.index: s for s in members}
        if plan.deferred and not plan.stage:
            if not plans:
                raise NoPlanError(f"substructures {list(plan.deferred)} have no plan even alone")
            prev = plans.pop()
            failed = by_index[plan.deferred[0]]
            partner = _partner(failed, prev.substructures)
            log.warning("substructure %d has no plan; merged with %d", failed.index, partner.index)
            if merges is not None:
                merges.append((failed.index, partner.index))
            if len(plan.deferred) > 1:
                queue.insert(0, [by_index[i] for i in plan.deferred[1:]])
            rest = [s for s in prev.substructures if s.index != partner.index]
            queue.insert(0, rest + [merge_substructures(partner, failed)])
            env = prev.env_before
            continue
        if plan.deferred:
            queue.insert(0, [by_index[i] for i in plan.deferred])
        plans.append(plan)
        env = plan.env_after
    return plans


def assemble_global(stages: Sequence[StagePlan], start: Optional[HeightMap] = None) -> ActionSchedule:
    """Concatenate stage schedules on one clock and check each stage by replay."""
    if not stages:
        return ActionSchedule.empty()
    env = start if start is not None else stages[0].env_before
    for k, plan in enumerate(stages):
        if env != plan.env_before:
            raise AssemblyError(k, "stage starts from a different world than its predecessor left")
        try:
            env = replay(env, plan.merged)
        except (IllegalAction, ReplayError) as exc:
            raise AssemblyError(k, str(exc)) from exc
        if not np.array_equal(env.heights, plan.env_after.heights):
            raise AssemblyError(k, "replay does not reach the stage target")
    return concat([p.merged for p in stages])


def stage_report(stages: Sequence[StagePlan]) -> list[dict]:
    rows = []
    for k, plan in enumerate(stages):
        rows.append({
            "stage": k,
            "members": list(plan.stage),
            "deferred": list(plan.deferred),
            "member_makespan": {i: r.makespan for i, r in plan.results.items()},
            "member_sum_of_costs": {i: r.objective for i, r in plan.results.items()},
            "makespan": plan.makespan,
            "sum_of_costs": plan.sum_of_costs,
            "solve_time": round(plan.solve_time, 6),
            "total_solve_time": round(plan.total_solve_time, 6),
        })
    return rows
