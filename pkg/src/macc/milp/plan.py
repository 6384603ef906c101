"""Makespan search over the MILP and decoding of solutions into schedules."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

from ..simulate import DIR_ORDER, DIRS, WAIT, Action, ActionSchedule, EXIT, enter
from .model import OUT, MilpModel, PlanningInstance, build_model
from .solvers import INFEASIBLE, OPTIMAL, TIMEOUT, HighsAdapter, SolverVerdict, relaxation_feasible

log = logging.getLogger(__name__)

# consecutive infeasible makespans before relaxations at longer horizons are tried
PROBE_AFTER = 4
PROBE_FACTOR = 4


class NoPlanError(RuntimeError):
    """No feasible makespan up to the horizon limit."""


class PlanTimeout(RuntimeError):
    """The time budget ran out before a makespan was proven feasible."""


class DecodeError(RuntimeError):
    """The assignment does not split into robot paths; indicates a model bug."""


@dataclass
class Attempt:
    makespan: int
    status: str
    seconds: float
    variables: int
    constraints: int
    probe: bool = False  # LP relaxation at a longer horizon, not a makespan candidate


@dataclass
class PlanResult:
    schedule: ActionSchedule
    objective: int
    attempts: list = field(default_factory=list)
    model_size: dict = field(default_factory=dict)

    @property
    def makespan(self) -> int:
        return self.schedule.makespan

    @property
    def solve_time(self) -> float:
        """Time spent on the final, feasible model."""
        return self.attempts[-1].seconds if self.attempts else 0.0

    @property
    def total_solve_time(self) -> float:
        """Time spent on every makespan tried, including the final one."""
        return sum(a.seconds for a in self.attempts)


def _direction(dims, c, q) -> str:
    Y = dims.y_size
    (x, y), (qx, qy) = divmod(c, Y), divmod(q, Y)
    for d, (dx, dy) in DIRS.items():
        if (x + dx, y + dy) == (qx, qy):
            return d
    raise DecodeError(f"cells {c} and {q} are not adjacent")


def _off_grid_dir(dims, c) -> str:
    x, y = divmod(c, dims.y_size)
    for d in DIR_ORDER:
        dx, dy = DIRS[d]
        if not dims.contains(x + dx, y + dy):
            return d
    raise DecodeError(f"cell {c} is not on the border")


def _arc_action(dims, arc) -> Action:
    if arc.kind == "wait":
        return WAIT
    if arc.kind == "enter":
        c, _, w = arc.dst
        return enter(*divmod(c, dims.y_size), carrying=bool(w))
    if arc.kind == "exit":
        return EXIT
    if arc.kind == "move":
        return Action("move", _direction(dims, arc.src[0], arc.dst[0]))
    if arc.target is None:
        return Action(arc.kind, _off_grid_dir(dims, arc.src[0]))
    return Action(arc.kind, _direction(dims, arc.src[0], arc.target))


def decode(model: MilpModel, verdict: SolverVerdict) -> ActionSchedule:
    """Trace unit flows from the outside node back to it and emit one action row per robot.

    Robot ids are reused: a robot that exits at step t may enter again from
    step t+1 on; the lowest free id is taken first.
    """
    if verdict.status != OPTIMAL:
        raise DecodeError(f"cannot decode a {verdict.status} verdict")
    dims = model.instance.dims
    x = verdict.assignment
    chosen = [[] for _ in range(model.T)]
    for i, arc in enumerate(model.arcs):
        if x[model.arc_offset + i] > 0.5:
            chosen[arc.t].append(arc)
    rows: list[list[Action]] = []
    at: dict = {}  # node -> robot id
    free_from: dict = {}  # robot id -> first step it may enter again
    for t in range(model.T):
        by_src: dict = {}
        entering = []
        for arc in chosen[t]:
            if arc.src is OUT:
                entering.append(arc)
            elif arc.src in by_src:
                raise DecodeError(f"two arcs leave node {arc.src} at step {t}")
            else:
                by_src[arc.src] = arc
        if set(by_src) != set(at):
            raise DecodeError(f"step {t}: arcs leave {sorted(set(by_src) - set(at))}, "
                              f"robots idle at {sorted(set(at) - set(by_src))}")
        nxt = {}
        for node, rid in at.items():
            arc = by_src[node]
            rows[rid][t] = _arc_action(dims, arc)
            if arc.dst is OUT:
                free_from[rid] = t + 1
            else:
                nxt[arc.dst] = rid
        for arc in sorted(entering, key=lambda a: a.dst):
            rid = next((r for r in range(len(rows)) if free_from.get(r, 0) <= t and r not in nxt.values()
                        and r not in at.values()), None)
            if rid is None:
                rid = len(rows)
                rows.append([WAIT] * model.T)
            free_from[rid] = model.T + 1
            rows[rid][t] = _arc_action(dims, arc)
            nxt[arc.dst] = rid
        at = nxt
    if at:
        raise DecodeError(f"robots still inside at T={model.T}")
    schedule = ActionSchedule(model.T, rows)
    if schedule.sum_of_costs != verdict.objective_value:
        raise DecodeError(f"decoded cost {schedule.sum_of_costs} != objective {verdict.objective_value}")
    return schedule


def makespan_lower_bound(inst: PlanningInstance) -> int:
    """Admissible horizon for the first solve.

    A changed column at border distance d needs a robot next to it, at
    border distance >= max(d - 1, 0), standing at height >= target - 1; the
    robot enters, reaches that spot, acts once and leaves again, and every
    move gains at most one level beyond the one level of entering.
    """
    dims = inst.dims
    best = 0
    delta = inst.target_env.heights != inst.start_env.heights
    for x, y in zip(*delta.nonzero()):
        d = max(dims.border_distance(int(x), int(y)) - 1, 0)
        climb = max(int(inst.target_env.heights[x, y]) - 2, 0)
        best = max(best, 3 + 2 * max(d, climb))
    if inst.frozen_actions is not None:
        best = max(best, inst.frozen_actions.makespan)
    return best


def _relaxation_infeasible(inst: PlanningInstance, T: int, deadline: float, attempts: list) -> bool:
    """True when the LP relaxation at makespan ``T`` has no solution, a proof for every T' <= T."""
    remaining = deadline - time.perf_counter()
    if remaining <= 0:
        return False
    t0 = time.perf_counter()
    model = build_model(inst.with_makespan(T))
    feasible = relaxation_feasible(model, remaining)
    seconds = time.perf_counter() - t0
    status = {True: OPTIMAL, False: INFEASIBLE, None: TIMEOUT}[feasible]
    attempts.append(Attempt(T, status, seconds, model.n_vars, model.n_constraints, probe=True))
    log.info("relaxation T=%d %s %.2fs", T, status, seconds)
    return feasible is False


def plan_substructure(inst: PlanningInstance, adapter=None, t_max: int = 200,
                      time_budget: float = 10_000.0, t_min: Optional[int] = None) -> PlanResult:
    """Solve at increasing makespans from a cheap lower bound; decode the first feasible optimum."""
    adapter = adapter or HighsAdapter()
    if inst.start_env == inst.target_env and not (inst.frozen_actions and inst.frozen_actions.makespan):
        return PlanResult(ActionSchedule.empty(), 0)
    attempts: list[Attempt] = []
    deadline = time.perf_counter() + time_budget
    T = max(1, makespan_lower_bound(inst), t_min or 0)
    misses = 0
    while T <= t_max:
        if misses == PROBE_AFTER:
            # a plan of length T extends to T+1 by idling outside, so an infeasible
            # relaxation at a longer horizon rules out every makespan up to it
            probe = T
            while probe < t_max:
                probe = min(t_max, PROBE_FACTOR * probe)
                if not _relaxation_infeasible(inst, probe, deadline, attempts):
                    break
                T = probe + 1
            if T > t_max:
                break
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            raise PlanTimeout(f"time budget exhausted before T={T}")
        t0 = time.perf_counter()
        model = build_model(inst.with_makespan(T))
        verdict = adapter.solve(model, remaining)
        seconds = time.perf_counter() - t0
        attempts.append(Attempt(T, verdict.status, seconds, model.n_vars, model.n_constraints))
        log.info("T=%d %s obj=%s vars=%d rows=%d %.2fs", T, verdict.status, verdict.objective_value,
                 model.n_vars, model.n_constraints, seconds)
        if verdict.status == OPTIMAL:
            schedule = decode(model, verdict)
            return PlanResult(schedule, verdict.objective_value, attempts, model.metadata())
        if verdict.status == TIMEOUT:
            err = PlanTimeout(f"solver timed out at T={T}")
            err.attempts = attempts
            raise err
        assert verdict.status == INFEASIBLE
        misses += 1
        T += 1
    err = NoPlanError(f"no feasible plan with makespan <= {t_max}")
    err.attempts = attempts
    raise err
