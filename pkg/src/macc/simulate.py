"""Deterministic grid-world simulator, schedule files, metrics and a BFS oracle.

World rules, applied to all robots simultaneously each timestep:

* a robot outside may ``enter`` any border column of height <= 1, carrying a
  block or not, and a robot on such a column may ``exit``;
* ``move`` goes to a 4-neighbour whose height differs by at most one;
* ``pick`` takes the top block of a neighbour one level above the robot's
  column, ``place`` puts a block on a neighbour level with the robot's column;
* on a border column of height 0, pick/place pointing off the grid draw from
  or dump into the unlimited supply outside;
* no two robots share a column or swap columns, a column being picked or
  placed on holds no robot before or after the step, and at most one robot
  writes to a column per step.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .world import GridDims, HeightMap

log = logging.getLogger(__name__)

DIRS = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}
DIR_ORDER = ("N", "E", "S", "W")


@dataclass(frozen=True)
class Action:
    kind: str  # wait | move | pick | place | enter | exit
    dir: Optional[str] = None
    cell: Optional[tuple] = None  # enter only
    carrying: bool = False  # enter only

    def __post_init__(self):
        if self.kind not in ("wait", "move", "pick", "place", "enter", "exit"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.kind in ("move", "pick", "place") and self.dir not in DIRS:
            raise ValueError(f"{self.kind} needs a direction, got {self.dir!r}")
        if self.kind == "enter" and self.cell is None:
            raise ValueError("enter needs a border cell")

    @property
    def cost(self) -> int:
        return 0 if self.kind == "wait" else 1

    def token(self) -> str:
        if self.kind in ("move", "pick", "place"):
            return f"{self.kind}:{self.dir}"
        if self.kind == "enter":
            x, y = self.cell
            return f"enter{'+' if self.carrying else ''}:{x},{y}"
        return self.kind

    @classmethod
    def parse(cls, token: str) -> "Action":
        kind, _, arg = token.partition(":")
        if kind in ("enter", "enter+"):
            x, y = (int(v) for v in arg.split(","))
            return cls("enter", cell=(x, y), carrying=kind == "enter+")
        if kind in ("move", "pick", "place"):
            return cls(kind, dir=arg)
        return cls(kind)


WAIT = Action("wait")


def move(d):
    return Action("move", d)


def pick(d):
    return Action("pick", d)


def place(d):
    return Action("place", d)


def enter(x, y, carrying=False):
    return Action("enter", cell=(x, y), carrying=carrying)


EXIT = Action("exit")


@dataclass(frozen=True)
class RobotPose:
    id: int
    location: Optional[tuple] = None  # None = outside the grid
    carrying: bool = False

    @property
    def inside(self) -> bool:
        return self.location is not None


@dataclass(frozen=True)
class WorldState:
    heights: HeightMap
    robots: tuple
    t: int = 0

    @classmethod
    def initial(cls, heights: HeightMap, n_robots: int) -> "WorldState":
        return cls(heights, tuple(RobotPose(i) for i in range(n_robots)), 0)

    def robots_inside(self) -> int:
        return sum(r.inside for r in self.robots)


@dataclass
class ActionSchedule:
    """Per-robot action lists, all of length ``makespan``."""

    makespan: int
    actions: list = field(default_factory=list)  # actions[robot][t]

    def __post_init__(self):
        for row in self.actions:
            if len(row) != self.makespan:
                raise ValueError(f"robot action list of length {len(row)} != makespan {self.makespan}")

    @classmethod
    def empty(cls) -> "ActionSchedule":
        return cls(0, [])

    @property
    def n_robots(self) -> int:
        return len(self.actions)

    @property
    def sum_of_costs(self) -> int:
        return sum(a.cost for row in self.actions for a in row)

    def joint(self, t: int) -> list:
        return [row[t] for row in self.actions]

    def padded(self, makespan: int, n_robots: int) -> "ActionSchedule":
        rows = [list(r) + [WAIT] * (makespan - self.makespan) for r in self.actions]
        rows += [[WAIT] * makespan for _ in range(n_robots - len(rows))]
        return ActionSchedule(makespan, rows)

    def count(self, kind: str) -> int:
        return sum(a.kind == kind for row in self.actions for a in row)

    def __eq__(self, other):
        if not isinstance(other, ActionSchedule):
            return NotImplemented
        return self.makespan == other.makespan and self.actions == other.actions


def concat(schedules: Sequence[ActionSchedule]) -> ActionSchedule:
    """Run schedules back to back on one clock, reusing robot ids."""
    n = max((s.n_robots for s in schedules), default=0)
    total = sum(s.makespan for s in schedules)
    rows = [[] for _ in range(n)]
    for s in schedules:
        padded = s.padded(s.makespan, n)
        for r in range(n):
            rows[r].extend(padded.actions[r])
    return ActionSchedule(total, rows)


def overlay(schedules: Sequence[ActionSchedule]) -> ActionSchedule:
    """Run schedules side by side from t=0; robots of each keep their own ids."""
    makespan = max((s.makespan for s in schedules), default=0)
    rows = []
    for s in schedules:
        rows.extend(s.padded(makespan, s.n_robots).actions)
    return ActionSchedule(makespan, rows)


def busy_robots(schedule: ActionSchedule) -> list[int]:
    """Robots in use at each step: inside the grid, or entering it."""
    counts = []
    inside = [False] * schedule.n_robots
    for t in range(schedule.makespan):
        n = 0
        for r, act in enumerate(schedule.joint(t)):
            n += inside[r] or act.kind != "wait"
            if act.kind == "enter":
                inside[r] = True
            elif act.kind == "exit":
                inside[r] = False
        counts.append(n)
    return counts


def compact_robots(schedule: ActionSchedule) -> ActionSchedule:
    """Relabel robots so every trip (enter .. exit) reuses the lowest free id.

    Outside the grid robots are interchangeable, so the result needs only
    ``max(busy_robots(schedule))`` rows.
    """
    trips = []
    for row in schedule.actions:
        start = None
        for t, act in enumerate(row):
            if act.kind == "enter":
                start = t
            elif act.kind == "exit" and start is not None:
                trips.append((start, t, row[start:t + 1]))
                start = None
        if start is not None:
            raise ValueError("robot never leaves the grid")
    trips.sort(key=lambda trip: trip[:2])
    rows: list[list] = []
    last_end: list[int] = []
    for start, end, acts in trips:
        rid = next((r for r, e in enumerate(last_end) if e < start), None)
        if rid is None:
            rid = len(rows)
            rows.append([WAIT] * schedule.makespan)
            last_end.append(-1)
        rows[rid][start:end + 1] = acts
        last_end[rid] = end
    return ActionSchedule(schedule.makespan, rows)


def metrics(schedule: ActionSchedule) -> dict:
    return {"makespan": schedule.makespan, "sum_of_costs": schedule.sum_of_costs}


# --- simulator ---------------------------------------------------------------

class IllegalAction(Exception):
    def __init__(self, robot: Optional[int], t: int, rule: str, detail: str = ""):
        self.robot, self.t, self.rule = robot, t, rule
        who = "world" if robot is None else f"robot {robot}"
        super().__init__(f"t={t} {who}: {rule}" + (f" ({detail})" if detail else ""))


class ReplayError(Exception):
    pass


def _target(dims: GridDims, loc, d):
    dx, dy = DIRS[d]
    x, y = loc[0] + dx, loc[1] + dy
    return (x, y) if dims.contains(x, y) else None


def step(state: WorldState, joint_action: Sequence[Action], *, max_robots: Optional[int] = None,
         floor: Optional[HeightMap] = None) -> WorldState:
    """Apply one joint action; raise ``IllegalAction`` naming robot, t and rule on any violation.

    Moves are judged against pre-step heights.  ``floor`` optionally forbids
    picking a column below the given heights.
    """
    t = state.t
    if len(joint_action) != len(state.robots):
        raise IllegalAction(None, t, "arity", f"{len(joint_action)} actions for {len(state.robots)} robots")
    dims = state.heights.dims
    h = state.heights.heights
    new_h = h.copy()
    writes: Counter = Counter()
    new_robots = []
    for robot, act in zip(state.robots, joint_action):
        rid, loc, carrying = robot.id, robot.location, robot.carrying
        if act.kind == "wait":
            new_robots.append(robot)
            continue
        if loc is None:
            if act.kind != "enter":
                raise IllegalAction(rid, t, "outside", f"{act.token()} while outside the grid")
            x, y = act.cell
            if not dims.contains(x, y) or not dims.is_border(x, y):
                raise IllegalAction(rid, t, "enter border", f"{act.cell} is not a border cell")
            if h[x, y] > 1:
                raise IllegalAction(rid, t, "climb limit", f"enter onto height {h[x, y]}")
            new_robots.append(RobotPose(rid, (x, y), act.carrying))
            continue
        x, y = loc
        k = int(h[x, y])
        if act.kind == "enter":
            raise IllegalAction(rid, t, "enter from inside")
        if act.kind == "exit":
            if not dims.is_border(x, y):
                raise IllegalAction(rid, t, "exit border", f"{loc} is not a border cell")
            if k > 1:
                raise IllegalAction(rid, t, "climb limit", f"exit from height {k}")
            new_robots.append(RobotPose(rid, None, carrying))
            continue
        dest = _target(dims, loc, act.dir)
        if act.kind == "move":
            if dest is None:
                raise IllegalAction(rid, t, "off grid", f"move {act.dir} from {loc}")
            if abs(int(h[dest]) - k) > 1:
                raise IllegalAction(rid, t, "climb limit", f"{loc}@{k} -> {dest}@{h[dest]}")
            new_robots.append(RobotPose(rid, dest, carrying))
            continue
        # pick / place
        if act.kind == "pick" and carrying:
            raise IllegalAction(rid, t, "already carrying")
        if act.kind == "place" and not carrying:
            raise IllegalAction(rid, t, "not carrying")
        if dest is None:
            if k != 0:
                raise IllegalAction(rid, t, "supply height", f"off-grid {act.kind} from height {k}")
            new_robots.append(RobotPose(rid, loc, act.kind == "pick"))
            continue
        if act.kind == "pick":
            if h[dest] == 0:
                raise IllegalAction(rid, t, "pick from empty column", f"{dest}")
            if h[dest] != k + 1:
                raise IllegalAction(rid, t, "pick height", f"robot at {k}, column {dest} at {h[dest]}")
            if floor is not None and h[dest] - 1 < floor[dest]:
                raise IllegalAction(rid, t, "protected block", f"{dest} below floor {floor[dest]}")
            new_h[dest] -= 1
        else:
            if h[dest] != k:
                raise IllegalAction(rid, t, "place height", f"robot at {k}, column {dest} at {h[dest]}")
            if h[dest] + 1 > dims.z_size:
                raise IllegalAction(rid, t, "height cap", f"place above z_size at {dest}")
            new_h[dest] += 1
        writes[dest] += 1
        new_robots.append(RobotPose(rid, loc, act.kind == "pick"))

    for cell, n in writes.items():
        if n > 1:
            raise IllegalAction(None, t, "concurrent writes", f"{n} robots write column {cell}")
    before = {r.location: r.id for r in state.robots if r.inside}
    after: dict = {}
    for r in new_robots:
        if r.inside:
            if r.location in after:
                raise IllegalAction(r.id, t, "vertex conflict", f"robots {after[r.location]} and {r.id} at {r.location}")
            after[r.location] = r.id
    for cell in writes:
        if cell in before or cell in after:
            raise IllegalAction(before.get(cell, after.get(cell)), t, "occupied column", f"write to {cell}")
    old = {r.id: r.location for r in state.robots}
    for r in new_robots:
        src = old[r.id]
        if r.inside and src is not None and src != r.location:
            other = after.get(src)
            if other is not None and other != r.id and old[other] == r.location:
                raise IllegalAction(r.id, t, "swap conflict", f"robots {r.id} and {other}")
    if max_robots is not None:
        # a robot that exits is only available again on the next step
        busy = sum(r.inside or a.kind != "wait" for r, a in zip(state.robots, joint_action))
        if busy > max_robots:
            raise IllegalAction(None, t, "robot limit", f"{busy} robots in use > {max_robots}")
    _check_gravity(new_h, dims, t)
    return WorldState(HeightMap(dims, new_h), tuple(new_robots), t + 1)


def _check_gravity(h: np.ndarray, dims: GridDims, t: int) -> None:
    # columns are stored as heights, so gravity reduces to the bounds
    if (h < 0).any() or (h > dims.z_size).any():
        raise IllegalAction(None, t, "height bounds")


def trajectory(start: HeightMap, schedule: ActionSchedule, **kw) -> list[WorldState]:
    state = WorldState.initial(start, schedule.n_robots)
    states = [state]
    for t in range(schedule.makespan):
        state = step(state, schedule.joint(t), **kw)
        states.append(state)
    return states


def replay(start: HeightMap, schedule: ActionSchedule, **kw) -> HeightMap:
    """Fold ``step`` over the schedule; every robot must end outside."""
    final = trajectory(start, schedule, **kw)[-1]
    inside = [r.id for r in final.robots if r.inside]
    if inside:
        raise ReplayError(f"robots left inside at t={final.t}: {inside}")
    return final.heights


# --- schedule files ------------------------------------------------------------

def schedule_document(schedule: ActionSchedule) -> dict:
    return {
        "makespan": schedule.makespan,
        "robots": schedule.n_robots,
        "sum_of_costs": schedule.sum_of_costs,
        "steps": [[a.token() for a in schedule.joint(t)] for t in range(schedule.makespan)],
    }


def dumps_schedule(schedule: ActionSchedule) -> str:
    doc = schedule_document(schedule)
    steps = ",\n  ".join(json.dumps(row) for row in doc.pop("steps"))
    head = json.dumps(doc)[:-1]
    return f'{head}, "steps": [\n  {steps}\n]}}\n' if schedule.makespan else f'{head}, "steps": []}}\n'


def loads_schedule(text: str) -> ActionSchedule:
    doc = json.loads(text)
    makespan, n = int(doc["makespan"]), int(doc["robots"])
    rows = [[None] * makespan for _ in range(n)]
    if len(doc["steps"]) != makespan:
        raise ValueError("step rows do not match makespan")
    for t, row in enumerate(doc["steps"]):
        if len(row) != n:
            raise ValueError(f"step {t} has {len(row)} actions for {n} robots")
        for r, tok in enumerate(row):
            rows[r][t] = Action.parse(tok)
    return ActionSchedule(makespan, rows)


def snapshots(start: HeightMap, schedule: ActionSchedule) -> list[dict]:
    """Per-timestep heights and robot poses, for external plotting."""
    return [
        {
            "t": s.t,
            "heights": s.heights.heights.T.tolist(),
            "robots": [[r.id, list(r.location) if r.inside else None, r.carrying] for r in s.robots],
        }
        for s in trajectory(start, schedule)
    ]


# --- oracle ----------------------------------------------------------------------

def _oracle_moves(dims: GridDims, h: tuple, pos: int, carry: bool, floor: tuple, X: int, Y: int):
    """Successors of a single-robot state as (action, heights, pos, carry).  ``pos`` = -1 is outside."""
    Z = dims.z_size
    if pos < 0:
        for x, y in dims.columns():
            if dims.is_border(x, y) and h[x * Y + y] <= 1:
                yield enter(x, y, False), h, x * Y + y, False
                yield enter(x, y, True), h, x * Y + y, True
        return
    x, y = divmod(pos, Y)
    k = h[pos]
    if dims.is_border(x, y) and k <= 1:
        yield EXIT, h, -1, False  # outside, the load is chosen again on entry
    for d in DIR_ORDER:
        dx, dy = DIRS[d]
        nx, ny = x + dx, y + dy
        if not (0 <= nx < X and 0 <= ny < Y):
            if k == 0:
                if carry:
                    yield place(d), h, pos, False
                else:
                    yield pick(d), h, pos, True
            continue
        q = nx * Y + ny
        hq = h[q]
        if abs(hq - k) <= 1:
            yield move(d), h, q, carry
        if carry and hq == k and k + 1 <= Z:
            yield place(d), h[:q] + (hq + 1,) + h[q + 1:], pos, False
        if not carry and hq == k + 1 and hq - 1 >= floor[q]:
            yield pick(d), h[:q] + (hq - 1,) + h[q + 1:], pos, True


def oracle_plan(start: HeightMap, target: HeightMap, bound: int = 40,
                max_states: int = 3_000_000) -> Optional[ActionSchedule]:
    """Single-robot plan of minimal makespan, minimal cost among those, by exhaustive search.

    Searches layer by layer over exact world states, keeping the cheapest
    way to reach every state at every depth.  Blocks of ``start`` are never
    picked.  Returns ``None`` if no plan exists within ``bound`` steps or
    the state count exceeds ``max_states``.
    """
    dims = start.dims
    X, Y = dims.x_size, dims.y_size
    floor = start.as_tuple()
    goal = (target.as_tuple(), -1, False)
    s0 = (start.as_tuple(), -1, False)
    if s0 == goal:
        return ActionSchedule.empty()
    layers = [{s0: (0, None, None)}]  # state -> (cost, parent, action)
    for _ in range(bound):
        frontier = layers[-1]
        nxt: dict = {}
        for state, (cost, _, _) in frontier.items():
            h, pos, carry = state
            # waiting keeps the state; robots outside wait for free as well
            best = nxt.get(state)
            if best is None or cost < best[0]:
                nxt[state] = (cost, state, WAIT)
            for act, nh, npos, ncarry in _oracle_moves(dims, h, pos, carry, floor, X, Y):
                ns = (nh, npos, ncarry)
                best = nxt.get(ns)
                if best is None or cost + 1 < best[0]:
                    nxt[ns] = (cost + 1, state, act)
        layers.append(nxt)
        if goal in nxt:
            return _unwind(layers, goal)
        if len(nxt) > max_states:
            log.info("oracle gave up after %d states", len(nxt))
            return None
    return None


def _unwind(layers, goal) -> ActionSchedule:
    acts = []
    state = goal
    for depth in range(len(layers) - 1, 0, -1):
        _, parent, act = layers[depth][state]
        acts.append(act)
        state = parent
    acts.reverse()
    return ActionSchedule(len(acts), [acts])
