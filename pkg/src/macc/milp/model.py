"""Time-expanded flow MILP for building one (sub)structure.

Robots are a single flow over nodes ``(t, column, level, carrying)`` plus an
outside node that supplies and absorbs robots at every step.  ``level`` is
the height of the column the robot stands on, which makes the climb rule
and the pick/place height rule linear in the one-hot column-height
indicators ``h[t, column, level]``.

The constraint families are:

* flow conservation at every inside node;
* one height level per column and timestep, and a robot may only occupy the
  node whose level matches that column's height;
* at most one robot per column, no swaps along an edge, at most
  ``max_robots`` robots inside at any time;
* column heights move only through picks and places, one write per column
  per step, never on a column holding a robot before or after the step;
* start heights at t=0, target heights at t=T, no robots inside at either end;
* heights never drop below the start heights, so previously built blocks
  are never taken.

A frozen schedule (already planned robots of the same stage) is folded in
as exogenous height changes, blocked nodes and pinned heights.
"""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..simulate import ActionSchedule, DIRS, trajectory
from ..world import GridDims, HeightMap

log = logging.getLogger(__name__)

OUT = None  # the outside node


@dataclass(frozen=True)
class PlanningInstance:
    dims: GridDims
    start_env: HeightMap
    target_env: HeightMap
    max_robots: int = 1
    makespan: Optional[int] = None
    frozen_actions: Optional[ActionSchedule] = None

    def __post_init__(self):
        if self.start_env.dims != self.dims or self.target_env.dims != self.dims:
            raise ValueError("start/target heightmaps must match the instance dims")
        if self.max_robots < 1:
            raise ValueError("max_robots must be positive")
        if (self.target_env.heights < self.start_env.heights).any():
            raise ValueError("target lies below start on some column")

    def with_makespan(self, T: int) -> "PlanningInstance":
        return replace(self, makespan=T)

    @property
    def is_trivial(self) -> bool:
        return self.start_env == self.target_env and not self.frozen_actions


@dataclass(frozen=True)
class Arc:
    t: int  # step t moves the robot from time t to time t+1
    kind: str  # enter exit wait move pick place
    src: Optional[tuple]  # (cell, level, carrying) or OUT
    dst: Optional[tuple]
    target: Optional[int] = None  # written cell for pick/place; None = off-grid supply


@dataclass
class MilpModel:
    """Binary program ``min c.x  s.t.  row_lo <= A x <= row_hi,  lb <= x <= ub``."""

    instance: PlanningInstance
    T: int
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    var_names: list
    row_names: list
    arcs: list  # arcs[i] is column arc_offset + i
    arc_offset: int
    heights: dict = field(repr=False)  # (t, cell, level) -> variable index
    floor: np.ndarray = field(repr=False)  # (T+1, n_cells) lowest permitted heights

    @property
    def n_vars(self) -> int:
        return len(self.c)

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def metadata(self) -> dict:
        return {
            "makespan": self.T,
            "variables": self.n_vars,
            "arc_variables": len(self.arcs),
            "height_variables": len(self.heights),
            "constraints": self.n_constraints,
            "nonzeros": int(self.A.nnz),
        }

    def check(self, x) -> list[str]:
        """Names of rows and bounds violated by assignment ``x`` (empty list = feasible)."""
        x = np.asarray(x, dtype=float)
        bad = []
        ax = self.A @ x
        for i in np.flatnonzero((ax < self.row_lo - 1e-6) | (ax > self.row_hi + 1e-6)):
            bad.append(self.row_names[i])
        for i in np.flatnonzero((x < self.lb - 1e-6) | (x > self.ub + 1e-6)):
            bad.append(f"bound {self.var_names[i]}")
        return bad


class _Frozen:
    """What already-scheduled robots do to the world, step by step."""

    def __init__(self, inst: PlanningInstance, T: int):
        dims = inst.dims
        Y = dims.y_size
        n = dims.x_size * Y
        self.occupied = defaultdict(set)  # t -> cells holding a frozen robot
        self.written = defaultdict(set)  # step t -> cells picked/placed
        self.moves = defaultdict(set)  # step t -> (src, dst) cells
        self.busy = defaultdict(int)  # step t -> robots inside or entering
        sched = inst.frozen_actions
        if sched is None or sched.makespan == 0:
            self.heights = np.tile(inst.start_env.heights.ravel(), (T + 1, 1))
            return
        if sched.makespan > T:
            raise ValueError(f"makespan {T} shorter than frozen schedule ({sched.makespan})")
        states = trajectory(inst.start_env, sched)
        self.heights = np.empty((T + 1, n), dtype=np.int64)
        for t in range(T + 1):
            s = states[min(t, len(states) - 1)]
            self.heights[t] = s.heights.heights.ravel()
        for t, s in enumerate(states):
            for r in s.robots:
                if r.inside:
                    self.occupied[t].add(r.location[0] * Y + r.location[1])
        for t in range(sched.makespan):
            for r, act in zip(states[t].robots, sched.joint(t)):
                if r.inside or act.kind != "wait":
                    self.busy[t] += 1
                if act.kind not in ("move", "pick", "place"):
                    continue
                x, y = r.location
                dx, dy = DIRS[act.dir]
                if not dims.contains(x + dx, y + dy):
                    continue
                src, dst = x * Y + y, (x + dx) * Y + y + dy
                if act.kind == "move":
                    self.moves[t].add((src, dst))
                else:
                    self.written[t].add(dst)

    def pinned(self, t: int, c: int) -> bool:
        return c in self.occupied[t] or c in self.written[t] or c in self.written[t - 1]


class _Builder:
    def __init__(self):
        self.names = []
        self.lb = []
        self.ub = []
        self.cost = []
        self.rows, self.cols, self.vals = [], [], []
        self.row_lo, self.row_hi, self.row_names = [], [], []

    def var(self, name, cost=0.0, lb=0.0, ub=1.0) -> int:
        self.names.append(name)
        self.cost.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        return len(self.names) - 1

    def row(self, name, terms, lo, hi):
        """Add ``lo <= sum(coef * term) <= hi``; a term is a variable index or a float constant."""
        const = 0.0
        live = defaultdict(float)
        for term, coef in terms:
            if isinstance(term, float):
                const += coef * term
            else:
                live[term] += coef
        live = {k: v for k, v in live.items() if v != 0}
        lo, hi = lo - const, hi - const
        if not live:
            if lo > 1e-9 or hi < -1e-9:
                # keep the contradiction visible to the solver
                r = len(self.row_lo)
                self.row_lo.append(lo)
                self.row_hi.append(hi)
                self.row_names.append(name)
                return r
            return None
        r = len(self.row_lo)
        for k, v in live.items():
            self.rows.append(r)
            self.cols.append(k)
            self.vals.append(v)
        self.row_lo.append(lo)
        self.row_hi.append(hi)
        self.row_names.append(name)
        return r


def build_model(inst: PlanningInstance) -> MilpModel:
    """Encode ``inst`` (whose ``makespan`` must be set) as a binary MILP minimizing robot actions."""
    T = inst.makespan
    if T is None or T < 1:
        raise ValueError("build_model needs a makespan >= 1")
    dims = inst.dims
    X, Y, Z = dims.x_size, dims.y_size, dims.z_size
    n_cells = X * Y
    if inst.target_env.heights.max(initial=0) > Z:
        raise ValueError("target exceeds z_size")
    frozen = _Frozen(inst, T)
    floor = frozen.heights  # exogenous heights; our robots' net effect is never negative
    target = inst.target_env.heights.ravel()
    dist = [dims.border_distance(*divmod(c, Y)) for c in range(n_cells)]
    border = [dims.is_border(*divmod(c, Y)) for c in range(n_cells)]
    nbrs = [[nx * Y + ny for nx, ny in dims.neighbors(*divmod(c, Y))] for c in range(n_cells)]

    def levels(t, c):
        """Heights column c can have at time t.

        Our robots write a column at most once per step, the first write can
        happen only after a robot has walked next to it, and the last one
        early enough to walk out again.
        """
        if t == 0:
            return (int(inst.start_env.heights.ravel()[c]),)
        if t == T:
            return (int(target[c]),)
        base = int(floor[t, c])
        if frozen.pinned(t, c):
            return (base,)
        near = max(dist[c] - 1, 0)
        final = int(target[c]) - int(floor[T, c])
        up_by_now = max(0, t - 1 - near)
        left = max(0, T - 1 - near - t)
        lo = base + max(0, final - left)
        hi = min(Z, base + min(up_by_now, final + left))
        return tuple(range(lo, hi + 1))

    L = {(t, c): levels(t, c) for t in range(T + 1) for c in range(n_cells)}

    def node_ok(t, c, k):
        # entering lands at height <= 1 and each move climbs at most one level
        reach = max(dist[c], k - 1)
        return (1 <= t and reach + 1 <= t <= T - 1 - reach
                and c not in frozen.occupied[t] and c not in frozen.written[t] and c not in frozen.written[t - 1])

    b = _Builder()
    hvar = {}
    for (t, c), ks in L.items():
        if len(ks) > 1:
            for k in ks:
                hvar[t, c, k] = b.var(f"h_{t}_{c}_{k}")
        elif not ks:
            b.row(f"onehot_{t}_{c}", [], 1.0, 1.0)  # no reachable height: infeasible horizon

    def H(t, c, k):
        key = (t, c, k)
        if key in hvar:
            return hvar[key]
        return 1.0 if L[t, c] == (k,) else 0.0

    def has_level(t, c, k):
        return k in L[t, c]

    arcs: list[Arc] = []
    out_of = defaultdict(list)  # (t, node) -> arc vars leaving node at step t
    into = defaultdict(list)  # (t+1, node) -> arc vars entering node
    cell_in = defaultdict(list)  # (t, cell) -> arc vars arriving at cell at time t
    cell_out = defaultdict(list)  # (t, cell) -> arc vars leaving cell at step t
    writes = defaultdict(list)  # (t, cell) -> pick/place vars writing cell at step t
    pick_at = defaultdict(list)  # (t, cell, level of robot) -> pick vars
    place_at = defaultdict(list)
    moves = defaultdict(list)  # (t, src, dst) -> move vars
    busy = defaultdict(list)  # step t -> every arc (one per robot inside or entering)

    def add_arc(arc: Arc):
        i = len(arcs)
        cost = 0.0 if arc.kind == "wait" else 1.0
        src = "out" if arc.src is OUT else "%d_%d_%d" % arc.src
        dst = "out" if arc.dst is OUT else "%d_%d_%d" % arc.dst
        b.var(f"x_{arc.t}_{arc.kind}_{src}_{dst}" + ("" if arc.target is None else f"_{arc.target}"), cost)
        arcs.append(arc)
        t = arc.t
        if arc.src is not OUT:
            out_of[t, arc.src].append(i)
            cell_out[t, arc.src[0]].append(i)
        if arc.dst is not OUT:
            into[t + 1, arc.dst].append(i)
            cell_in[t + 1, arc.dst[0]].append(i)
        busy[t].append(i)
        if arc.kind in ("pick", "place") and arc.target is not None:
            writes[t, arc.target].append(i)
            k = arc.src[1]
            (pick_at if arc.kind == "pick" else place_at)[t, arc.target, k].append(i)
        if arc.kind == "move":
            moves[t, arc.src[0], arc.dst[0]].append(i)

    def writable(t, p):
        # frozen robots must not stand on, or write to, a column we write
        return (p not in frozen.occupied[t] and p not in frozen.occupied[t + 1]
                and p not in frozen.written[t])

    # height variables come first in the builder; arcs are re-indexed below
    n_h = len(b.names)
    for t in range(T):
        for c in range(n_cells):
            if border[c]:
                for k in (0, 1):
                    if has_level(t + 1, c, k) and node_ok(t + 1, c, k):
                        for w in (0, 1):
                            add_arc(Arc(t, "enter", OUT, (c, k, w)))
            for k in L[t, c]:
                if not node_ok(t, c, k):
                    continue
                stay = has_level(t + 1, c, k) and node_ok(t + 1, c, k)
                for w in (0, 1):
                    src = (c, k, w)
                    if border[c] and k <= 1:
                        add_arc(Arc(t, "exit", src, OUT))
                    if stay:
                        add_arc(Arc(t, "wait", src, (c, k, w)))
                    for q in nbrs[c]:
                        if (q, c) in frozen.moves[t]:
                            continue
                        for k2 in (k - 1, k, k + 1):
                            if has_level(t + 1, q, k2) and has_level(t, q, k2) and node_ok(t + 1, q, k2):
                                add_arc(Arc(t, "move", src, (q, k2, w)))
                    if not stay:
                        continue
                    if w == 0:
                        for p in nbrs[c]:
                            if writable(t, p) and has_level(t, p, k + 1) and has_level(t + 1, p, k):
                                add_arc(Arc(t, "pick", src, (c, k, 1), p))
                        if border[c] and k == 0:
                            add_arc(Arc(t, "pick", src, (c, k, 1), None))
                    else:
                        for p in nbrs[c]:
                            if k + 1 <= Z and writable(t, p) and has_level(t, p, k) and has_level(t + 1, p, k + 1):
                                add_arc(Arc(t, "place", src, (c, k, 0), p))
                        if border[c] and k == 0:
                            add_arc(Arc(t, "place", src, (c, k, 0), None))

    A_idx = lambda i: n_h + i  # noqa: E731  arc i -> column

    # flow conservation
    nodes = set(k for k in into) | set((t, n) for (t, n) in out_of)
    for t, node in sorted(nodes, key=lambda k: (k[0], k[1])):
        if t == 0 or t == T:
            continue
        terms = [(A_idx(i), 1.0) for i in into.get((t, node), ())]
        terms += [(A_idx(i), -1.0) for i in out_of.get((t, node), ())]
        b.row(f"flow_{t}_{node[0]}_{node[1]}_{node[2]}", terms, 0.0, 0.0)

    # one level per column
    for (t, c), ks in L.items():
        if len(ks) > 1:
            b.row(f"onehot_{t}_{c}", [(hvar[t, c, k], 1.0) for k in ks], 1.0, 1.0)

    # robots stand at the column's current height; one robot per column
    for t in range(1, T):
        for c in range(n_cells):
            if not cell_in.get((t, c)):
                continue
            b.row(f"vertex_{t}_{c}", [(A_idx(i), 1.0) for i in cell_in[t, c]], -np.inf, 1.0)
            for k in L[t, c]:
                arr = [i for w in (0, 1) for i in into.get((t, (c, k, w)), ())]
                if arr and (t, c, k) in hvar:
                    terms = [(A_idx(i), 1.0) for i in arr] + [(hvar[t, c, k], -1.0)]
                    b.row(f"stand_{t}_{c}_{k}", terms, -np.inf, 0.0)

    # no swaps
    for (t, c, q) in list(moves):
        if c < q and (t, q, c) in moves:
            terms = [(A_idx(i), 1.0) for i in moves[t, c, q] + moves[t, q, c]]
            b.row(f"swap_{t}_{c}_{q}", terms, -np.inf, 1.0)

    # robot budget: robots inside during a step plus robots entering in it;
    # a robot that exits can only come back on the next step
    for t in range(T):
        cap = inst.max_robots - frozen.busy[t]
        if busy.get(t):
            b.row(f"robots_{t}", [(A_idx(i), 1.0) for i in busy[t]], -np.inf, float(cap))
        elif cap < 0:
            b.row(f"robots_{t}", [], -np.inf, float(cap))

    # height dynamics, level by level: a place by a robot standing at level j
    # moves the column from j to j+1, a pick from j+1 to j.  Columns changed
    # by frozen robots keep the aggregated balance with the exogenous delta.
    for t in range(T):
        for c in range(n_cells):
            if floor[t + 1, c] == floor[t, c]:
                for k in sorted(set(L[t, c]) | set(L[t + 1, c])):
                    terms = [(H(t + 1, c, k), 1.0), (H(t, c, k), -1.0)]
                    terms += [(A_idx(i), -1.0) for i in place_at.get((t, c, k - 1), ())]
                    terms += [(A_idx(i), -1.0) for i in pick_at.get((t, c, k), ())]
                    terms += [(A_idx(i), 1.0) for i in place_at.get((t, c, k), ())]
                    terms += [(A_idx(i), 1.0) for i in pick_at.get((t, c, k - 1), ())]
                    b.row(f"level_{t}_{c}_{k}", terms, 0.0, 0.0)
                continue
            terms = [(H(t + 1, c, k), float(k)) for k in L[t + 1, c]]
            terms += [(H(t, c, k), -float(k)) for k in L[t, c]]
            for i in writes.get((t, c), ()):
                terms.append((A_idx(i), -1.0 if arcs[i].kind == "place" else 1.0))
            delta = float(floor[t + 1, c] - floor[t, c])
            b.row(f"height_{t}_{c}", terms, delta, delta)

    # pick/place height match, and written columns stay free of robots
    for (t, p, k), idx in pick_at.items():
        if (t, p, k + 1) in hvar:
            b.row(f"pickh_{t}_{p}_{k}", [(A_idx(i), 1.0) for i in idx] + [(hvar[t, p, k + 1], -1.0)], -np.inf, 0.0)
    for (t, p, k), idx in place_at.items():
        if (t, p, k) in hvar:
            b.row(f"placeh_{t}_{p}_{k}", [(A_idx(i), 1.0) for i in idx] + [(hvar[t, p, k], -1.0)], -np.inf, 0.0)
    for (t, p), idx in writes.items():
        w_terms = [(A_idx(i), 1.0) for i in idx]
        b.row(f"wfree0_{t}_{p}", w_terms + [(A_idx(i), 1.0) for i in cell_out.get((t, p), ())], -np.inf, 1.0)
        b.row(f"wfree1_{t}_{p}", w_terms + [(A_idx(i), 1.0) for i in cell_in.get((t + 1, p), ())], -np.inf, 1.0)

    # the builder appended height vars first and arc vars after, in order
    n = len(b.names)
    A = sp.csr_matrix((b.vals, (b.rows, b.cols)), shape=(len(b.row_lo), n))
    return MilpModel(
        instance=inst,
        T=T,
        c=np.array(b.cost),
        A=A,
        row_lo=np.array(b.row_lo, dtype=float),
        row_hi=np.array(b.row_hi, dtype=float),
        lb=np.array(b.lb),
        ub=np.array(b.ub),
        var_names=b.names,
        row_names=b.row_names,
        arcs=arcs,
        arc_offset=n_h,
        heights=hvar,
        floor=floor,
    )
