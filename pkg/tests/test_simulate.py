import numpy as np
import pytest
from hypothesis import given, strategies as st

from macc.simulate import (
    EXIT,
    WAIT,
    Action,
    ActionSchedule,
    IllegalAction,
    ReplayError,
    RobotPose,
    WorldState,
    busy_robots,
    compact_robots,
    concat,
    dumps_schedule,
    enter,
    loads_schedule,
    metrics,
    move,
    oracle_plan,
    overlay,
    pick,
    place,
    replay,
    snapshots,
    step,
    trajectory,
)
from macc.world import GridDims, HeightMap

D3 = GridDims(3, 3, 2)


def _hmap(dims, cells=None):
    h = np.zeros((dims.x_size, dims.y_size), dtype=int)
    for (x, y), v in (cells or {}).items():
        h[x, y] = v
    return HeightMap(dims, h)


def _state(h, *poses):
    return WorldState(h, tuple(RobotPose(i, loc, c) for i, (loc, c) in enumerate(poses)))


def _rule(exc_info):
    return exc_info.value.rule


def test_all_wait_only_advances_time():
    s = _state(_hmap(D3, {(1, 1): 1}), ((0, 0), False), (None, False))
    s2 = step(s, [WAIT, WAIT])
    assert s2.heights == s.heights and s2.robots == s.robots and s2.t == 1


def test_climb_limit():
    s = _state(_hmap(D3, {(1, 0): 2}), ((0, 0), False))
    with pytest.raises(IllegalAction) as e:
        step(s, [move("E")])
    assert _rule(e) == "climb limit" and e.value.robot == 0 and e.value.t == 0


def test_supply_pick_at_border():
    h = _hmap(D3)
    s = step(_state(h, ((0, 1), False)), [pick("W")])
    assert s.robots[0].carrying
    assert s.heights == h


def test_supply_requires_ground_level():
    s = _state(_hmap(D3, {(0, 1): 1}), ((0, 1), False))
    with pytest.raises(IllegalAction) as e:
        step(s, [pick("W")])
    assert _rule(e) == "supply height"


@pytest.mark.parametrize("cells,pose,act,rule", [
    ({(1, 1): 2}, ((1, 0), False), pick("N"), "pick height"),
    ({}, ((1, 0), False), pick("N"), "pick from empty column"),
    ({(1, 1): 1}, ((1, 0), True), place("N"), "place height"),
    ({(1, 1): 2, (1, 0): 2}, ((1, 0), True), place("N"), "height cap"),
    ({}, ((1, 1), False), EXIT, "exit border"),
    ({}, ((1, 0), False), place("N"), "not carrying"),
    ({}, ((1, 0), True), pick("N"), "already carrying"),
    ({}, ((0, 0), False), move("W"), "off grid"),
])
def test_single_robot_rule_violations(cells, pose, act, rule):
    with pytest.raises(IllegalAction) as e:
        step(_state(_hmap(D3, cells), pose), [act])
    assert _rule(e) == rule


def test_enter_rules():
    with pytest.raises(IllegalAction) as e:
        step(_state(_hmap(D3), (None, False)), [enter(1, 1)])
    assert _rule(e) == "enter border"
    with pytest.raises(IllegalAction) as e:
        step(_state(_hmap(D3, {(0, 0): 2}), (None, False)), [enter(0, 0)])
    assert _rule(e) == "climb limit"


def test_vertex_conflict():
    s = _state(_hmap(D3), ((0, 0), False), ((2, 0), False))
    with pytest.raises(IllegalAction) as e:
        step(s, [move("E"), move("W")])
    assert _rule(e) == "vertex conflict"


def test_swap_conflict():
    s = _state(_hmap(D3), ((0, 0), False), ((1, 0), False))
    with pytest.raises(IllegalAction) as e:
        step(s, [move("E"), move("W")])
    assert _rule(e) == "swap conflict"


def test_following_is_allowed():
    s = _state(_hmap(D3), ((0, 0), False), ((1, 0), False))
    s2 = step(s, [move("E"), move("E")])
    assert [r.location for r in s2.robots] == [(1, 0), (2, 0)]


def test_concurrent_writes():
    s = _state(_hmap(D3), ((1, 0), True), ((1, 2), True))
    with pytest.raises(IllegalAction) as e:
        step(s, [place("N"), place("S")])
    assert _rule(e) == "concurrent writes"


def test_write_to_occupied_column():
    s = _state(_hmap(D3), ((1, 0), True), ((1, 1), False))
    with pytest.raises(IllegalAction) as e:
        step(s, [place("N"), WAIT])
    assert _rule(e) == "occupied column"


def test_protected_floor():
    h = _hmap(D3, {(1, 1): 1})
    with pytest.raises(IllegalAction) as e:
        step(_state(h, ((1, 0), False)), [pick("N")], floor=h)
    assert _rule(e) == "protected block"


def test_robot_limit_counts_entering_robot():
    # one robot leaves while another enters: two robots busy in that step
    s = _state(_hmap(D3), ((0, 0), False), (None, False))
    with pytest.raises(IllegalAction) as e:
        step(s, [EXIT, enter(2, 2)], max_robots=1)
    assert _rule(e) == "robot limit"
    step(s, [EXIT, enter(2, 2)], max_robots=2)


def test_empty_schedule_replay():
    h = _hmap(D3, {(1, 1): 1})
    assert replay(h, ActionSchedule.empty()) == h
    assert metrics(ActionSchedule.empty()) == {"makespan": 0, "sum_of_costs": 0}


def test_enter_move_place_exit():
    sched = ActionSchedule(4, [[enter(0, 0, carrying=True), move("N"), place("E"), EXIT]])
    assert metrics(sched) == {"makespan": 4, "sum_of_costs": 4}
    assert replay(_hmap(D3), sched) == _hmap(D3, {(1, 1): 1})


def test_robot_left_inside():
    with pytest.raises(ReplayError):
        replay(_hmap(D3), ActionSchedule(2, [[enter(0, 0), WAIT]]))


def test_schedule_file_round_trip():
    sched = ActionSchedule(4, [[enter(0, 0, carrying=True), move("N"), place("E"), EXIT],
                               [WAIT, enter(2, 2), EXIT, WAIT]])
    text = dumps_schedule(sched)
    assert loads_schedule(text) == sched
    assert dumps_schedule(loads_schedule(text)) == text
    assert len(snapshots(_hmap(D3), sched)) == 5


def test_concat_and_overlay():
    a = ActionSchedule(3, [[enter(0, 1, True), place("E"), EXIT]])
    b = ActionSchedule(3, [[enter(2, 1, True), place("N"), EXIT]])
    seq = concat([a, b])
    assert seq.makespan == 6 and seq.n_robots == 1 and seq.sum_of_costs == 6
    assert replay(_hmap(D3), seq) == _hmap(D3, {(1, 1): 1, (2, 2): 1})
    par = overlay([a, ActionSchedule(3, [[enter(1, 2, True), place("S"), EXIT]])])
    assert par.makespan == 3 and par.n_robots == 2
    with pytest.raises(IllegalAction):  # both write (1,1) at once
        replay(_hmap(D3), par)


def test_compact_robots_reuses_ids():
    sched = ActionSchedule(6, [
        [enter(0, 1, True), place("E"), EXIT, WAIT, WAIT, WAIT],
        [WAIT, WAIT, WAIT, enter(2, 1, True), place("N"), EXIT],
    ])
    c = compact_robots(sched)
    assert c.n_robots == 1
    assert replay(_hmap(D3), c, max_robots=1) == replay(_hmap(D3), sched)
    assert busy_robots(sched) == [1] * 6


# --- random legal walks ---------------------------------------------------------

ACTIONS = [WAIT, EXIT] + [k(d) for k in (move, pick, place) for d in "NESW"] + \
    [enter(x, y, c) for x in range(3) for y in range(3) if (x, y) != (1, 1) for c in (False, True)]


@given(st.lists(st.lists(st.sampled_from(ACTIONS), min_size=2, max_size=2), max_size=40))
def test_random_walk_invariants(joint_actions):
    # apply whichever joint actions are legal; check conservation and bounds after each
    state = WorldState.initial(_hmap(D3), 2)
    for joint in joint_actions:
        try:
            nxt = step(state, joint)
        except IllegalAction:
            continue
        h0, h1 = state.heights.heights, nxt.heights.heights
        in_grid = 0
        for r, a in zip(state.robots, joint):
            if a.kind in ("pick", "place") and r.location is not None:
                dx, dy = {"N": (0, 1), "E": (1, 0), "S": (0, -1), "W": (-1, 0)}[a.dir]
                if D3.contains(r.location[0] + dx, r.location[1] + dy):
                    in_grid += 1 if a.kind == "place" else -1
        assert int(h1.sum()) - int(h0.sum()) == in_grid
        assert (h1 >= 0).all() and (h1 <= D3.z_size).all()
        cells = [r.location for r in nxt.robots if r.inside]
        assert len(cells) == len(set(cells))
        state = nxt


def test_replay_is_deterministic():
    sched = ActionSchedule(4, [[enter(0, 0, carrying=True), move("N"), place("E"), EXIT]])
    a = trajectory(_hmap(D3), sched)
    b = trajectory(_hmap(D3), sched)
    assert a == b


# --- oracle ---------------------------------------------------------------------

def test_oracle_trivial():
    h = _hmap(D3, {(0, 0): 1})
    assert oracle_plan(h, h) == ActionSchedule.empty()


def test_oracle_border_adjacent_block():
    # enter carrying next to the target column, place, leave
    plan = oracle_plan(_hmap(D3), _hmap(D3, {(1, 1): 1}))
    assert (plan.makespan, plan.sum_of_costs) == (3, 3)
    assert replay(_hmap(D3), plan) == _hmap(D3, {(1, 1): 1})


def test_oracle_tower_uses_one_scaffold(tower_4x4x3):
    start = HeightMap.empty(tower_4x4x3.dims)
    plan = oracle_plan(start, tower_4x4x3)
    assert replay(start, plan) == tower_4x4x3
    states = trajectory(start, plan)
    scaffold_places = scaffold_picks = 0
    for t in range(plan.makespan):
        diff = states[t + 1].heights.heights - states[t].heights.heights
        for x, y in zip(*np.nonzero(diff)):
            if (x, y) != (1, 1):
                scaffold_places += int(diff[x, y] > 0)
                scaffold_picks += int(diff[x, y] < 0)
    assert (scaffold_places, scaffold_picks) == (1, 1)


def test_oracle_respects_bound():
    assert oracle_plan(_hmap(D3), _hmap(D3, {(1, 1): 1}), bound=2) is None


def test_oracle_brute_force_agreement_on_tiny_world():
    # 1x2 world, one block: exhaustive enumeration of all 2..3-step single-robot plans
    dims = GridDims(1, 2, 1)
    start, target = _hmap(dims), _hmap(dims, {(0, 1): 1})
    acts = [WAIT, EXIT, enter(0, 0), enter(0, 0, True), enter(0, 1), enter(0, 1, True)] + \
        [k(d) for k in (move, pick, place) for d in "NESW"]
    best = None
    import itertools
    for T in range(1, 4):
        for seq in itertools.product(acts, repeat=T):
            try:
                if replay(start, ActionSchedule(T, [list(seq)])) == target:
                    cost = sum(a.cost for a in seq)
                    best = min(best or (T, cost), (T, cost))
            except (IllegalAction, ReplayError):
                pass
        if best:
            break
    plan = oracle_plan(start, target)
    assert (plan.makespan, plan.sum_of_costs) == best
