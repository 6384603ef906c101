import numpy as np
import pytest
from hypothesis import given

from conftest import heightmaps
from macc.decompose import Decomposition, decompose
from macc.ordering import (
    DependencyEdge,
    dependencies,
    dumps_order,
    edge_list,
    is_feasible_order,
    order_substructures,
    parallel_schedule,
)
from macc.reachability import is_removable
from macc.world import GridDims, HeightMap, generate_random_structure


def _map(dims, cells):
    h = np.zeros((dims.x_size, dims.y_size), dtype=int)
    for (x, y), v in cells.items():
        h[x, y] = v
    return HeightMap(dims, h)


def _prefixes_supported(d, sequence):
    # own support check: every block above the ground sits on a block placed no later
    placed = set()
    subs = d.by_index()
    for i in sequence:
        placed |= {tuple(b) for b in subs[i].blocks}
        for x, y, z in placed:
            if z > 1 and (x, y, z - 1) not in placed:
                return False
    return True


@pytest.fixture
def stacked_pair():
    return decompose(_map(GridDims(5, 5, 2), {(2, 2): 2, (2, 3): 2}))


@pytest.fixture
def chain3():
    return decompose(_map(GridDims(5, 7, 2), {(2, 2): 2, (2, 3): 2, (2, 4): 2}))


def test_single_substructure():
    d = decompose(_map(GridDims(3, 3, 1), {(1, 1): 1}))
    assert order_substructures(d).sequence == (1,)


def test_stacked_pair_order(stacked_pair):
    o = order_substructures(stacked_pair)
    assert o.sequence == (1, 2)
    assert o.merges == ()


def test_stacked_pair_dependency(stacked_pair):
    assert dependencies(stacked_pair) == [DependencyEdge(2, 1)]


def test_flat_disjoint_no_dependencies():
    d = decompose(_map(GridDims(7, 7, 1), {(1, 1): 1, (3, 3): 1, (5, 1): 1}))
    assert dependencies(d) == []


def test_chain_dependencies(chain3):
    assert len(chain3) == 3
    assert set(dependencies(chain3)) == {DependencyEdge(2, 1), DependencyEdge(3, 2), DependencyEdge(3, 1)}


def test_independent_is_one_stage():
    d = decompose(_map(GridDims(7, 7, 1), {(1, 1): 1, (3, 3): 1, (5, 1): 1}))
    assert parallel_schedule(d).stages == (frozenset({1, 2, 3}),)


def test_chain_is_singleton_stages(chain3):
    ps = parallel_schedule(chain3)
    assert ps.stages == (frozenset({1}), frozenset({2}), frozenset({3}))
    assert ps.flatten() == order_substructures(chain3).sequence


def test_two_independent_pairs():
    d = decompose(_map(GridDims(8, 8, 2), {(1, 1): 2, (1, 2): 2, (5, 5): 2, (5, 6): 2}))
    assert parallel_schedule(d).stages == (frozenset({1, 3}), frozenset({2, 4}))


def test_dependency_violating_order_rejected(chain3):
    # building a substructure before the one it rests on is not a feasible sequence
    assert is_feasible_order(chain3, (1, 2, 3))
    assert not is_feasible_order(chain3, (2, 1, 3))
    assert not is_feasible_order(chain3, (3, 2, 1))
    assert not is_feasible_order(chain3, (1, 2))


def test_reports(chain3):
    o = order_substructures(chain3)
    doc = dumps_order(o, dependencies(chain3), parallel_schedule(chain3))
    assert '"sequence": [' in doc and '"stages"' in doc
    assert edge_list([DependencyEdge(2, 1)]) == "2 1\n"


@given(heightmaps(max_x=6, max_y=6))
def test_order_is_feasible(h):
    d = decompose(h)
    o = order_substructures(d)
    if o.merges:
        d = Decomposition(o.substructures, h)
    assert sorted(o.sequence) == sorted(s.index for s in o.substructures)
    assert _prefixes_supported(d, o.sequence)
    assert is_feasible_order(d, o.sequence)


@given(heightmaps(max_x=6, max_y=6))
def test_stage_members_removable_with_later_stages_present(h):
    d = decompose(h)
    ps = parallel_schedule(d)
    if ps.merges:
        return
    subs = d.by_index()
    for k, stage in enumerate(ps.stages):
        present = [subs[i] for st in ps.stages[: k + 1] for i in st]
        for i in stage:
            assert is_removable(subs[i], present, h.dims)
    assert _prefixes_supported(d, ps.flatten())
    assert is_feasible_order(d, ps.flatten())


@pytest.mark.parametrize("seed", range(8))
def test_corpus_orders(seed):
    dims = GridDims(7, 7, 4) if seed % 2 else GridDims(10, 10, 4)
    h = generate_random_structure(dims, seed=seed)
    d = decompose(h)
    o = order_substructures(d)
    dd = Decomposition(o.substructures, h) if o.merges else d
    assert is_feasible_order(dd, o.sequence)
