import numpy as np
import pytest
from hypothesis import given

from conftest import heightmaps
from macc.decompose import (
    Decomposition,
    Tower,
    decompose,
    dumps_decomposition,
    is_partition,
    loads_decomposition,
    merge_substructures,
    shadow_region,
    verify_valid_prefixes,
)
from macc.world import Block, GridDims, HeightMap, generate_random_structure


def _shadow_brute(tower, dims):
    # scan the whole grid volume and keep what the pyramid inequality admits
    out = set()
    for x in range(dims.x_size):
        for y in range(dims.y_size):
            for z in range(1, dims.z_size + 1):
                d = abs(x - tower.x) + abs(y - tower.y)
                if d < tower.height and z <= tower.height - d:
                    out.add((x, y, z))
    return out


def _single(dims, x, y, h):
    arr = np.zeros((dims.x_size, dims.y_size), dtype=int)
    arr[x, y] = h
    return HeightMap(dims, arr)


def test_shadow_h1_is_its_own_cell():
    assert shadow_region(Tower(3, 3, 1), GridDims(7, 7, 4)) == {Block(3, 3, 1)}


def test_shadow_h3_interior_has_19_cells():
    s = shadow_region(Tower(5, 5, 3), GridDims(10, 10, 4))
    assert len(s) == 19
    by_dist = {}
    for b in s:
        d = abs(b.x - 5) + abs(b.y - 5)
        by_dist[d] = by_dist.get(d, 0) + 1
    assert by_dist == {0: 3, 1: 8, 2: 8}


def test_shadow_h2_corner_is_clipped():
    s = shadow_region(Tower(0, 0, 2), GridDims(10, 10, 4))
    assert s == {Block(0, 0, 1), Block(0, 0, 2), Block(1, 0, 1), Block(0, 1, 1)}


@pytest.mark.parametrize("tower", [Tower(0, 0, 4), Tower(3, 1, 3), Tower(6, 6, 2), Tower(2, 5, 4)])
def test_shadow_matches_brute_force(tower):
    dims = GridDims(7, 7, 4)
    assert set(shadow_region(tower, dims)) == _shadow_brute(tower, dims)


def test_single_tower_is_one_substructure():
    d = decompose(_single(GridDims(5, 5, 2), 2, 2, 2))
    assert len(d) == 1
    assert d.substructures[0].blocks == {Block(2, 2, 1), Block(2, 2, 2)}


def test_adjacent_equal_towers_hand_trace():
    arr = np.zeros((5, 5), dtype=int)
    arr[2, 2] = arr[2, 3] = 2
    d = decompose(HeightMap(GridDims(5, 5, 2), arr))
    assert len(d) == 2
    first, second = d.substructures
    assert (first.anchor.x, first.anchor.y) == (2, 2)
    assert first.blocks == {Block(2, 2, 1), Block(2, 2, 2), Block(2, 3, 1)}
    assert second.blocks == {Block(2, 3, 2)}


def test_reversed_stacked_order_is_invalid():
    arr = np.zeros((5, 5), dtype=int)
    arr[2, 2] = arr[2, 3] = 2
    d = decompose(HeightMap(GridDims(5, 5, 2), arr))
    flipped = Decomposition(tuple(reversed(d.substructures)), d.source)
    assert verify_valid_prefixes(d)
    assert not verify_valid_prefixes(flipped)


def test_single_substructure_prefix_valid():
    assert verify_valid_prefixes(decompose(_single(GridDims(3, 3, 1), 1, 1, 1)))


def test_empty_structure_has_no_substructures():
    d = decompose(HeightMap.empty(GridDims(3, 3, 2)))
    assert len(d) == 0 and is_partition(d) and verify_valid_prefixes(d)


@given(heightmaps(max_x=7, max_y=7))
def test_decomposition_properties(h):
    d = decompose(h)
    assert is_partition(d)
    assert verify_valid_prefixes(d)
    heights = [s.anchor.height for s in d.substructures]
    assert heights == sorted(heights, reverse=True)
    for s in d.substructures:
        assert s.blocks <= shadow_region(s.anchor, h.dims)
        assert Block(s.anchor.x, s.anchor.y, s.anchor.height) in s.blocks
        assert h[s.anchor.x, s.anchor.y] == s.anchor.height
    assert decompose(h) == d


@pytest.mark.parametrize("seed", range(5))
def test_corpus_round_trip(seed):
    h = generate_random_structure(GridDims(7, 7, 4), seed=seed)
    d = decompose(h)
    assert loads_decomposition(dumps_decomposition(d), h) == d


def test_merge_keeps_smaller_index_and_taller_anchor():
    arr = np.zeros((5, 5), dtype=int)
    arr[2, 2] = arr[2, 3] = 2
    a, b = decompose(HeightMap(GridDims(5, 5, 2), arr)).substructures
    m = merge_substructures(b, a)
    assert m.index == 1
    assert m.anchor == a.anchor
    assert m.blocks == a.blocks | b.blocks
