from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import heightmaps
from macc.world import (
    Block,
    GridDims,
    HeightMap,
    StructureError,
    generate_random_structure,
    is_valid_structure,
    load_structure,
    loads_structure,
    occupancy,
    save_structure,
    union_heightmap,
)


def _supported(blocks):
    # independent reading of the support rule: walk every block down to the ground
    cells = set(blocks)
    for x, y, z in cells:
        for below in range(1, z):
            if (x, y, below) not in cells:
                return False
    return True


def test_empty_set_is_valid():
    assert is_valid_structure(set())


def test_stacked_pair_is_valid():
    assert is_valid_structure({Block(2, 2, 1), Block(2, 2, 2)})


def test_floating_block_is_invalid():
    assert not is_valid_structure({Block(2, 2, 2)})


@given(st.sets(st.tuples(st.integers(0, 3), st.integers(0, 3), st.integers(1, 4)), max_size=20))
def test_validity_matches_walk_down(cells):
    assert is_valid_structure({Block(*c) for c in cells}) == _supported(cells)


@given(heightmaps())
def test_heightmap_blocks_are_valid(h):
    assert is_valid_structure(h.blocks())
    assert len(h.blocks()) == h.total_blocks


def test_union_single_block():
    h = union_heightmap([{Block(0, 0, 1)}], GridDims(3, 3, 2))
    assert h[0, 0] == 1
    assert h.total_blocks == 1


def test_union_stacks_columns():
    h = union_heightmap([{Block(1, 1, 1)}, {Block(1, 1, 2)}], GridDims(3, 3, 2))
    assert h[1, 1] == 2


def test_union_rejects_gap():
    with pytest.raises(StructureError):
        union_heightmap([{Block(1, 1, 2)}], GridDims(3, 3, 2))


@given(heightmaps(), st.randoms(use_true_random=False))
def test_union_of_any_split_restores_map(h, rnd):
    blocks = sorted(h.blocks())
    rnd.shuffle(blocks)
    k = rnd.randint(0, len(blocks))
    assert union_heightmap([blocks[:k], blocks[k:]], h.dims) == h


@given(h=heightmaps())
def test_text_round_trip(tmp_path_factory, h):
    path = tmp_path_factory.mktemp("s") / "m.txt"
    save_structure(h, path)
    back = load_structure(path)
    assert back == h
    assert np.array_equal(back.heights, h.heights)


@given(h=heightmaps())
def test_json_round_trip(tmp_path_factory, h):
    path = tmp_path_factory.mktemp("s") / "m.json"
    save_structure(h, path)
    assert load_structure(path) == h


def test_text_layout_is_row_per_y():
    h = loads_structure("dims 3 2 4\n1 2 3\n0 0 4\n")
    assert h.dims == GridDims(3, 2, 4)
    assert h[2, 0] == 3 and h[2, 1] == 4 and h[0, 1] == 0


@pytest.mark.parametrize("text", [
    "dims 2 1 4\n5 0\n",  # taller than z_size
    "dims 2 1 4\n-1 0\n",  # negative
    "dims 2 2 4\n1 0\n",  # missing row
    "dims 2 1 4\n1 0 0\n",  # too many columns
    "dim 2 1 4\n1 0\n",  # bad header
    "dims 2 1 4\n1 x\n",
    '{"dims": [2, 1, 4], "heights": [[5, 0]]}',
    '{"dims": [2, 1, 4]}',
])
def test_bad_files_rejected(text):
    with pytest.raises(StructureError):
        loads_structure(text)


def test_occupancy_examples():
    d = GridDims(7, 7, 4)
    assert occupancy(HeightMap.empty(d)) == 0
    assert occupancy(HeightMap(d, np.full((7, 7), 4))) == 1
    h = np.zeros(49, dtype=int)
    h[:15] = 4  # 60 blocks
    h[0] = 3  # 59
    m = HeightMap(d, h.reshape(7, 7))
    assert Fraction(m.total_blocks, d.cells) == Fraction(59, 196)
    assert occupancy(m) == pytest.approx(0.301, abs=5e-4)


@pytest.mark.parametrize("seed", range(10))
def test_generator_7x7x4_band(seed):
    h = generate_random_structure(GridDims(7, 7, 4), (40, 60), seed=seed)
    assert 0.40 <= occupancy(h) <= 0.60
    assert h.total_blocks > 0
    assert is_valid_structure(h.blocks())


def test_generator_is_deterministic():
    d = GridDims(10, 10, 4)
    assert generate_random_structure(d, seed=3) == generate_random_structure(d, seed=3)
    assert generate_random_structure(d, seed=3) != generate_random_structure(d, seed=4)


@pytest.mark.parametrize("band", [(0, 0), (60, 40), (-1, 10), (10, 101)])
def test_generator_rejects_degenerate_band(band):
    with pytest.raises(ValueError):
        generate_random_structure(GridDims(5, 5, 2), band, seed=0)


def test_generator_unreachable_band():
    # one cell: occupancy jumps from 0 to 1/2 to 1, nothing lies in (10%, 20%)
    with pytest.raises(StructureError):
        generate_random_structure(GridDims(1, 1, 2), (10, 20), seed=0)


@given(st.integers(0, 10_000), st.sampled_from([(10, 40), (40, 60), (60, 90)]))
def test_generator_band_property(seed, band):
    h = generate_random_structure(GridDims(5, 4, 3), band, seed=seed)
    assert band[0] / 100 <= occupancy(h) <= band[1] / 100


def test_dims_parse_and_validation():
    assert GridDims.parse("7x7x4") == GridDims(7, 7, 4)
    with pytest.raises(StructureError):
        GridDims.parse("7x7")
    with pytest.raises(StructureError):
        GridDims(0, 3, 3)


def test_border_distance():
    d = GridDims(5, 5, 3)
    assert d.border_distance(0, 2) == 0
    assert d.border_distance(2, 2) == 2
    assert d.border_distance(1, 3) == 1
