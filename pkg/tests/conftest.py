import numpy as np
import pytest
from hypothesis import settings, strategies as st

from macc.world import GridDims, HeightMap

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@st.composite
def heightmaps(draw, max_x=6, max_y=6, max_z=4, min_x=1, min_y=1):
    X = draw(st.integers(min_x, max_x))
    Y = draw(st.integers(min_y, max_y))
    Z = draw(st.integers(1, max_z))
    flat = draw(st.lists(st.integers(0, Z), min_size=X * Y, max_size=X * Y))
    return HeightMap(GridDims(X, Y, Z), np.array(flat).reshape(X, Y))


def hmap_from_rows(rows, z):
    """Heightmap from rows listed as in the text format: rows[y][x]."""
    arr = np.array(rows).T
    return HeightMap(GridDims(arr.shape[0], arr.shape[1], z), arr)


@pytest.fixture
def tower_4x4x3():
    h = np.zeros((4, 4), dtype=int)
    h[1, 1] = 2
    return HeightMap(GridDims(4, 4, 3), h)
