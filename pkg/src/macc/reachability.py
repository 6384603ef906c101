"""Traversability of a heightmap from outside the grid and the removability check."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .decompose import Substructure
from .world import Block, GridDims, HeightMap, union_heightmap


@dataclass(frozen=True)
class TraversabilityMatrix:
    dims: GridDims
    reachable: np.ndarray  # bool, (x_size, y_size)
    base: HeightMap

    def __getitem__(self, xy) -> bool:
        return bool(self.reachable[xy])

    def dump(self) -> str:
        rows = []
        for y in reversed(range(self.dims.y_size)):
            rows.append("".join("." if self.reachable[x, y] else "#" for x in range(self.dims.x_size)))
        return "\n".join(rows)


@dataclass(frozen=True)
class UnreachableContour:
    cells: frozenset  # of (x, y)

    def __contains__(self, xy):
        return tuple(xy) in self.cells

    def __len__(self):
        return len(self.cells)


def traversability(env: HeightMap) -> TraversabilityMatrix:
    """Breadth-first climb from the border.

    Border columns of height <= 1 are entered from the ground outside;
    every other column is reachable from a reachable 4-neighbour whose
    height differs by at most one.
    """
    dims = env.dims
    h = env.heights
    reach = np.zeros((dims.x_size, dims.y_size), dtype=bool)
    queue = deque()
    for x, y in dims.columns():
        if dims.is_border(x, y) and h[x, y] <= 1:
            reach[x, y] = True
            queue.append((x, y))
    while queue:
        x, y = queue.popleft()
        for nx, ny in dims.neighbors(x, y):
            if not reach[nx, ny] and abs(int(h[nx, ny]) - int(h[x, y])) <= 1:
                reach[nx, ny] = True
                queue.append((nx, ny))
    reach.setflags(write=False)
    return TraversabilityMatrix(dims, reach, env)


def contours(m: TraversabilityMatrix) -> list[UnreachableContour]:
    """Maximal 4-connected components of unreachable cells, in scan order."""
    dims = m.dims
    seen = np.array(m.reachable, copy=True)
    found = []
    for x, y in dims.columns():
        if seen[x, y]:
            continue
        comp = []
        stack = [(x, y)]
        seen[x, y] = True
        while stack:
            cx, cy = stack.pop()
            comp.append((cx, cy))
            for nx, ny in dims.neighbors(cx, cy):
                if not seen[nx, ny]:
                    seen[nx, ny] = True
                    stack.append((nx, ny))
        found.append(UnreachableContour(frozenset(comp)))
    return found


def enclosed_cells(m: TraversabilityMatrix) -> set[tuple[int, int]]:
    """Unreachable cells lying strictly inside their contour.

    A cell is enclosed when it and all four of its neighbours are in-grid and
    unreachable, so no reachable standing spot touches the column.
    """
    dims = m.dims
    out = set()
    for contour in contours(m):
        for x, y in contour.cells:
            if dims.is_border(x, y):
                continue
            if all((n in contour) for n in dims.neighbors(x, y)):
                out.add((x, y))
    return out


def is_removable(s: Substructure, remaining: Sequence[Substructure], dims: GridDims) -> bool:
    """Sufficient (not necessary) test that ``s`` can be taken off the union of ``remaining``.

    Fails when a block of ``s`` carries another substructure's block, when
    a block is boxed in at its own level by other substructures on all four
    sides, or when a block's column lies inside a region that robots cannot
    reach once ``s`` is gone.
    """
    others = [r for r in remaining if r.index != s.index]
    owner: dict[Block, int] = {}
    for r in others:
        for b in r.blocks:
            owner[b] = r.index

    for x, y, z in s.blocks:
        if (x, y, z + 1) in owner:
            return False
    # border blocks are never surrounded: off-grid counts as open
    for x, y, z in s.blocks:
        nbrs = list(dims.neighbors(x, y))
        if not dims.is_border(x, y) and nbrs and all((nx, ny, z) in owner for nx, ny in nbrs):
            return False

    env = union_heightmap([r.blocks for r in others], dims)
    enclosed = enclosed_cells(traversability(env))
    return not any((b.x, b.y) in enclosed for b in s.blocks)


def remaining_env(remaining: Iterable[Substructure], dims: GridDims) -> HeightMap:
    return union_heightmap([r.blocks for r in remaining], dims)


def dump_traversability(env: HeightMap) -> str:
    """Text grid of the matrix (``.`` reachable, ``#`` not) followed by the contour list."""
    m = traversability(env)
    lines = [m.dump(), f"contours: {len(contours(m))}"]
    for i, c in enumerate(contours(m), 1):
        lines.append(f"  {i}: " + " ".join(f"({x},{y})" for x, y in sorted(c.cells)))
    return "\n".join(lines)
