"""Grid world primitives: dimensions, heightmaps, block sets, structure files.

Coordinates are 0-based for ``x`` and ``y`` and 1-based for block levels ``z``;
a column of height ``h`` holds blocks at ``z = 1..h``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

log = logging.getLogger(__name__)


class StructureError(ValueError):
    """Raised for malformed structures, structure files or block sets."""


@dataclass(frozen=True)
class GridDims:
    x_size: int
    y_size: int
    z_size: int

    def __post_init__(self):
        for name in ("x_size", "y_size", "z_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise StructureError(f"{name} must be a positive integer, got {value!r}")

    @property
    def cells(self) -> int:
        return self.x_size * self.y_size * self.z_size

    def contains(self, x: int, y: int) -> bool:
        return 0 <= x < self.x_size and 0 <= y < self.y_size

    def is_border(self, x: int, y: int) -> bool:
        return x == 0 or y == 0 or x == self.x_size - 1 or y == self.y_size - 1

    def border_distance(self, x: int, y: int) -> int:
        return min(x, y, self.x_size - 1 - x, self.y_size - 1 - y)

    def columns(self):
        for x in range(self.x_size):
            for y in range(self.y_size):
                yield x, y

    def neighbors(self, x: int, y: int):
        """In-grid 4-neighbours of ``(x, y)``."""
        for dx, dy in ((0, 1), (1, 0), (0, -1), (-1, 0)):
            nx, ny = x + dx, y + dy
            if self.contains(nx, ny):
                yield nx, ny

    def __str__(self):
        return f"{self.x_size}x{self.y_size}x{self.z_size}"

    @classmethod
    def parse(cls, text: str) -> "GridDims":
        try:
            x, y, z = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise StructureError(f"cannot parse dims {text!r}, expected e.g. 7x7x4") from None
        return cls(x, y, z)


class Block(NamedTuple):
    x: int
    y: int
    z: int


BlockSet = frozenset  # frozenset[Block]


class HeightMap:
    """Topmost-block height of every column of a ``GridDims`` world.

    Instances are immutable and hashable; ``heights`` is a read-only
    ``(x_size, y_size)`` integer array indexed ``heights[x][y]``.
    """

    __slots__ = ("dims", "heights", "_key")

    def __init__(self, dims: GridDims, heights):
        arr = np.array(heights, dtype=np.int64)
        if arr.shape != (dims.x_size, dims.y_size):
            raise StructureError(
                f"heights shape {arr.shape} does not match dims {dims} "
                f"(expected {(dims.x_size, dims.y_size)})"
            )
        if (arr < 0).any():
            raise StructureError("negative column height")
        if (arr > dims.z_size).any():
            raise StructureError(f"column height {arr.max()} exceeds z_size={dims.z_size}")
        arr.setflags(write=False)
        self.dims = dims
        self.heights = arr
        self._key = (dims, arr.tobytes())

    @classmethod
    def empty(cls, dims: GridDims) -> "HeightMap":
        return cls(dims, np.zeros((dims.x_size, dims.y_size), dtype=np.int64))

    def __getitem__(self, xy) -> int:
        x, y = xy
        return int(self.heights[x, y])

    def __eq__(self, other):
        if not isinstance(other, HeightMap):
            return NotImplemented
        return self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        rows = "/".join(" ".join(str(v) for v in self.heights[:, y]) for y in range(self.dims.y_size))
        return f"HeightMap({self.dims}, {rows})"

    @property
    def total_blocks(self) -> int:
        return int(self.heights.sum())

    def blocks(self) -> BlockSet:
        return BlockSet(
            Block(x, y, z)
            for (x, y), h in np.ndenumerate(self.heights)
            for z in range(1, int(h) + 1)
        )

    def with_heights(self, heights) -> "HeightMap":
        return HeightMap(self.dims, heights)

    def as_tuple(self) -> tuple:
        return tuple(int(v) for v in self.heights.ravel())


def is_valid_structure(blocks: Iterable[Block]) -> bool:
    """True iff every block above level 1 rests on a block directly below it."""
    cells = set(map(tuple, blocks))
    return all(z <= 1 or (x, y, z - 1) in cells for x, y, z in cells)


def union_heightmap(parts: Iterable[Iterable[Block]], dims: GridDims | None = None) -> HeightMap:
    """Collapse a union of block sets into a heightmap.

    Raises ``StructureError`` if a column of the union has a gap (the
    union is not a valid structure) or if blocks fall outside ``dims``.
    When ``dims`` is omitted the smallest grid containing the blocks is used.
    """
    cells = set()
    for part in parts:
        cells.update(Block(*b) for b in part)
    if dims is None:
        if not cells:
            raise StructureError("cannot infer dims of an empty union")
        dims = GridDims(
            max(b.x for b in cells) + 1, max(b.y for b in cells) + 1, max(b.z for b in cells)
        )
    heights = np.zeros((dims.x_size, dims.y_size), dtype=np.int64)
    counts = np.zeros_like(heights)
    for x, y, z in cells:
        if not dims.contains(x, y) or not 1 <= z <= dims.z_size:
            raise StructureError(f"block {(x, y, z)} outside grid {dims}")
        heights[x, y] = max(heights[x, y], z)
        counts[x, y] += 1
    gaps = np.argwhere(heights != counts)
    if len(gaps):
        x, y = (int(v) for v in gaps[0])
        raise StructureError(f"column {(x, y)} is not contiguous from z=1 (invalid substructure sequence)")
    return HeightMap(dims, heights)


def occupancy(hmap: HeightMap) -> float:
    """Blocks divided by the number of cells in the workspace."""
    return hmap.total_blocks / hmap.dims.cells


# --- structure files -------------------------------------------------------

def dumps_structure(hmap: HeightMap) -> str:
    d = hmap.dims
    lines = [f"dims {d.x_size} {d.y_size} {d.z_size}"]
    for y in range(d.y_size):
        lines.append(" ".join(str(int(v)) for v in hmap.heights[:, y]))
    return "\n".join(lines) + "\n"


def loads_structure(text: str) -> HeightMap:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return _loads_json(stripped)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise StructureError("empty structure file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "dims":
        raise StructureError(f"first line must be 'dims X Y Z', got {lines[0]!r}")
    try:
        dims = GridDims(*(int(v) for v in head[1:]))
    except ValueError:
        raise StructureError(f"bad dims line {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != dims.y_size:
        raise StructureError(f"expected {dims.y_size} rows, found {len(rows)}")
    heights = np.zeros((dims.x_size, dims.y_size), dtype=np.int64)
    for y, row in enumerate(rows):
        try:
            values = [int(v) for v in row.split()]
        except ValueError:
            raise StructureError(f"non-integer height in row {y}: {row!r}") from None
        if len(values) != dims.x_size:
            raise StructureError(f"row {y} has {len(values)} entries, expected {dims.x_size}")
        heights[:, y] = values
    return HeightMap(dims, heights)


def _loads_json(text: str) -> HeightMap:
    try:
        doc = json.loads(text)
        dims = GridDims(*(int(v) for v in doc["dims"]))
        rows = doc["heights"]
    except (ValueError, KeyError, TypeError) as exc:
        raise StructureError(f"bad structure document: {exc}") from None
    if len(rows) != dims.y_size or any(len(r) != dims.x_size for r in rows):
        raise StructureError("heights grid does not match dims")
    if any(not isinstance(v, int) for r in rows for v in r):
        raise StructureError("heights must be integers")
    return HeightMap(dims, np.array(rows, dtype=np.int64).T)


def structure_document(hmap: HeightMap) -> dict:
    d = hmap.dims
    return {
        "dims": [d.x_size, d.y_size, d.z_size],
        "heights": [[int(v) for v in hmap.heights[:, y]] for y in range(d.y_size)],
    }


def save_structure(hmap: HeightMap, path, fmt: str | None = None) -> None:
    """Write ``hmap`` as a text grid, or as JSON when ``fmt='json'`` or the suffix is ``.json``."""
    path = Path(path)
    if fmt is None:
        fmt = "json" if path.suffix == ".json" else "text"
    if fmt == "json":
        path.write_text(json.dumps(structure_document(hmap)) + "\n")
    else:
        path.write_text(dumps_structure(hmap))


def load_structure(path) -> HeightMap:
    return loads_structure(Path(path).read_text(encoding="utf-8"))


# --- random corpus ---------------------------------------------------------

def generate_random_structure(dims: GridDims, occupancy_band=(40, 60), seed: int = 0,
                              max_retries: int = 100) -> HeightMap:
    """Sample a nonempty structure whose occupancy falls inside ``occupancy_band`` (percent).

    A block count is drawn inside the band, distributed over random column
    heights, and the columns are then shuffled over the grid.  Every
    heightmap is a valid structure, so no repair is needed.
    """
    lo, hi = occupancy_band
    if not 0 <= lo < hi <= 100:
        raise ValueError(f"occupancy band must satisfy 0 <= lo < hi <= 100, got {occupancy_band}")
    n_cols = dims.x_size * dims.y_size
    cells = dims.cells
    n_min = max(1, int(np.ceil(lo / 100 * cells - 1e-9)))
    n_max = int(np.floor(hi / 100 * cells + 1e-9))
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        if n_min > n_max:
            break
        n_blocks = int(rng.integers(n_min, n_max + 1))
        heights = rng.integers(0, dims.z_size + 1, size=n_cols)
        # nudge random columns until the block count matches
        while heights.sum() != n_blocks:
            i = int(rng.integers(n_cols))
            if heights.sum() < n_blocks and heights[i] < dims.z_size:
                heights[i] += 1
            elif heights.sum() > n_blocks and heights[i] > 0:
                heights[i] -= 1
        rng.shuffle(heights)
        hmap = HeightMap(dims, heights.reshape(dims.x_size, dims.y_size))
        occ = 100 * occupancy(hmap)
        if hmap.total_blocks > 0 and lo - 1e-9 <= occ <= hi + 1e-9:
            return hmap
    raise StructureError(f"occupancy band {occupancy_band} unreachable for dims {dims}")
