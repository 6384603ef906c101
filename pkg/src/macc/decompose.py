"""Split a structure into substructures by the shadow regions of its towers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .world import Block, BlockSet, GridDims, HeightMap, is_valid_structure


@dataclass(frozen=True)
class Tower:
    x: int
    y: int
    height: int


@dataclass(frozen=True)
class Substructure:
    index: int  # 1-based discovery order
    anchor: Tower
    blocks: BlockSet = field(repr=False)

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("a substructure needs at least one block")

    def __len__(self):
        return len(self.blocks)

    def columns(self) -> set[tuple[int, int]]:
        return {(b.x, b.y) for b in self.blocks}


@dataclass(frozen=True)
class Decomposition:
    substructures: tuple[Substructure, ...]
    source: HeightMap

    def __len__(self):
        return len(self.substructures)

    def by_index(self) -> dict[int, Substructure]:
        return {s.index: s for s in self.substructures}


def shadow_region(tower: Tower, dims: GridDims) -> BlockSet:
    """Cells (x', y', z') with manhattan distance d < h and 1 <= z' <= h - d, clipped to the grid."""
    h = tower.height
    cells = []
    for dx in range(-(h - 1), h):
        rest = h - 1 - abs(dx)
        for dy in range(-rest, rest + 1):
            x, y = tower.x + dx, tower.y + dy
            if not dims.contains(x, y):
                continue
            top = h - abs(dx) - abs(dy)
            cells.extend(Block(x, y, z) for z in range(1, top + 1))
    return BlockSet(cells)


def towers(hmap: HeightMap) -> list[Tower]:
    """Every nonzero column, tallest first; ties broken by ascending (x, y)."""
    found = [Tower(x, y, hmap[x, y]) for x, y in hmap.dims.columns() if hmap[x, y] > 0]
    return sorted(found, key=lambda t: (-t.height, t.x, t.y))


def decompose(hmap: HeightMap) -> Decomposition:
    structure = hmap.blocks()
    claimed: set[Block] = set()
    subs = []
    for tower in towers(hmap):
        if Block(tower.x, tower.y, tower.height) in claimed:
            continue
        mine = (shadow_region(tower, hmap.dims) & structure) - claimed
        claimed |= mine
        subs.append(Substructure(len(subs) + 1, tower, BlockSet(mine)))
    return Decomposition(tuple(subs), hmap)


def verify_valid_prefixes(d: Decomposition) -> bool:
    """True iff each prefix union of the substructures, in list order, is a valid structure."""
    acc: set[Block] = set()
    for sub in d.substructures:
        acc |= sub.blocks
        if not is_valid_structure(acc):
            return False
    return True


def is_partition(d: Decomposition) -> bool:
    seen: set[Block] = set()
    for sub in d.substructures:
        if seen & sub.blocks:
            return False
        seen |= sub.blocks
    return seen == set(d.source.blocks())


def merge_substructures(a: Substructure, b: Substructure) -> Substructure:
    """Union two substructures; the result keeps the smaller index and the taller anchor."""
    anchor = max((a.anchor, b.anchor), key=lambda t: (t.height, -t.x, -t.y))
    return Substructure(min(a.index, b.index), anchor, a.blocks | b.blocks)


def decomposition_document(d: Decomposition) -> dict:
    dims = d.source.dims
    return {
        "dims": [dims.x_size, dims.y_size, dims.z_size],
        "substructures": [
            {
                "index": s.index,
                "anchor": {"x": s.anchor.x, "y": s.anchor.y, "height": s.anchor.height},
                "blocks": sorted([list(b) for b in s.blocks]),
            }
            for s in d.substructures
        ],
    }


def dumps_decomposition(d: Decomposition) -> str:
    return json.dumps(decomposition_document(d), indent=1)


def loads_decomposition(text: str, source: HeightMap) -> Decomposition:
    doc = json.loads(text)
    subs = tuple(
        Substructure(
            int(s["index"]),
            Tower(int(s["anchor"]["x"]), int(s["anchor"]["y"]), int(s["anchor"]["height"])),
            BlockSet(Block(*map(int, b)) for b in s["blocks"]),
        )
        for s in doc["substructures"]
    )
    return Decomposition(subs, source)
