"""Build orders for substructures via reverse disassembly."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .decompose import Decomposition, Substructure, merge_substructures
from .reachability import is_removable
from .world import is_valid_structure

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergeEvent:
    kept: int
    absorbed: int
    step: int  # number of substructures already disassembled when the merge happened


@dataclass(frozen=True)
class BuildOrder:
    sequence: tuple[int, ...]
    merges: tuple[MergeEvent, ...] = ()
    substructures: tuple[Substructure, ...] = field(default=(), repr=False)

    def in_order(self) -> list[Substructure]:
        by_index = {s.index: s for s in self.substructures}
        return [by_index[i] for i in self.sequence]


@dataclass(frozen=True)
class DependencyEdge:
    dependent: int
    prerequisite: int


@dataclass(frozen=True)
class ParallelSchedule:
    stages: tuple[frozenset, ...]
    merges: tuple[MergeEvent, ...] = ()
    substructures: tuple[Substructure, ...] = field(default=(), repr=False)

    def flatten(self) -> tuple[int, ...]:
        return tuple(i for stage in self.stages for i in sorted(stage))

    def stage_members(self, k: int) -> list[Substructure]:
        by_index = {s.index: s for s in self.substructures}
        return [by_index[i] for i in sorted(self.stages[k])]


def _merge_last_two(pending: list[Substructure], removed: int, merges: list) -> list[Substructure]:
    """Merge the two latest-discovered substructures still pending."""
    ranked = sorted(pending, key=lambda s: s.index)
    a, b = ranked[-2], ranked[-1]
    merged = merge_substructures(a, b)
    merges.append(MergeEvent(kept=merged.index, absorbed=max(a.index, b.index), step=removed))
    log.warning("no substructure removable; merging %d and %d", a.index, b.index)
    return [s for s in pending if s.index not in (a.index, b.index)] + [merged]


def order_substructures(d: Decomposition) -> BuildOrder:
    """Disassemble in reverse discovery order and return the reversed removal order.

    A pass walks the pending substructures from the latest discovered to the
    earliest and removes every one that is removable at that moment.  A pass
    that removes nothing merges the two latest-discovered pending
    substructures and starts over.
    """
    dims = d.source.dims
    pending = sorted(d.substructures, key=lambda s: s.index)
    removed: list[Substructure] = []
    merges: list[MergeEvent] = []
    while pending:
        progress = False
        for sub in sorted(pending, key=lambda s: s.index, reverse=True):
            if is_removable(sub, pending, dims):
                pending = [s for s in pending if s.index != sub.index]
                removed.append(sub)
                progress = True
        if not progress and pending:
            if len(pending) == 1:  # the whole remaining structure; nothing can block it
                removed.append(pending.pop())
            else:
                pending = _merge_last_two(pending, len(removed), merges)
    removed.reverse()
    return BuildOrder(tuple(s.index for s in removed), tuple(merges), tuple(removed))


def parallel_schedule(d: Decomposition) -> ParallelSchedule:
    """Group substructures into stages that can be built at the same time.

    Each disassembly round removes every substructure removable against the
    set pending at the start of the round; the rounds reversed are the
    construction stages.
    """
    dims = d.source.dims
    pending = sorted(d.substructures, key=lambda s: s.index)
    rounds: list[list[Substructure]] = []
    merges: list[MergeEvent] = []
    while pending:
        batch = [s for s in pending if is_removable(s, pending, dims)]
        if not batch:
            if len(pending) == 1:
                batch = list(pending)
            else:
                pending = _merge_last_two(pending, sum(map(len, rounds)), merges)
                continue
        rounds.append(batch)
        gone = {s.index for s in batch}
        pending = [s for s in pending if s.index not in gone]
    rounds.reverse()
    subs = tuple(s for stage in rounds for s in sorted(stage, key=lambda s: s.index))
    return ParallelSchedule(tuple(frozenset(s.index for s in r) for r in rounds), tuple(merges), subs)


def dependencies(d: Decomposition) -> list[DependencyEdge]:
    """Edges i -> j (j < i) where dropping S_j from the prefix union up to S_i breaks validity."""
    subs = sorted(d.substructures, key=lambda s: s.index)
    edges = []
    for pos, si in enumerate(subs):
        for sj in subs[:pos]:
            rest = set()
            for sk in subs[: pos + 1]:
                if sk.index != sj.index:
                    rest |= sk.blocks
            if not is_valid_structure(rest):
                edges.append(DependencyEdge(si.index, sj.index))
    return edges


def is_feasible_order(d: Decomposition, sequence) -> bool:
    """Forward check of a build sequence.

    Every prefix union must be a valid structure and each substructure must
    pass the removability test against the prefix that ends with it, i.e.
    it could be the next one taken off when disassembling backwards.
    """
    by_index = d.by_index()
    if sorted(sequence) != sorted(by_index):
        return False
    prefix: list[Substructure] = []
    blocks: set = set()
    for i in sequence:
        sub = by_index[i]
        prefix.append(sub)
        blocks |= sub.blocks
        if not is_valid_structure(blocks):
            return False
        if not is_removable(sub, prefix, d.source.dims):
            return False
    return True


def order_document(order: BuildOrder, edges: list[DependencyEdge] | None = None,
                   schedule: ParallelSchedule | None = None) -> dict:
    doc = {
        "sequence": list(order.sequence),
        "merges": [{"kept": m.kept, "absorbed": m.absorbed, "step": m.step} for m in order.merges],
    }
    if edges is not None:
        doc["dependencies"] = [[e.dependent, e.prerequisite] for e in edges]
    if schedule is not None:
        doc["stages"] = [sorted(s) for s in schedule.stages]
    return doc


def dumps_order(order: BuildOrder, edges=None, schedule=None) -> str:
    return json.dumps(order_document(order, edges, schedule), indent=1)


def edge_list(edges: list[DependencyEdge]) -> str:
    return "".join(f"{e.dependent} {e.prerequisite}\n" for e in edges)
