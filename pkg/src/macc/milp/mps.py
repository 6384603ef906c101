"""Fixed-field MPS export of a ``MilpModel``."""
from __future__ import annotations

from pathlib import Path

import numpy as np

INF = 1e30


def _col(i: int) -> str:
    return f"C{i:07d}"


def _row(i: int) -> str:
    return f"R{i:07d}"


def _num(v: float) -> str:
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def _field(code: str, name: str, name2: str = "", value: str = "", name3: str = "", value2: str = "") -> str:
    # columns 2-3, 5-12, 15-22, 25-36, 40-47, 50-61
    line = f" {code:<2} {name:<8}  {name2:<8}  {value:>12}"
    if name3:
        line += f"   {name3:<8}  {value2:>12}"
    return line.rstrip()


def write_mps(model, path, name: str = "MACC") -> None:
    """Write ``model`` with 8-character names ``C#######`` / ``R#######``.

    Row ``r`` of the model is ``R{r}``; column ``i`` is ``C{i}``.  Every
    column is binary (bounds 0/1 inside an integer marker block).  Two-sided
    rows are written as ``E`` or ``L`` rows with a ``RANGES`` entry.
    """
    A = model.A.tocsc()
    lo, hi = model.row_lo, model.row_hi
    lines = [f"NAME          {name[:8]}", "ROWS", " N  COST"]
    rhs = []
    ranges = []
    for r in range(model.n_constraints):
        l, h = lo[r], hi[r]
        if np.isfinite(l) and np.isfinite(h):
            if l == h:
                lines.append(f" E  {_row(r)}")
                rhs.append((r, l))
            else:
                lines.append(f" L  {_row(r)}")
                rhs.append((r, h))
                ranges.append((r, h - l))
        elif np.isfinite(h):
            lines.append(f" L  {_row(r)}")
            rhs.append((r, h))
        elif np.isfinite(l):
            lines.append(f" G  {_row(r)}")
            rhs.append((r, l))
        else:
            lines.append(f" N  {_row(r)}")
    lines.append("COLUMNS")
    lines.append("    MARKER                 'MARKER'                 'INTORG'")
    for j in range(model.n_vars):
        entries = []
        if model.c[j]:
            entries.append(("COST", model.c[j]))
        start, end = A.indptr[j], A.indptr[j + 1]
        for r, v in zip(A.indices[start:end], A.data[start:end]):
            entries.append((_row(r), v))
        if not entries:
            entries.append(("COST", 0.0))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            if len(pair) == 2:
                lines.append(_field("", _col(j), pair[0][0], _num(pair[0][1]), pair[1][0], _num(pair[1][1])))
            else:
                lines.append(_field("", _col(j), pair[0][0], _num(pair[0][1])))
    lines.append("    MARKER                 'MARKER'                 'INTEND'")
    lines.append("RHS")
    for r, v in rhs:
        if v != 0:
            lines.append(_field("", "RHS", _row(r), _num(v)))
    if ranges:
        lines.append("RANGES")
        for r, v in ranges:
            lines.append(_field("", "RNG", _row(r), _num(v)))
    lines.append("BOUNDS")
    for j in range(model.n_vars):
        l, u = model.lb[j], model.ub[j]
        if l == u:
            lines.append(_field("FX", "BND", _col(j), _num(l)))
        else:
            lines.append(_field("UP", "BND", _col(j), _num(u)))
            if l != 0:
                lines.append(_field("LO", "BND", _col(j), _num(l)))
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def export_model(model, path) -> Path:
    path = Path(path)
    write_mps(model, path)
    return path
