"""Free-format MPS export with conic sections.

Linear rows keep their ``family:entity:t:k`` names.  Every cone row ``cid`` gets one
auxiliary free column per cone member, named ``cid#j``, tied to the affine member
by an equality row of the same name; the cone itself is declared in a
``CSECTION cid 0.0 QUAD`` block listing those columns with the head first.  The
objective constant is written as minus the RHS of the objective row.
"""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import numpy as np

from .problem import EQ, LE, MicpProblem

OBJ_ROW = "obj"


def _num(v: float) -> str:
    return repr(float(v))


def to_mps(problem: MicpProblem, name: str = "w2h") -> str:
    cols: dict[str, list[tuple[str, float]]] = defaultdict(list)
    var_names = [str(v) for v in problem.variables]
    row_lines: list[str] = []
    rhs: list[tuple[str, float]] = []
    aux_cols: list[str] = []
    cones: list[tuple[str, list[str]]] = []

    c = problem.c
    for i in np.flatnonzero(c):
        cols[var_names[i]].append((OBJ_ROW, c[i]))
    if problem.obj_const:
        rhs.append((OBJ_ROW, -problem.obj_const))

    for row in problem.rows:
        rid = str(row.cid)
        if row.sense in (EQ, LE):
            e = row.exprs[0]
            row_lines.append(f" {'E' if row.sense == EQ else 'L'}  {rid}")
            for i, a in zip(e.idx, e.coef):
                cols[var_names[i]].append((rid, a))
            if e.const:
                rhs.append((rid, -e.const))
            continue
        members = []
        for j, e in enumerate(row.exprs):
            aux = f"{rid}#{j}"
            members.append(aux)
            aux_cols.append(aux)
            row_lines.append(f" E  {aux}")
            cols[aux].append((aux, 1.0))
            for i, a in zip(e.idx, e.coef):
                cols[var_names[i]].append((aux, -a))
            if e.const:
                rhs.append((aux, e.const))
        cones.append((rid, members))

    out = [f"NAME          {name}", "OBJSENSE", "    MIN", "ROWS", f" N  {OBJ_ROW}"]
    out += row_lines
    out.append("COLUMNS")
    binaries = set(problem.binaries)
    in_int = False
    marker = 0
    for i, vn in enumerate(var_names):
        if (i in binaries) != in_int:
            tag = "INTORG" if not in_int else "INTEND"
            out.append(f"    MARKER{marker}  'MARKER'  '{tag}'")
            marker += 1
            in_int = not in_int
        entries = cols.get(vn) or [(OBJ_ROW, 0.0)]
        for r, a in entries:
            out.append(f"    {vn}  {r}  {_num(a)}")
    if in_int:
        out.append(f"    MARKER{marker}  'MARKER'  'INTEND'")
    for aux in aux_cols:
        for r, a in cols[aux]:
            out.append(f"    {aux}  {r}  {_num(a)}")
    if rhs:
        out.append("RHS")
        out += [f"    rhs  {r}  {_num(v)}" for r, v in rhs]
    out.append("BOUNDS")
    lb, ub = problem.lb, problem.ub
    for i, vn in enumerate(var_names):
        if i in binaries and lb[i] == 0.0 and ub[i] == 1.0:
            out.append(f" BV bnd  {vn}")
        elif lb[i] == ub[i]:
            out.append(f" FX bnd  {vn}  {_num(lb[i])}")
        else:
            if np.isfinite(lb[i]):
                out.append(f" LO bnd  {vn}  {_num(lb[i])}")
            else:
                out.append(f" MI bnd  {vn}")
            if np.isfinite(ub[i]):
                out.append(f" UP bnd  {vn}  {_num(ub[i])}")
    out += [f" FR bnd  {aux}" for aux in aux_cols]
    for rid, members in cones:
        out.append(f"CSECTION  {rid}  0.0  QUAD")
        out += [f"    {m}" for m in members]
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def export_mps(problem: MicpProblem, path: str | Path, name: str = "w2h") -> Path:
    path = Path(path)
    path.write_text(to_mps(problem, name))
    return path
