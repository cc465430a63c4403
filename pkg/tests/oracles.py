"""Independent reference routes used by the tests.

Nothing here imports the package's solver or builder internals: the MPS reader
works from the exported text alone, and the conic solve goes through cvxpy with
SCS, a first-order splitting code unrelated to the interior-point solver the
package embeds.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp


@dataclass
class ParsedMps:
    name: str
    rows: dict[str, str] = field(default_factory=dict)  # row -> N/E/L/G
    columns: list[str] = field(default_factory=list)
    entries: dict[str, dict[str, float]] = field(default_factory=lambda: defaultdict(dict))
    rhs: dict[str, float] = field(default_factory=dict)
    lower: dict[str, float] = field(default_factory=dict)
    upper: dict[str, float] = field(default_factory=dict)
    integer: set[str] = field(default_factory=set)
    cones: list[tuple[str, list[str]]] = field(default_factory=list)


def parse_mps(text: str) -> ParsedMps:
    """Free-format MPS with MARKER integer blocks, BV/FX/LO/UP/MI/FR bounds and
    ``CSECTION name 0.0 QUAD`` cone blocks."""
    out = ParsedMps("")
    section = None
    in_int = False
    cone = None
    seen = set()
    for raw in text.splitlines():
        if not raw.strip():
            continue
        tok = raw.split()
        if not raw[0].isspace():
            section = tok[0]
            if section == "NAME":
                out.name = tok[1] if len(tok) > 1 else ""
            elif section == "CSECTION":
                cone = (tok[1], [])
                out.cones.append(cone)
            continue
        if section == "ROWS":
            out.rows[tok[1]] = tok[0]
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            col = tok[0]
            if col not in seen:
                seen.add(col)
                out.columns.append(col)
                if in_int:
                    out.integer.add(col)
            for r, v in zip(tok[1::2], tok[2::2]):
                out.entries[col][r] = out.entries[col].get(r, 0.0) + float(v)
        elif section == "RHS":
            for r, v in zip(tok[1::2], tok[2::2]):
                out.rhs[r] = float(v)
        elif section == "BOUNDS":
            kind, col = tok[0], tok[2]
            val = float(tok[3]) if len(tok) > 3 else None
            if kind == "BV":
                out.lower[col], out.upper[col] = 0.0, 1.0
                out.integer.add(col)
            elif kind == "FX":
                out.lower[col] = out.upper[col] = val
            elif kind == "LO":
                out.lower[col] = val
            elif kind == "UP":
                out.upper[col] = val
            elif kind == "MI":
                out.lower[col] = -np.inf
            elif kind == "FR":
                out.lower[col], out.upper[col] = -np.inf, np.inf
        elif section == "CSECTION":
            cone[1].append(tok[0])
    return out


def solve_parsed(m: ParsedMps, fix: dict[str, float] | None = None,
                 **solver_opts) -> tuple[str, float]:
    """Continuous solve of a parsed model (integrality dropped, ``fix`` pins columns)."""
    cols = {c: j for j, c in enumerate(m.columns)}
    x = cp.Variable(len(cols))
    rows = [r for r, kind in m.rows.items() if kind != "N"]
    obj_row = next(r for r, kind in m.rows.items() if kind == "N")
    rix = {r: k for k, r in enumerate(rows)}
    ri, ci, vals = [], [], []
    c = np.zeros(len(cols))
    for col, ents in m.entries.items():
        for r, v in ents.items():
            if r == obj_row:
                c[cols[col]] += v
            else:
                ri.append(rix[r])
                ci.append(cols[col])
                vals.append(v)
    A = sp.csr_matrix((vals, (ri, ci)), shape=(len(rows), len(cols)))
    b = np.array([m.rhs.get(r, 0.0) for r in rows])
    kinds = np.array([m.rows[r] for r in rows])
    cons = []
    for kind, op in (("E", lambda e, v: e == v), ("L", lambda e, v: e <= v),
                     ("G", lambda e, v: e >= v)):
        sel = np.flatnonzero(kinds == kind)
        if len(sel):
            cons.append(op(A[sel] @ x, b[sel]))
    lo = np.array([m.lower.get(col, 0.0) for col in m.columns])
    hi = np.array([m.upper.get(col, np.inf) for col in m.columns])
    for col, v in (fix or {}).items():
        lo[cols[col]] = hi[cols[col]] = v
    fin = np.isfinite(lo)
    if fin.any():
        cons.append(x[np.flatnonzero(fin)] >= lo[fin])
    fin = np.isfinite(hi)
    if fin.any():
        cons.append(x[np.flatnonzero(fin)] <= hi[fin])
    for _, members in m.cones:
        idx = [cols[mm] for mm in members]
        cons.append(cp.SOC(x[idx[0]], x[idx[1:]]))
    prob = cp.Problem(cp.Minimize(c @ x - m.rhs.get(obj_row, 0.0)), cons)
    prob.solve(**(solver_opts or {"solver": "SCS", "eps": 1e-10, "max_iters": 200000}))
    return prob.status, float(prob.value) if prob.value is not None else float("nan")

