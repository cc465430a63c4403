"""Mixed-integer conic problem container with stable constraint identifiers.

Rows are stored in affine form:

* ``eq``  : ``e(x) == 0``
* ``le``  : ``e(x) <= 0``
* ``soc`` : ``||(e_1(x), ..., e_k(x))||_2 <= e_0(x)``

where every ``e`` is ``coef . x[idx] + const``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

EQ, LE, SOC = "eq", "le", "soc"


@dataclass(frozen=True, order=True)
class VarRef:
    kind: str
    entity: str
    t: int

    def __str__(self) -> str:
        return f"{self.kind}:{self.entity}:{self.t}"


@dataclass(frozen=True, order=True)
class ConstraintId:
    family: str
    entity: str
    t: int
    k: int = 0

    def __str__(self) -> str:
        return f"{self.family}:{self.entity}:{self.t}:{self.k}"

    @classmethod
    def parse(cls, text: str) -> "ConstraintId":
        family, entity, t, k = text.rsplit(":", 3)
        return cls(family, entity, int(t), int(k))


@dataclass(frozen=True)
class Affine:
    idx: np.ndarray
    coef: np.ndarray
    const: float = 0.0

    def value(self, x: np.ndarray) -> float:
        return float(self.coef @ x[self.idx]) + self.const

    @property
    def max_coef(self) -> float:
        return float(np.abs(self.coef).max()) if len(self.coef) else 0.0


@dataclass(frozen=True)
class Row:
    cid: ConstraintId
    sense: str
    exprs: tuple[Affine, ...]

    @property
    def scale(self) -> float:
        """Largest coefficient magnitude; rows are normalized by it."""
        s = max(e.max_coef for e in self.exprs)
        return s if s > 0 else 1.0

    def variables(self) -> set[int]:
        out: set[int] = set()
        for e in self.exprs:
            out.update(int(i) for i in e.idx)
        return out

    def slack(self, x: np.ndarray) -> float:
        """Normalized slack; negative means violated.  For ``eq`` rows, ``-|e(x)|``."""
        if self.sense == EQ:
            return -abs(self.exprs[0].value(x)) / self.scale
        if self.sense == LE:
            return -self.exprs[0].value(x) / self.scale
        lhs = np.array([e.value(x) for e in self.exprs[1:]])
        return (self.exprs[0].value(x) - float(np.linalg.norm(lhs))) / self.scale


class MicpProblem:
    """Variables with bounds, tagged rows, binary set and a linear objective."""

    def __init__(self):
        self.variables: list[VarRef] = []
        self.index: dict[VarRef, int] = {}
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self.rows: list[Row] = []
        self.registry: dict[ConstraintId, int] = {}
        self._obj: dict[int, float] = {}
        self.obj_const = 0.0
        # ids of the source problem (set by transforms) so restrictions can tell
        # consumed rows from unknown ones
        self.origin_ids: frozenset[ConstraintId] | None = None
        self.meta: dict = {}

    # -- variables ------------------------------------------------------------------

    def add_var(self, ref: VarRef, lb: float, ub: float, binary: bool = False) -> int:
        if ref in self.index:
            raise ValueError(f"duplicate variable {ref}")
        if lb > ub:
            raise ValueError(f"variable {ref}: lb {lb} > ub {ub}")
        self.index[ref] = len(self.variables)
        self.variables.append(ref)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._binary.append(binary)
        return self.index[ref]

    def var(self, kind: str, entity: str, t: int) -> int:
        return self.index[VarRef(kind, entity, t)]

    @property
    def n(self) -> int:
        return len(self.variables)

    @property
    def lb(self) -> np.ndarray:
        return np.array(self._lb)

    @property
    def ub(self) -> np.ndarray:
        return np.array(self._ub)

    def set_bounds(self, i: int, lb: float, ub: float) -> None:
        self._lb[i] = float(lb)
        self._ub[i] = float(ub)

    @property
    def binaries(self) -> list[int]:
        return [i for i, b in enumerate(self._binary) if b]

    def is_binary(self, i: int) -> bool:
        return self._binary[i]

    # -- rows -----------------------------------------------------------------------

    @staticmethod
    def affine(terms: Mapping[int, float] | Iterable[tuple[int, float]],
               const: float = 0.0) -> Affine:
        acc: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for i, c in items:
            acc[i] = acc.get(i, 0.0) + float(c)
        keys = sorted(k for k, v in acc.items() if v != 0.0)
        return Affine(np.array(keys, dtype=np.int64),
                      np.array([acc[k] for k in keys], dtype=float), float(const))

    def add_row(self, row: Row) -> None:
        if row.cid in self.registry:
            raise ValueError(f"duplicate constraint id {row.cid}")
        self.registry[row.cid] = len(self.rows)
        self.rows.append(row)

    def add_eq(self, cid: ConstraintId, terms, rhs: float = 0.0) -> None:
        """``sum(terms) == rhs``"""
        self.add_row(Row(cid, EQ, (self.affine(terms, -rhs),)))

    def add_le(self, cid: ConstraintId, terms, rhs: float = 0.0) -> None:
        """``sum(terms) <= rhs``"""
        self.add_row(Row(cid, LE, (self.affine(terms, -rhs),)))

    def add_ge(self, cid: ConstraintId, terms, rhs: float = 0.0) -> None:
        neg = [(i, -c) for i, c in (terms.items() if isinstance(terms, Mapping) else terms)]
        self.add_le(cid, neg, -rhs)

    def add_soc(self, cid: ConstraintId, lhs: list[Affine], rhs: Affine) -> None:
        self.add_row(Row(cid, SOC, (rhs, *lhs)))

    def add_rotated(self, cid: ConstraintId, x: Affine, y: Affine, z0: float) -> None:
        """``x^2 <= y * z0`` for a positive constant ``z0``, in standard cone form."""
        two_x = Affine(x.idx, 2.0 * x.coef, 2.0 * x.const)
        y_minus = Affine(y.idx, y.coef, y.const - z0)
        y_plus = Affine(y.idx, y.coef, y.const + z0)
        self.add_soc(cid, [two_x, y_minus], y_plus)

    def inequality_ids(self) -> list[ConstraintId]:
        """Registry order of rows that carry active/inactive labels."""
        return [r.cid for r in self.rows if r.sense != EQ]

    # -- objective ------------------------------------------------------------------

    def add_objective(self, i: int, c: float) -> None:
        self._obj[i] = self._obj.get(i, 0.0) + float(c)

    @property
    def c(self) -> np.ndarray:
        out = np.zeros(self.n)
        for i, v in self._obj.items():
            out[i] = v
        return out

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.obj_const

    # -- copying --------------------------------------------------------------------

    def copy_structure(self) -> "MicpProblem":
        """Shallow copy: rows are immutable so they are shared."""
        p = MicpProblem()
        p.variables = list(self.variables)
        p.index = dict(self.index)
        p._lb = list(self._lb)
        p._ub = list(self._ub)
        p._binary = list(self._binary)
        p.rows = list(self.rows)
        p.registry = dict(self.registry)
        p._obj = dict(self._obj)
        p.obj_const = self.obj_const
        p.origin_ids = self.origin_ids
        p.meta = dict(self.meta)
        return p

    def relaxed(self) -> "MicpProblem":
        """Continuous relaxation: every binary becomes a [0, 1] variable."""
        p = self.copy_structure()
        p._binary = [False] * self.n
        return p

    def with_rows(self, rows: list[Row]) -> "MicpProblem":
        p = self.copy_structure()
        p.rows = list(rows)
        p.registry = {r.cid: k for k, r in enumerate(p.rows)}
        return p

    def summary(self) -> dict[str, int]:
        counts = {EQ: 0, LE: 0, SOC: 0}
        for r in self.rows:
            counts[r.sense] += 1
        return {"variables": self.n, "binaries": len(self.binaries), **counts}

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.cid.family] = out.get(r.cid.family, 0) + 1
        return out
