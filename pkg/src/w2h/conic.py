"""Continuous conic solves, exact branch-and-bound, and active-set extraction.

Continuous problems are handed to the Clarabel interior-point solver in its
standard form ``A x + s = b, s in K`` with every row normalized by its largest
coefficient.  Fixed variables (``lb == ub``) are eliminated before the call, which
is how branching and binary fixing are applied without rebuilding rows.
"""
from __future__ import annotations

import hashlib
import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field

import clarabel
import numpy as np
import scipy.sparse as sp

from .problem import EQ, LE, SOC, ConstraintId, MicpProblem, VarRef

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"


@dataclass(frozen=True)
class SolverConfig:
    feas_tol: float = 1e-6
    cone_tol: float = 1e-6
    act_tol: float = 1e-6
    mip_gap: float = 1e-3
    max_iterations: int = 200
    bnb_node_limit: int = 20000
    time_limit: float = 600.0
    int_tol: float = 1e-6

    def __post_init__(self):
        for name in ("feas_tol", "cone_tol", "act_tol", "int_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be >= 0")
        if self.max_iterations < 1 or self.bnb_node_limit < 1 or self.time_limit <= 0:
            raise ValueError("iteration, node and time limits must be positive")


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float
    solve_time: float
    max_residual: float = float("inf")
    max_cone_violation: float = float("inf")
    variables: list[VarRef] = field(default_factory=list, repr=False)
    nodes: int = 0
    gap: float = 0.0
    bound: float = float("-inf")
    info: dict = field(default_factory=dict, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def has_point(self) -> bool:
        return self.x is not None

    @property
    def values(self) -> dict[VarRef, float]:
        if self.x is None:
            return {}
        return {v: float(val) for v, val in zip(self.variables, self.x)}

    def value(self, ref: VarRef) -> float:
        return float(self.x[self.variables.index(ref)])


@dataclass(frozen=True)
class ActiveSet:
    ids: frozenset[ConstraintId]

    @property
    def fingerprint(self) -> str:
        blob = "\n".join(sorted(str(c) for c in self.ids)).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __contains__(self, cid) -> bool:
        return cid in self.ids

    def __len__(self) -> int:
        return len(self.ids)


class CompiledProblem:
    """Row-normalized sparse standard form of a problem, reusable across bound changes."""

    def __init__(self, problem: MicpProblem):
        self.problem = problem
        n = problem.n
        order = ([k for k, r in enumerate(problem.rows) if r.sense == EQ]
                 + [k for k, r in enumerate(problem.rows) if r.sense == LE]
                 + [k for k, r in enumerate(problem.rows) if r.sense == SOC])
        ri, ci, vals, b = [], [], [], []
        starts = np.zeros(len(problem.rows), dtype=np.int64)
        dims = np.zeros(len(problem.rows), dtype=np.int64)
        soc_dims = []
        m = 0
        for k in order:
            row = problem.rows[k]
            s = row.scale
            starts[k] = m
            sign = 1.0 if row.sense != SOC else -1.0
            for e in row.exprs:
                ri.append(np.full(len(e.idx), m))
                ci.append(e.idx)
                vals.append(sign * e.coef / s)
                b.append(sign * -e.const / s)
                m += 1
            dims[k] = len(row.exprs)
            if row.sense == SOC:
                soc_dims.append(len(row.exprs))
        self.m = m
        self.m_eq = sum(1 for r in problem.rows if r.sense == EQ)
        self.m_le = sum(1 for r in problem.rows if r.sense == LE)
        self.soc_dims = soc_dims
        self.row_start = starts
        self.row_dim = dims
        cat = (lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt))
        self.A = sp.csc_matrix((cat(vals, float), (cat(ri, np.int64), cat(ci, np.int64))),
                               shape=(m, n))
        self.b = np.array(b, dtype=float)
        self.c = problem.c
        self.c0 = problem.obj_const
        self.senses = np.array([r.sense for r in problem.rows])
        # compact soc bookkeeping for vectorized slack evaluation
        soc_rows = [k for k in order if problem.rows[k].sense == SOC]
        self._soc_rows = np.array(soc_rows, dtype=np.int64)
        self._soc_heads = self.row_start[self._soc_rows] if soc_rows else np.zeros(0, np.int64)
        self._lin_rows = np.array([k for k in order if problem.rows[k].sense != SOC],
                                  dtype=np.int64)

    # -- evaluation -----------------------------------------------------------------

    def row_slacks(self, x: np.ndarray) -> np.ndarray:
        """Normalized slack per problem row (eq rows: ``-|residual|``)."""
        s = self.b - self.A @ x  # linear: slack of a.x <= b ; soc: cone vector
        out = np.zeros(len(self.problem.rows))
        lin = self._lin_rows
        if len(lin):
            vals = s[self.row_start[lin]]
            eq = self.senses[lin] == EQ
            out[lin] = np.where(eq, -np.abs(vals), vals)
        for k, head in zip(self._soc_rows, self._soc_heads):
            d = self.row_dim[k]
            out[k] = s[head] - np.linalg.norm(s[head + 1: head + d])
        return out

    def residuals(self, x: np.ndarray) -> tuple[float, float]:
        """(max linear/bound violation, max cone violation)."""
        sl = self.row_slacks(x)
        soc = self.senses == SOC
        lin_v = float(np.max(-sl[~soc], initial=0.0))
        cone_v = float(np.max(-sl[soc], initial=0.0))
        lb, ub = self.problem.lb, self.problem.ub
        bnd = float(np.max(np.maximum(lb - x, x - ub), initial=0.0))
        return max(lin_v, bnd, 0.0), max(cone_v, 0.0)

    # -- solving --------------------------------------------------------------------

    def solve(self, lb: np.ndarray, ub: np.ndarray, config: SolverConfig,
              deadline: float | None = None, c: np.ndarray | None = None
              ) -> tuple[str, np.ndarray | None, dict]:
        """Solve with the given bounds; ``c`` overrides the linear objective."""
        if np.any(lb > ub):
            return INFEASIBLE, None, {"reason": "empty bounds"}
        fixed = lb == ub
        free = np.flatnonzero(~fixed)
        x = np.where(fixed, lb, 0.0)
        b = self.b - self.A[:, np.flatnonzero(fixed)] @ lb[fixed] if fixed.any() else self.b.copy()
        A = self.A[:, free]
        # drop empty linear rows (constant after elimination), checking them
        nnz = np.diff(A.tocsr().indptr)
        lin = self.m_eq + self.m_le
        empty = np.flatnonzero(nnz[:lin] == 0)
        if len(empty):
            tol = 1e-9
            eq_e = empty[empty < self.m_eq]
            le_e = empty[empty >= self.m_eq]
            if np.any(np.abs(b[eq_e]) > tol) or np.any(b[le_e] < -tol):
                return INFEASIBLE, None, {"reason": "constant row violated"}
        keep_rows = np.ones(self.m, dtype=bool)
        keep_rows[empty] = False
        n_eq = self.m_eq - int(np.sum(empty < self.m_eq))
        n_le = self.m_le - int(np.sum(empty >= self.m_eq))
        A_rows = A.tocsr()[keep_rows]
        b_rows = b[keep_rows]
        if len(free) == 0:
            return OPTIMAL, x, {"iterations": 0}
        lbf, ubf = lb[free], ub[free]
        has_lo = np.isfinite(lbf)
        has_hi = np.isfinite(ubf)
        nf = len(free)
        lo_idx = np.flatnonzero(has_lo)
        hi_idx = np.flatnonzero(has_hi)
        B = sp.vstack([
            sp.csr_matrix((-np.ones(len(lo_idx)), (np.arange(len(lo_idx)), lo_idx)),
                          shape=(len(lo_idx), nf)),
            sp.csr_matrix((np.ones(len(hi_idx)), (np.arange(len(hi_idx)), hi_idx)),
                          shape=(len(hi_idx), nf)),
        ])
        bb = np.concatenate([-lbf[lo_idx], ubf[hi_idx]])
        split = n_eq + n_le
        A_full = sp.vstack([A_rows[:split], B, A_rows[split:]]).tocsc()
        b_full = np.concatenate([b_rows[:split], bb, b_rows[split:]])
        cones = []
        if n_eq:
            cones.append(clarabel.ZeroConeT(n_eq))
        if n_le + len(bb):
            cones.append(clarabel.NonnegativeConeT(n_le + len(bb)))
        cones.extend(clarabel.SecondOrderConeT(d) for d in self.soc_dims)
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.max_iter = config.max_iterations
        settings.tol_gap_abs = 1e-9
        settings.tol_gap_rel = 1e-9
        settings.tol_feas = 1e-10
        settings.tol_ktratio = 1e-8
        if deadline is not None:
            settings.time_limit = max(deadline - time.perf_counter(), 1e-3)
        P = sp.csc_matrix((nf, nf))
        q = (self.c if c is None else c)[free]
        sol = clarabel.DefaultSolver(P, q, A_full, b_full, cones, settings).solve()
        status = str(sol.status)
        info = {"iterations": sol.iterations, "clarabel_status": status}
        if status in ("Solved", "AlmostSolved"):
            x[free] = np.asarray(sol.x)
            if status == "AlmostSolved":
                res, cone = self.residuals(x)
                if res > config.feas_tol or cone > config.cone_tol:
                    return ITERATION_LIMIT, x, info
            return OPTIMAL, x, info
        if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
            return INFEASIBLE, None, info
        if status in ("DualInfeasible", "AlmostDualInfeasible"):
            return UNBOUNDED, None, info
        if len(sol.x) == nf:
            x[free] = np.asarray(sol.x)
            return ITERATION_LIMIT, x, info
        return ITERATION_LIMIT, None, info

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.c0


def _make_solution(comp: CompiledProblem, status: str, x, t0: float, **kw) -> Solution:
    problem = comp.problem
    if x is not None:
        res, cone = comp.residuals(x)
        obj = comp.objective(x)
    else:
        res = cone = float("inf")
        obj = float("inf") if status == INFEASIBLE else float("-inf") if status == UNBOUNDED else float("nan")
    return Solution(status, x, obj, time.perf_counter() - t0, res, cone,
                    problem.variables, **kw)


def solve_socp(problem: MicpProblem, config: SolverConfig | None = None,
               compiled: CompiledProblem | None = None) -> Solution:
    """Solve a problem with no binary variables."""
    config = config or SolverConfig()
    if problem.binaries:
        raise ValueError("solve_socp: problem has binary variables; use solve_micp_bnb")
    t0 = time.perf_counter()
    comp = compiled or CompiledProblem(problem)
    status, x, info = comp.solve(problem.lb, problem.ub, config,
                                 deadline=t0 + config.time_limit)
    return _make_solution(comp, status, x, t0, info=info)


# --- branch and bound ---------------------------------------------------------------


PLUNGE_FRACTION = 0.5
BINARY_NUDGE = 1e-7


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(b))


def solve_micp_bnb(problem: MicpProblem, config: SolverConfig | None = None) -> Solution:
    """Best-bound branch-and-bound on the most fractional binary.

    Node relaxations carry a tiny extra cost on every binary (the reported bound
    is corrected for it), which keeps binaries the objective is indifferent to at
    zero instead of at an interior-point central value.  Children inherit the
    parent's bound and are solved when selected.  After a branching the search
    plunges into the up child (binary fixed to 1): unconditionally until a first
    incumbent exists, backtracking depth-first to the deepest open sibling after
    an infeasible node; afterwards as long as the child's bound stays below
    ``best + PLUNGE_FRACTION * (incumbent - best)`` where ``best`` is the lowest
    open bound.  Otherwise the open node with the lowest bound (then lowest id) is
    taken.
    """
    config = config or SolverConfig()
    t0 = time.perf_counter()
    deadline = t0 + config.time_limit
    comp = CompiledProblem(problem)
    bins = np.array(problem.binaries, dtype=np.int64)
    lb0, ub0 = problem.lb, problem.ub
    lower_tol = 1e-6
    # a tiny cost on every binary moves binaries the objective is indifferent to
    # onto their lower bound, so branching only sees fractions that matter
    delta = BINARY_NUDGE * max(1.0, float(np.max(np.abs(comp.c), initial=0.0)))
    c_node = comp.c.copy()
    c_node[bins] += delta

    inc_x: np.ndarray | None = None
    inc_obj = float("inf")
    bound_violations = 0
    nodes = 0
    branchings = 0
    root_bound = float("nan")
    heap: list[tuple[float, int]] = []
    # id -> (lb, ub, relaxation point or None, bound)
    store: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray | None, float]] = {
        0: (lb0, ub0, None, float("-inf"))}
    next_id = 1
    current: int | None = 0
    lifo: list[int] = []
    limit_hit = False
    root_status = None

    def best_open() -> float:
        return min((b for b, i in heap if i in store), default=float("inf"))

    def tol_of(v: float) -> float:
        return max(1.0, abs(v)) if np.isfinite(v) else 1.0

    while True:
        if current is None and inc_x is None:
            # depth-first backtracking until a first incumbent exists
            while lifo and lifo[-1] not in store:
                lifo.pop()
            if lifo:
                current = lifo.pop()
        if current is None:
            while heap and heap[0][1] not in store:
                heapq.heappop(heap)
            if not heap:
                break
            _, current = heapq.heappop(heap)
        node_id = current
        lb, ub, x, bound = store.pop(node_id)
        current = None
        if inc_x is not None and bound >= inc_obj - config.mip_gap * tol_of(inc_obj):
            continue
        if x is None:
            if nodes >= config.bnb_node_limit or time.perf_counter() > deadline:
                limit_hit = True
                store[node_id] = (lb, ub, None, bound)
                heapq.heappush(heap, (bound, node_id))
                break
            st, x, _ = comp.solve(lb, ub, config, deadline, c_node)
            nodes += 1
            if node_id == 0:
                root_status = st
            if st != OPTIMAL:
                log.debug("node %d: %s", node_id, st)
                continue
            # c.x >= (c + d).x* - d * sum(ub) over the node, d on binaries only
            obj = comp.objective(x) + delta * float(np.sum(x[bins] - ub[bins]))
            if np.isfinite(bound) and obj < bound - lower_tol * tol_of(bound):
                bound_violations += 1
            bound = max(obj, bound) if np.isfinite(bound) else obj
            if node_id == 0:
                root_bound = obj
            # dive until the first incumbent, then only while the child stays below
            # the midpoint between the best open bound and the incumbent
            if inc_x is not None:
                lo = best_open()
                slack = max(config.mip_gap * tol_of(bound), PLUNGE_FRACTION * (inc_obj - lo))
                plunge = bound <= lo + slack
            else:
                plunge = True
            if not plunge:
                store[node_id] = (lb, ub, x, bound)
                heapq.heappush(heap, (bound, node_id))
                continue
        if inc_x is not None:
            if bound >= inc_obj - config.mip_gap * tol_of(inc_obj):
                continue
            if inc_obj - min(bound, best_open()) <= config.mip_gap * tol_of(inc_obj):
                break
        xb = x[bins]
        if np.all(np.abs(xb - np.round(xb)) <= config.int_tol):
            flb, fub = lb.copy(), ub.copy()
            flb[bins] = fub[bins] = np.round(xb)
            st, xf, _ = comp.solve(flb, fub, config, deadline)
            nodes += 1
            if st == OPTIMAL:
                fobj = comp.objective(xf)
                if fobj < inc_obj - 1e-9 * tol_of(inc_obj):
                    inc_x, inc_obj = xf, fobj
                    log.debug("node %d: incumbent %.6g after %d solves", node_id, fobj, nodes)
            continue
        # most fractional, lowest index on ties
        dist = np.round(np.abs(xb - np.floor(xb) - 0.5), 9)
        j = int(np.argmin(dist))
        log.debug("node %d: bound %.6g, %d fractional, branch on %s", node_id, bound,
                  int(np.sum(dist < 0.5 - config.int_tol)), problem.variables[int(bins[j])])
        var = int(bins[j])
        branchings += 1
        ids = []
        for val in (1.0, 0.0):
            clb, cub = lb.copy(), ub.copy()
            clb[var] = cub[var] = val
            store[next_id] = (clb, cub, None, bound)
            heapq.heappush(heap, (bound, next_id))
            ids.append(next_id)
            next_id += 1
        lifo.append(ids[1])
        current = ids[0]

    if root_status is not None and root_status != OPTIMAL and inc_x is None:
        return _make_solution(comp, root_status, None, t0, nodes=nodes)
    open_bounds = [store[i][3] for _, i in heap if i in store]
    if inc_x is None:
        st = ITERATION_LIMIT if limit_hit else INFEASIBLE
        sol = _make_solution(comp, st, None, t0, nodes=nodes,
                             bound=min(open_bounds, default=float("inf")))
        sol.info.update(bound_violations=bound_violations, branchings=branchings)
        return sol
    lower = min(open_bounds + [inc_obj])
    gap = max((inc_obj - lower) / tol_of(inc_obj), 0.0)
    st = OPTIMAL if (not limit_hit or gap <= config.mip_gap) else ITERATION_LIMIT
    sol = _make_solution(comp, st, inc_x, t0, nodes=nodes, gap=gap, bound=lower)
    sol.info.update(bound_violations=bound_violations, root_bound=root_bound,
                    branchings=branchings)
    return sol


def enumerate_binaries_oracle(problem: MicpProblem, config: SolverConfig | None = None,
                              cap: int = 20) -> Solution:
    """Exhaustive search over all binary assignments (lexicographic order)."""
    config = config or SolverConfig()
    bins = problem.binaries
    if len(bins) > cap:
        raise ValueError(f"{len(bins)} binaries exceed the enumeration cap of {cap}")
    t0 = time.perf_counter()
    comp = CompiledProblem(problem)
    lb0, ub0 = problem.lb, problem.ub
    best_x, best_obj = None, float("inf")
    count = 0
    for assignment in itertools.product((0.0, 1.0), repeat=len(bins)):
        lb, ub = lb0.copy(), ub0.copy()
        lb[bins] = assignment
        ub[bins] = assignment
        st, x, _ = comp.solve(lb, ub, config)
        count += 1
        if st != OPTIMAL:
            continue
        obj = comp.objective(x)
        if obj < best_obj - 1e-7 * max(1.0, abs(best_obj) if np.isfinite(best_obj) else 1.0):
            best_x, best_obj = x, obj
    if best_x is None:
        return _make_solution(comp, INFEASIBLE, None, t0, nodes=count)
    return _make_solution(comp, OPTIMAL, best_x, t0, nodes=count)


# --- feasibility and activity -------------------------------------------------------


def _point(problem: MicpProblem, point) -> np.ndarray:
    if isinstance(point, Solution):
        point = point.x
    if isinstance(point, dict):
        missing = [v for v in problem.variables if v not in point]
        if missing:
            raise ValueError(f"point is missing variable {missing[0]}")
        return np.array([point[v] for v in problem.variables], dtype=float)
    x = np.asarray(point, dtype=float)
    if x.shape != (problem.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({problem.n},)")
    return x


def check_feasibility(problem: MicpProblem, point, tol: float,
                      compiled: CompiledProblem | None = None
                      ) -> list[tuple[ConstraintId, float]]:
    """Violated rows and bounds with normalized residuals, largest first."""
    x = _point(problem, point)
    comp = compiled or CompiledProblem(problem)
    sl = comp.row_slacks(x)
    out = [(problem.rows[k].cid, float(-sl[k])) for k in np.flatnonzero(-sl > tol)]
    lb, ub = problem.lb, problem.ub
    for i in np.flatnonzero(lb - x > tol):
        v = problem.variables[i]
        out.append((ConstraintId("bound_lo", f"{v.kind}:{v.entity}", v.t), float(lb[i] - x[i])))
    for i in np.flatnonzero(x - ub > tol):
        v = problem.variables[i]
        out.append((ConstraintId("bound_hi", f"{v.kind}:{v.entity}", v.t), float(x[i] - ub[i])))
    for i in problem.binaries:
        d = abs(x[i] - round(x[i]))
        if d > tol:
            v = problem.variables[i]
            out.append((ConstraintId("integrality", f"{v.kind}:{v.entity}", v.t), float(d)))
    out.sort(key=lambda item: (-item[1], item[0]))
    return out


def extract_active_set(problem: MicpProblem, solution: Solution, act_tol: float | None = None,
                       compiled: CompiledProblem | None = None) -> ActiveSet:
    """Inequality and cone rows whose normalized slack is at most ``act_tol``."""
    if solution.status != OPTIMAL or solution.x is None:
        raise ValueError(f"active set needs an optimal solution, got {solution.status}")
    act_tol = SolverConfig().act_tol if act_tol is None else act_tol
    comp = compiled or CompiledProblem(problem)
    sl = comp.row_slacks(solution.x)
    ids = frozenset(problem.rows[k].cid for k in range(len(problem.rows))
                    if problem.rows[k].sense != EQ and abs(sl[k]) <= act_tol)
    return ActiveSet(ids)
