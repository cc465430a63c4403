"""Binary-fixed, active-set-restricted surrogate solves with a repair ladder.

A predicted label vector fixes every binary and keeps only the inequality and cone
rows predicted active.  The continuous surrogate is solved and its point checked
against the binary-fixed full problem; violated rows are added back (all of them
per round) and the surrogate is re-solved.  When rounds run out the binary-fixed
full problem is solved instead, and when that is infeasible the full MICP is
solved by branch-and-bound.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import (INFEASIBLE, OPTIMAL, CompiledProblem, Solution, SolverConfig,
                    check_feasibility, solve_micp_bnb, solve_socp)
from .learning import LabelVector, TrainedModel, predict
from .model import binary_row_violations, fix_binaries, restrict_to_active
from .problem import EQ, MicpProblem

log = logging.getLogger(__name__)

REPAIRED = "repaired"
FULL_FALLBACK = "full-fallback"
BNB_FALLBACK = "bnb-fallback"


class InfeasibleProblem(RuntimeError):
    """The full MICP has no feasible point."""


@dataclass
class SurrogateOutcome:
    solution: Solution
    predicted: LabelVector
    binaries: np.ndarray
    rounds: int = 0
    added_per_round: list[int] = field(default_factory=list)
    round_objectives: list[float] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)
    surrogate_rows: int = 0
    full_rows: int = 0
    gap: float | None = None

    @property
    def objective(self) -> float:
        return self.solution.objective

    @property
    def total_time(self) -> float:
        return sum(self.timing.values())


def _inequality_count(problem: MicpProblem) -> int:
    return sum(1 for r in problem.rows if r.sense != EQ)


def build_surrogate(problem: MicpProblem, labels: LabelVector) -> MicpProblem:
    """Fix the predicted binaries and keep equalities, bounds and predicted-active rows."""
    labels.check(problem)
    fixed = fix_binaries(problem, labels.binary)
    return restrict_to_active(fixed, labels.active_ids())


def solve_surrogate(problem: MicpProblem, labels: LabelVector,
                    config: SolverConfig | None = None, max_rounds: int = 5,
                    reference: float | None = None) -> SurrogateOutcome:
    """Solve from a given label vector, repairing until the point is feasible."""
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    config = config or SolverConfig()
    t0 = time.perf_counter()
    labels.check(problem)
    fixed = fix_binaries(problem, labels.binary)
    keep = labels.active_ids()
    surrogate = restrict_to_active(fixed, keep)
    out = SurrogateOutcome(None, labels, labels.binary.copy(),
                           surrogate_rows=_inequality_count(surrogate),
                           full_rows=_inequality_count(fixed))
    out.timing["build"] = time.perf_counter() - t0
    t_solve = t_repair = 0.0
    fixed_comp = None
    solution = None
    # fix_binaries drops rows over binaries alone, so a prediction that breaks one
    # (both hydrogen devices on, say) cannot be repaired: go to the last rung
    broken = binary_row_violations(problem, labels.binary)
    if broken:
        out.flags.append("binary-rows-violated")
        fixed = None
    while not broken:
        t1 = time.perf_counter()
        sol = solve_socp(surrogate, config)
        t_solve += time.perf_counter() - t1
        if sol.status != OPTIMAL:
            if sol.status == INFEASIBLE:
                # removing rows only enlarges the feasible set, so the fixed problem
                # is infeasible as well: skip straight to the last rung
                out.flags.append("surrogate-infeasible")
                fixed = None
            else:
                out.flags.append(f"surrogate-{sol.status}")
            break
        out.round_objectives.append(sol.objective)
        t1 = time.perf_counter()
        fixed_comp = fixed_comp or CompiledProblem(fixed)
        violated = check_feasibility(fixed, sol.x, config.feas_tol, fixed_comp)
        t_repair += time.perf_counter() - t1
        if not violated:
            solution = sol
            break
        if out.rounds == max_rounds:
            break
        add = {cid for cid, _ in violated if cid in fixed.registry} - keep
        if not add:
            break  # only bound or integrality residuals: nothing to add back
        keep |= add
        out.rounds += 1
        out.added_per_round.append(len(add))
        if REPAIRED not in out.flags:
            out.flags.append(REPAIRED)
        surrogate = restrict_to_active(fixed, keep)
        out.surrogate_rows = _inequality_count(surrogate)

    t1 = time.perf_counter()
    if solution is None and fixed is not None:
        out.flags.append(FULL_FALLBACK)
        sol = solve_socp(fixed, config, fixed_comp)
        if sol.optimal:
            solution = sol
    if solution is None:
        out.flags.append(BNB_FALLBACK)
        log.warning("predicted binaries are infeasible; solving the full MICP")
        sol = solve_micp_bnb(problem, config)
        if not sol.has_point:
            raise InfeasibleProblem(f"full MICP has no feasible point ({sol.status})")
        solution = sol
        out.binaries = np.round(sol.x[problem.binaries]).astype(np.int8)
    t_repair += time.perf_counter() - t1
    out.solution = solution
    out.timing["solve"] = t_solve
    out.timing["repair"] = t_repair
    if reference is not None:
        out.gap = (solution.objective - reference) / max(1.0, abs(reference))
    return out


def solve_with_repair(problem: MicpProblem, model: TrainedModel, phi,
                      config: SolverConfig | None = None, max_rounds: int = 5,
                      reference: float | None = None) -> SurrogateOutcome:
    """Predict labels for ``phi`` with ``model`` and solve the repaired surrogate."""
    t0 = time.perf_counter()
    labels = predict(model, phi)
    t_predict = time.perf_counter() - t0
    out = solve_surrogate(problem, labels, config, max_rounds, reference)
    out.timing = {"predict": t_predict, **out.timing}
    return out
