"""Receding-horizon operation and cost/emission/timing metrics.

Every step builds the problem for the current storage state over a window of the
realized scenario, solves it by branch-and-bound or by the learned surrogate,
commits the step-0 decisions and advances the tanks by the committed flows.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import CompiledProblem, SolverConfig, solve_micp_bnb
from .domain import ScenarioTrace, W2HCase, variant
from .learning import LayoutError, LabelLayout, TrainedModel, extract_features
from .model import InitialState, build_micp
from .problem import EQ, MicpProblem
from .surrogate import solve_with_repair

log = logging.getLogger(__name__)

CONVENTIONAL = "conventional"
ACI_IVP = "aci-ivp"
SIM_METHODS = (CONVENTIONAL, ACI_IVP)


class SimulationError(RuntimeError):
    """A step could not be solved; carries the step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class StepRecord:
    step: int
    method: str
    status: str
    solve_time: float
    wind_power: float
    objective: float
    committed: dict[str, float]
    state_in: InitialState
    state_out: InitialState
    flags: tuple[str, ...] = ()
    rounds: int = 0
    nodes: int = 0
    step0_violation: float = 0.0
    p_dg: float = 0.0
    c_dg: float = 0.0
    c_chi: float = 0.0
    c_e: float = 0.0
    cost: float = 0.0


@dataclass
class SimulationTrace:
    case: str
    method: str
    horizon: int
    dt_hours: float
    records: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_state(self) -> InitialState:
        return self.records[-1].state_out

    @property
    def times(self) -> np.ndarray:
        return np.array([r.solve_time for r in self.records])


def _step0_values(problem: MicpProblem, x: np.ndarray) -> dict[str, float]:
    return {str(v): float(x[i]) for i, v in enumerate(problem.variables) if v.t == 0}


def step0_violation(problem: MicpProblem, x: np.ndarray,
                    compiled: CompiledProblem | None = None) -> float:
    """Largest normalized residual over the rows and bounds of timestep 0."""
    comp = compiled or CompiledProblem(problem)
    sl = comp.row_slacks(x)
    worst = 0.0
    for k, row in enumerate(problem.rows):
        if row.cid.t == 0:
            worst = max(worst, abs(sl[k]) if row.sense == EQ else -sl[k])
    idx = [i for i, v in enumerate(problem.variables) if v.t == 0]
    worst = max(worst, float(np.max(problem.lb[idx] - x[idx], initial=0.0)),
                float(np.max(x[idx] - problem.ub[idx], initial=0.0)))
    return worst


def advance_state(case: W2HCase, state: InitialState, committed: dict[str, float]) -> InitialState:
    """Storage levels after applying the committed step-0 flows."""
    dth = case.dt_hours
    v_wt = {tk.id: state.v_wt[tk.id] + dth * committed[f"f_wt:{tk.id}:0"]
            for tk in case.water.tanks}
    h = case.hydrogen
    v_ht = None
    if h is not None:
        v_ht = ((1 - h.xi_dsp) * state.v_ht
                + dth * (committed[f"h_we:{h.id}:0"] - committed[f"h_fc:{h.id}:0"]
                         - committed["h_ts:0"]))
    return InitialState(v_wt, v_ht)


def _carbon(case: W2HCase, committed: dict[str, float]) -> tuple[float, float, float, float]:
    p_dg = c_dg = c_chi = 0.0
    for g in case.power.diesel:
        p_dg += committed[f"p_dg:{g.id}:0"]
        c_dg += committed[f"c_dg:{g.id}:0"]
        c_chi += committed[f"c_chi:{g.id}:0"]
    return p_dg, c_dg, c_chi, c_dg - c_chi


def run_rolling_horizon(case: W2HCase, scenario: ScenarioTrace, method: str = CONVENTIONAL,
                        model: TrainedModel | None = None, horizon: int = 24,
                        steps: int | None = None, duration_hours: float | None = None,
                        config: SolverConfig | None = None, init: InitialState | None = None,
                        start: int = 0, shrinking: bool = False,
                        max_rounds: int = 5) -> SimulationTrace:
    """Simulate ``steps`` commitments (or ``duration_hours``) starting at ``start``.

    The lookahead window slides over the scenario cyclically; with ``shrinking``
    it is cut at the end of the simulated period instead.
    """
    if method not in SIM_METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {SIM_METHODS}")
    config = config or SolverConfig()
    if steps is None:
        if duration_hours is None:
            raise ValueError("give steps or duration_hours")
        exact = duration_hours * 60.0 / case.dt_minutes
        steps = int(round(exact))
        if abs(exact - steps) > 1e-9:
            raise ValueError(f"duration {duration_hours} h is not a multiple of the "
                             f"{case.dt_minutes} min step")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if method == ACI_IVP:
        if model is None:
            raise ValueError("aci-ivp needs a trained model")
        if shrinking:
            raise ValueError("a trained model has a fixed horizon; shrinking is unsupported")
        probe = build_micp(case, scenario.window(start, horizon), init, horizon)
        if LabelLayout.of(probe) != model.labels:
            raise LayoutError("model label layout does not match the case and horizon")
    state = InitialState.from_case(case) if init is None else init
    trace = SimulationTrace(case.name, method, horizon, case.dt_hours)
    for k in range(steps):
        H = min(horizon, steps - k) if shrinking else horizon
        window = scenario.window(start + k, H)
        problem = build_micp(case, window, state, H)
        flags: tuple[str, ...] = ()
        rounds = 0
        if method == CONVENTIONAL:
            sol = solve_micp_bnb(problem, config)
            elapsed = sol.solve_time
            if not sol.has_point:
                raise SimulationError(k, f"branch-and-bound returned {sol.status}")
            if not sol.optimal:
                flags = ("limit",)
        else:
            t0 = time.perf_counter()
            phi = extract_features(case, window, state, H, start=start + k)
            out = solve_with_repair(problem, model, phi, config, max_rounds)
            elapsed = time.perf_counter() - t0
            sol = out.solution
            flags = tuple(out.flags)
            rounds = out.rounds
        comp = CompiledProblem(problem)
        viol = step0_violation(problem, sol.x, comp)
        if viol > 10 * config.feas_tol:
            raise SimulationError(k, f"committed step violates its constraints by {viol:.3g}")
        committed = _step0_values(problem, sol.x)
        committed["h_ts:0"] = window.get("h_ts", 0)
        nxt = advance_state(case, state, committed)
        p_dg, c_dg, c_chi, c_e = _carbon(case, committed)
        cost = case.a1_cost * p_dg * case.dt_hours + case.a2_cost * c_e
        trace.records.append(StepRecord(
            k, method, sol.status, elapsed, problem.meta["wind_power"][0], sol.objective,
            committed, state, nxt, flags, rounds, sol.nodes, viol, p_dg, c_dg, c_chi, c_e,
            cost))
        log.info("step %d %s %.3fs obj %.4f %s", k, method, elapsed, sol.objective,
                 ",".join(flags))
        state = nxt
    return trace


# --- metrics ------------------------------------------------------------------------


@dataclass
class MetricsReport:
    case: str
    method: str
    steps: int
    diesel_mwh: float
    gross_t: float
    captured_t: float
    net_t: float
    cost: float
    mean_time: float
    max_time: float
    total_time: float
    fallbacks: int
    repaired: int
    mean_rounds: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compute_metrics(trace: SimulationTrace) -> MetricsReport:
    if not trace.records:
        raise ValueError("empty trace")
    recs = trace.records
    t = trace.times
    return MetricsReport(
        trace.case, trace.method, len(recs),
        diesel_mwh=sum(r.p_dg for r in recs) * trace.dt_hours,
        gross_t=sum(r.c_dg for r in recs),
        captured_t=sum(r.c_chi for r in recs),
        net_t=sum(r.c_e for r in recs),
        cost=sum(r.cost for r in recs),
        mean_time=float(t.mean()), max_time=float(t.max()), total_time=float(t.sum()),
        fallbacks=sum(1 for r in recs if any(f.endswith("fallback") for f in r.flags)),
        repaired=sum(1 for r in recs if "repaired" in r.flags),
        mean_rounds=float(np.mean([r.rounds for r in recs])))


@dataclass
class Comparison:
    reference: SimulationTrace
    candidate: SimulationTrace
    reference_metrics: MetricsReport
    candidate_metrics: MetricsReport

    @property
    def speedup(self) -> float:
        c = self.candidate_metrics.mean_time
        return self.reference_metrics.mean_time / c if c > 0 else float("inf")

    @property
    def gap(self) -> float:
        """Relative difference of the total committed cost, candidate vs reference."""
        ref = self.reference_metrics.cost
        return (self.candidate_metrics.cost - ref) / max(1.0, abs(ref))

    @property
    def step_gaps(self) -> np.ndarray:
        a = np.array([r.objective for r in self.reference.records])
        b = np.array([r.objective for r in self.candidate.records])
        return (b - a) / np.maximum(1.0, np.abs(a))

    def rows(self) -> list[tuple[str, float, float]]:
        """(clock label, reference seconds, candidate seconds) per step."""
        dt_min = self.reference.dt_hours * 60
        out = []
        for a, b in zip(self.reference.records, self.candidate.records):
            minutes = int(round((a.step + 1) * dt_min))
            out.append((f"{minutes // 60:02d}:{minutes % 60:02d}", a.solve_time, b.solve_time))
        return out


def compare_methods(case: W2HCase, scenario: ScenarioTrace, model: TrainedModel,
                    horizon: int, steps: int, config: SolverConfig | None = None,
                    init: InitialState | None = None, start: int = 0,
                    methods: tuple[str, str] = (CONVENTIONAL, ACI_IVP)) -> Comparison:
    """Run both methods over the same steps and compare cost and per-step time."""
    traces = [run_rolling_horizon(case, scenario, m, model, horizon, steps, config=config,
                                  init=init, start=start) for m in methods]
    return Comparison(traces[0], traces[1], compute_metrics(traces[0]),
                      compute_metrics(traces[1]))


def emissions_comparison(case: W2HCase, scenario: ScenarioTrace, horizon: int, steps: int,
                         config: SolverConfig | None = None, start: int = 0
                         ) -> dict[str, MetricsReport]:
    """Conventional runs of the diesel-only, wind-only and full system variants."""
    out = {}
    for kind in ("diesel-only", "wind-only", "w2h"):
        sub = variant(case, kind)
        init = InitialState.from_case(sub)
        trace = run_rolling_horizon(sub, scenario, CONVENTIONAL, None, horizon, steps,
                                    config=config, init=init, start=start)
        out[kind] = compute_metrics(trace)
    return out
