"""Assemble the time-indexed W2H-CI mixed-integer conic program.

Every row gets a :class:`ConstraintId` ``(family, entity, t, k)`` and rows are
emitted in a fixed order (time, then power / water / hydrogen, then entity order of
the case file), so identifiers and row positions are stable across rebuilds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (CaseError, Pipe, ScenarioTrace, W2HCase, bus_parent_branch,
                     iter_branch_children, wind_speed_to_power)
from .problem import EQ, LE, SOC, Affine, ConstraintId, MicpProblem, Row, VarRef

HULL_SLOPE = 2 * math.sqrt(2) - 2
HULL_OFFSET = 3 - 2 * math.sqrt(2)
# W per (m^3/h * m): rho * g / 3600
PUMP_POWER_FACTOR = 2.725
W_TO_MW = 1e-6


@dataclass(frozen=True)
class InitialState:
    v_wt: dict[str, float] = field(default_factory=dict)
    v_ht: float | None = None

    @classmethod
    def from_case(cls, case: W2HCase) -> "InitialState":
        h = case.hydrogen
        return cls({t.id: t.v_init for t in case.water.tanks},
                   h.v_init if h is not None else None)

    def check(self, case: W2HCase, tol: float = 1e-6) -> None:
        for tank in case.water.tanks:
            if tank.id not in self.v_wt:
                raise CaseError(f"initial state missing tank {tank.id}")
            v = self.v_wt[tank.id]
            if not tank.v_lo - tol * max(1.0, tank.v_hi) <= v <= tank.v_hi + tol * max(1.0, tank.v_hi):
                raise CaseError(f"infeasible initial state: tank {tank.id} volume {v}")
        h = case.hydrogen
        if h is not None:
            if self.v_ht is None:
                raise CaseError("initial state missing hydrogen tank volume")
            if not h.v_lo - tol * max(1.0, h.v_hi) <= self.v_ht <= h.v_hi + tol * max(1.0, h.v_hi):
                raise CaseError(f"infeasible initial state: hydrogen tank volume {self.v_ht}")


# --- envelopes shared by the builder and the tests ----------------------------------


def headloss_hull(r_w: float, f_lo: float, f_hi: float) -> list[tuple[str, float, float]]:
    """Linear envelopes of the head drop ``r_w f |f|`` on ``[f_lo, f_hi]``.

    Each entry ``(sense, slope, intercept)`` reads ``drop <sense> slope*f + intercept``
    with sense ``"le"`` or ``"ge"``; order is (ub1, lb1, lb2, ub2).  ``f_lo`` is the
    signed lower flow bound; the reverse-flow envelopes use its magnitude.
    """
    back = -f_lo
    return [
        ("le", HULL_SLOPE * r_w * f_hi, HULL_OFFSET * r_w * f_hi ** 2),
        ("ge", HULL_SLOPE * r_w * back, -HULL_OFFSET * r_w * back ** 2),
        ("ge", 2 * r_w * f_hi, -r_w * f_hi ** 2),
        ("le", 2 * r_w * back, r_w * back ** 2),
    ]


def pump_power_bounds(a1: float, a0: float, efficiency: float, f_hi: float, f: float):
    """Lower (convex) and upper (secant) pump power at flow ``f``, in W."""
    lo = PUMP_POWER_FACTOR * (a1 * f * f + a0 * f) / efficiency
    hi = PUMP_POWER_FACTOR * (a1 * f_hi + a0) * f / efficiency
    return lo, hi


def pump_big_m(case: W2HCase, pipe: Pipe) -> float:
    nodes = {n.id: n for n in case.water.nodes}
    a, b = nodes[pipe.from_node], nodes[pipe.to_node]
    span = max(a.y_hi, b.y_hi) - min(a.y_lo, b.y_lo)
    return span + abs(pipe.h) + pipe.pump.y_gain_max + pipe.r_w * pipe.f_hi ** 2


def desal_big_m(desal) -> float:
    return max(desal.energy) * desal.f_max


# --- builder ------------------------------------------------------------------------


def _wind_power(case: W2HCase, scenario: ScenarioTrace, t: int) -> float:
    w = case.power.wind
    return 0.0 if w is None else wind_speed_to_power(scenario.wind_speed[t], w)


def declare_variables(prob: MicpProblem, case: W2HCase, horizon: int,
                      init: InitialState, scenario: ScenarioTrace) -> None:
    pw = case.power
    dth = case.dt_hours
    h2 = case.hydrogen
    for t in range(horizon):
        for b in pw.buses:
            prob.add_var(VarRef("V", b.id, t), b.v_lo, b.v_hi)
        for br in pw.branches:
            prob.add_var(VarRef("I", br.name, t), br.i_lo, br.i_hi)
            prob.add_var(VarRef("p_flow", br.name, t), -br.s_max, br.s_max)
            prob.add_var(VarRef("q_flow", br.name, t), -br.s_max, br.s_max)
        for g in pw.diesel:
            prob.add_var(VarRef("p_dg", g.id, t), g.p_lo, g.p_hi)
            prob.add_var(VarRef("q_dg", g.id, t), g.q_lo, g.q_hi)
            cmax = g.emission_factor * max(g.p_hi, 0.0) * dth
            prob.add_var(VarRef("c_dg", g.id, t), 0.0, cmax)
            prob.add_var(VarRef("c_chi", g.id, t), 0.0, g.capture_ratio * cmax)
            prob.add_var(VarRef("c_e", g.id, t), 0.0, cmax)
        if pw.wind is not None:
            cap = pw.wind.hosting_capacity
            if h2 is None:
                cap = min(cap, _wind_power(case, scenario, t))
            prob.add_var(VarRef("p_sw", pw.wind.id, t), 0.0, cap)
        for n in case.water.nodes:
            prob.add_var(VarRef("y", n.id, t), n.y_lo, n.y_hi)
        for p in case.water.pipes:
            prob.add_var(VarRef("f", p.id, t), p.f_lo, p.f_hi)
            if p.pump is not None:
                pu = p.pump
                _, pmax = pump_power_bounds(pu.a1, pu.a0, pu.efficiency, p.f_hi, p.f_hi)
                prob.add_var(VarRef("y_G", pu.id, t), 0.0, pu.y_gain_max)
                prob.add_var(VarRef("p_p", pu.id, t), 0.0, pmax * W_TO_MW)
                prob.add_var(VarRef("b_p", pu.id, t), 0.0, 1.0, binary=True)
        for tk in case.water.tanks:
            prob.add_var(VarRef("f_wt", tk.id, t), tk.f_lo, tk.f_hi)
        for d in case.water.desalination:
            prob.add_var(VarRef("f_wd", d.id, t), 0.0, d.f_max)
            prob.add_var(VarRef("p_wd", d.id, t), 0.0, desal_big_m(d))
            for mu in range(1, 5):
                prob.add_var(VarRef(f"b_wd_{mu}", d.id, t), 0.0, 1.0, binary=True)
        if h2 is not None:
            prob.add_var(VarRef("p_we", h2.id, t), 0.0, h2.p_we_hi)
            prob.add_var(VarRef("h_we", h2.id, t), 0.0, h2.h_we_hi)
            prob.add_var(VarRef("b_we", h2.id, t), 0.0, 1.0, binary=True)
            prob.add_var(VarRef("h_fc", h2.id, t), 0.0, h2.h_fc_hi)
            prob.add_var(VarRef("p_fc", h2.id, t), 0.0, h2.xi_fc_h * h2.h_fc_hi)
            prob.add_var(VarRef("b_fc", h2.id, t), 0.0, 1.0, binary=True)
            prob.add_var(VarRef("q_hs", h2.id, t), -h2.s_max, h2.s_max)
    # storage states live on t = 0..horizon; t = 0 is pinned to the initial state
    for tk in case.water.tanks:
        v0 = init.v_wt[tk.id]
        prob.add_var(VarRef("V_wt", tk.id, 0), v0, v0)
        for t in range(1, horizon + 1):
            prob.add_var(VarRef("V_wt", tk.id, t), tk.v_lo, tk.v_hi)
    if h2 is not None:
        prob.add_var(VarRef("V_ht", h2.id, 0), init.v_ht, init.v_ht)
        for t in range(1, horizon + 1):
            prob.add_var(VarRef("V_ht", h2.id, t), h2.v_lo, h2.v_hi)


def emit_power_constraints(prob: MicpProblem, case: W2HCase, scenario: ScenarioTrace,
                           t: int) -> list[ConstraintId]:
    pw = case.power
    S = pw.s_base_mva
    h2 = case.hydrogen
    v = prob.var
    start = len(prob.rows)
    children = iter_branch_children(pw)
    parent = bus_parent_branch(pw)
    p_wind = _wind_power(case, scenario, t)

    for bus in pw.buses:
        tp: list[tuple[int, float]] = []
        tq: list[tuple[int, float]] = []
        for br in children[bus.id]:
            tp.append((v("p_flow", br.name, t), 1.0))
            tq.append((v("q_flow", br.name, t), 1.0))
        if bus.id in parent:
            br = parent[bus.id]
            tp += [(v("p_flow", br.name, t), -1.0), (v("I", br.name, t), br.r * S)]
            tq += [(v("q_flow", br.name, t), -1.0), (v("I", br.name, t), br.x * S)]
        for g in pw.diesel:
            if g.bus == bus.id:
                tp.append((v("p_dg", g.id, t), -1.0))
                tq.append((v("q_dg", g.id, t), -1.0))
        rhs_p = scenario.get(f"p_ts.{bus.id}", t) - scenario.get(f"p_l.{bus.id}", t)
        rhs_q = scenario.get(f"q_ts.{bus.id}", t) - scenario.get(f"q_l.{bus.id}", t)
        if pw.wind is not None and pw.wind.bus == bus.id:
            if h2 is not None:
                rhs_p += p_wind
            else:
                tp.append((v("p_sw", pw.wind.id, t), -1.0))
        if h2 is not None and h2.bus == bus.id:
            tp += [(v("p_fc", h2.id, t), -1.0), (v("p_we", h2.id, t), 1.0)]
            tq.append((v("q_hs", h2.id, t), -1.0))
        for d in case.water.desalination:
            if d.bus == bus.id:
                tp.append((v("p_wd", d.id, t), 1.0))
        for p in case.water.pumps:
            if p.pump.bus == bus.id:
                tp.append((v("p_p", p.pump.id, t), 1.0))
        prob.add_eq(ConstraintId("pf_balance_p", bus.id, t), tp, rhs_p)
        prob.add_eq(ConstraintId("pf_balance_q", bus.id, t), tq, rhs_q)

    buses = {b.id: b for b in pw.buses}
    for br in pw.branches:
        vi, vj = v("V", br.from_bus, t), v("V", br.to_bus, t)
        i_, p_, q_ = v("I", br.name, t), v("p_flow", br.name, t), v("q_flow", br.name, t)
        prob.add_eq(ConstraintId("volt_drop", br.name, t),
                    [(vi, 1.0), (vj, -1.0), (p_, -2 * br.r / S), (q_, -2 * br.x / S),
                     (i_, br.r ** 2 + br.x ** 2)], 0.0)
        aff = prob.affine
        prob.add_soc(ConstraintId("soc_ohm", br.name, t),
                     [aff([(p_, 2.0 / S)]), aff([(q_, 2.0 / S)]), aff([(vi, 1.0), (i_, -1.0)])],
                     aff([(vi, 1.0), (i_, 1.0)]))
        lo, hi = buses[br.from_bus].v_lo, buses[br.from_bus].v_hi
        s2 = (br.s_max / S) ** 2
        prob.add_le(ConstraintId("soc_link", br.name, t), [(i_, lo * hi), (vi, s2)],
                    s2 * (lo + hi))
        prob.add_soc(ConstraintId("thermal", br.name, t), [aff([(p_, 1.0)]), aff([(q_, 1.0)])],
                     aff([], br.s_max))

    if h2 is not None:
        terms = [(v("p_we", h2.id, t), 1.0)]
        terms += [(v("p_wd", d.id, t), 1.0) for d in case.water.desalination]
        if pw.wind is not None:
            terms.append((v("p_sw", pw.wind.id, t), 1.0))
        prob.add_eq(ConstraintId("wind_split", pw.wind.id if pw.wind else "none", t),
                    terms, p_wind)

    dth = case.dt_hours
    for g in pw.diesel:
        cdg, cchi, ce = v("c_dg", g.id, t), v("c_chi", g.id, t), v("c_e", g.id, t)
        prob.add_eq(ConstraintId("carbon_dg", g.id, t),
                    [(cdg, 1.0), (v("p_dg", g.id, t), -g.emission_factor * dth)], 0.0)
        prob.add_eq(ConstraintId("carbon_net", g.id, t), [(ce, 1.0), (cdg, -1.0), (cchi, 1.0)],
                    0.0)
        prob.add_le(ConstraintId("ccs_cap", g.id, t), [(cchi, 1.0), (cdg, -g.capture_ratio)],
                    0.0)
    return [r.cid for r in prob.rows[start:]]


def emit_water_constraints(prob: MicpProblem, case: W2HCase, scenario: ScenarioTrace,
                           t: int) -> list[ConstraintId]:
    wt = case.water
    v = prob.var
    aff = prob.affine
    start = len(prob.rows)
    h2 = case.hydrogen
    dth = case.dt_hours

    for node in wt.nodes:
        terms: list[tuple[int, float]] = []
        for p in wt.pipes:
            if p.from_node == node.id:
                terms.append((v("f", p.id, t), 1.0))
            if p.to_node == node.id:
                terms.append((v("f", p.id, t), -1.0))
        for d in wt.desalination:
            if d.node == node.id:
                terms.append((v("f_wd", d.id, t), -1.0))
        for tk in wt.tanks:
            if tk.node == node.id:
                terms.append((v("f_wt", tk.id, t), 1.0))  # f_wt fills the tank
        if h2 is not None and h2.node == node.id:
            terms.append((v("h_we", h2.id, t), h2.xi_we_w))
        prob.add_eq(ConstraintId("water_balance", node.id, t), terms,
                    -scenario.get(f"d.{node.id}", t))

    for p in wt.pipes:
        yn, ym, f = v("y", p.from_node, t), v("y", p.to_node, t), v("f", p.id, t)
        if p.pump is None:
            names = ("hull_headloss_ub1", "hull_headloss_lb1", "hull_headloss_lb2",
                     "hull_headloss_ub2")
            for name, (sense, slope, icpt) in zip(names, headloss_hull(p.r_w, p.f_lo, p.f_hi)):
                # drop = y_n - y_m + h
                if sense == "le":
                    prob.add_le(ConstraintId(name, p.id, t), [(yn, 1.0), (ym, -1.0), (f, -slope)],
                                icpt - p.h)
                else:
                    prob.add_ge(ConstraintId(name, p.id, t), [(yn, 1.0), (ym, -1.0), (f, -slope)],
                                icpt - p.h)
            continue
        pu = p.pump
        yg, bp, pp = v("y_G", pu.id, t), v("b_p", pu.id, t), v("p_p", pu.id, t)
        M = pump_big_m(case, p)
        # r f^2 <= y_n - y_m + h + y_G + M (1 - b)
        z0 = max(p.r_w * p.f_hi ** 2, 1e-9)
        prob.add_rotated(ConstraintId("pump_bigM_lo", pu.id, t),
                         aff([(f, math.sqrt(p.r_w * z0))]),
                         aff([(yn, 1.0), (ym, -1.0), (yg, 1.0), (bp, -M)], p.h + M), z0)
        prob.add_le(ConstraintId("pump_bigM_hi", pu.id, t),
                    [(yn, 1.0), (ym, -1.0), (yg, 1.0), (f, -p.r_w * p.f_hi), (bp, M)], M - p.h)
        prob.add_le(ConstraintId("pump_gate", pu.id, t), [(f, 1.0), (bp, -p.f_hi)], 0.0)
        k = PUMP_POWER_FACTOR * W_TO_MW
        if pu.a1 > 0:
            z1 = max(k * pu.a1 * p.f_hi ** 2, 1e-12)
            prob.add_rotated(ConstraintId("pump_hull_lo", pu.id, t),
                             aff([(f, math.sqrt(k * pu.a1 * z1))]),
                             aff([(pp, pu.efficiency), (f, -k * pu.a0)]), z1)
        else:
            prob.add_ge(ConstraintId("pump_hull_lo", pu.id, t),
                        [(pp, pu.efficiency), (f, -k * pu.a0)], 0.0)
        prob.add_le(ConstraintId("pump_hull_hi", pu.id, t),
                    [(pp, pu.efficiency), (f, -k * (pu.a1 * p.f_hi + pu.a0))], 0.0)

    for tk in wt.tanks:
        prob.add_eq(ConstraintId("tank_dyn", tk.id, t),
                    [(v("V_wt", tk.id, t + 1), 1.0), (v("V_wt", tk.id, t), -1.0),
                     (v("f_wt", tk.id, t), -dth)], 0.0)

    for d in wt.desalination:
        fw, pwd = v("f_wd", d.id, t), v("p_wd", d.id, t)
        bs = [v(f"b_wd_{mu}", d.id, t) for mu in range(1, 5)]
        Md = desal_big_m(d)
        for mu, (e, b) in enumerate(zip(d.energy, bs), start=1):
            k = mu - 1
            prob.add_le(ConstraintId("desal_p_lo", d.id, t, k), [(fw, e), (pwd, -1.0), (b, Md)], Md)
            prob.add_le(ConstraintId("desal_p_hi", d.id, t, k), [(pwd, 1.0), (fw, -e), (b, Md)], Md)
            if mu > 1:
                prob.add_le(ConstraintId("desal_seg_lo", d.id, t, k),
                            [(b, 0.25 * (mu - 1) * d.f_max), (fw, -1.0)], 0.0)
            if mu < 4:
                prob.add_le(ConstraintId("desal_seg_hi", d.id, t, k),
                            [(fw, 1.0), (b, d.f_max * (1 - 0.25 * mu))], d.f_max)
        prob.add_le(ConstraintId("desal_sos", d.id, t), [(b, 1.0) for b in bs], 1.0)
        prob.add_le(ConstraintId("desal_gate_f", d.id, t),
                    [(fw, 1.0)] + [(b, -d.f_max) for b in bs], 0.0)
        prob.add_le(ConstraintId("desal_gate_p", d.id, t),
                    [(pwd, 1.0)] + [(b, -Md) for b in bs], 0.0)
    return [r.cid for r in prob.rows[start:]]


def emit_hydrogen_constraints(prob: MicpProblem, case: W2HCase, scenario: ScenarioTrace,
                              t: int) -> list[ConstraintId]:
    h2 = case.hydrogen
    if h2 is None:
        return []
    v = prob.var
    aff = prob.affine
    start = len(prob.rows)
    e = h2.id
    pwe, hwe, bwe = v("p_we", e, t), v("h_we", e, t), v("b_we", e, t)
    pfc, hfc, bfc = v("p_fc", e, t), v("h_fc", e, t), v("b_fc", e, t)
    prob.add_eq(ConstraintId("we_conv", e, t), [(hwe, 1.0), (pwe, -h2.xi_we_p)], 0.0)
    if h2.p_we_lo > 0:
        prob.add_le(ConstraintId("we_gate_p_lo", e, t), [(bwe, h2.p_we_lo), (pwe, -1.0)], 0.0)
    prob.add_le(ConstraintId("we_gate_p_hi", e, t), [(pwe, 1.0), (bwe, -h2.p_we_hi)], 0.0)
    if h2.h_we_lo > 0:
        prob.add_le(ConstraintId("we_gate_h_lo", e, t), [(bwe, h2.h_we_lo), (hwe, -1.0)], 0.0)
    prob.add_le(ConstraintId("we_gate_h_hi", e, t), [(hwe, 1.0), (bwe, -h2.h_we_hi)], 0.0)
    prob.add_eq(ConstraintId("fc_conv", e, t), [(pfc, 1.0), (hfc, -h2.xi_fc_h)], 0.0)
    if h2.h_fc_lo > 0:
        prob.add_le(ConstraintId("fc_gate_lo", e, t), [(bfc, h2.h_fc_lo), (hfc, -1.0)], 0.0)
    prob.add_le(ConstraintId("fc_gate_hi", e, t), [(hfc, 1.0), (bfc, -h2.h_fc_hi)], 0.0)
    prob.add_soc(ConstraintId("hs_cone", e, t),
                 [aff([(pwe, 1.0), (pfc, -1.0)]), aff([(v("q_hs", e, t), 1.0)])],
                 aff([], h2.s_max))
    dth = case.dt_hours
    prob.add_eq(ConstraintId("h2_tank", e, t),
                [(v("V_ht", e, t + 1), 1.0), (v("V_ht", e, t), -(1 - h2.xi_dsp)),
                 (hwe, -dth), (hfc, dth)], -dth * scenario.get("h_ts", t))
    prob.add_le(ConstraintId("h2_excl", e, t), [(bwe, 1.0), (bfc, 1.0)], 1.0)
    return [r.cid for r in prob.rows[start:]]


def emit_objective(prob: MicpProblem, case: W2HCase, horizon: int) -> None:
    dth = case.dt_hours
    for t in range(horizon):
        for g in case.power.diesel:
            prob.add_objective(prob.var("p_dg", g.id, t), case.a1_cost * dth)
            prob.add_objective(prob.var("c_e", g.id, t), case.a2_cost)


def build_micp(case: W2HCase, scenario: ScenarioTrace, init: InitialState | None = None,
               horizon: int | None = None) -> MicpProblem:
    """Build the full problem over ``horizon`` steps of ``scenario`` (from index 0)."""
    horizon = case.horizon if horizon is None else horizon
    if horizon < 1:
        raise CaseError("horizon must be >= 1")
    if len(scenario) < horizon:
        raise CaseError(f"horizon {horizon} exceeds scenario length {len(scenario)}")
    init = InitialState.from_case(case) if init is None else init
    init.check(case)
    prob = MicpProblem()
    declare_variables(prob, case, horizon, init, scenario)
    for t in range(horizon):
        emit_power_constraints(prob, case, scenario, t)
        emit_water_constraints(prob, case, scenario, t)
        emit_hydrogen_constraints(prob, case, scenario, t)
    emit_objective(prob, case, horizon)
    prob.meta.update(case=case.name, horizon=horizon, dt_hours=case.dt_hours,
                     wind_power=[_wind_power(case, scenario, t) for t in range(horizon)])
    return prob


# --- transforms ---------------------------------------------------------------------


def _substitute(expr: Affine, values: dict[int, float]) -> tuple[Affine, bool]:
    hit = [k for k, i in enumerate(expr.idx) if int(i) in values]
    if not hit:
        return expr, False
    const = expr.const + sum(expr.coef[k] * values[int(expr.idx[k])] for k in hit)
    keep = np.ones(len(expr.idx), dtype=bool)
    keep[hit] = False
    return Affine(expr.idx[keep], expr.coef[keep], float(const)), True


def _assignment_values(problem: MicpProblem, assignment) -> dict[int, float]:
    bins = problem.binaries
    if isinstance(assignment, dict):
        vals = {}
        for key, val in assignment.items():
            i = problem.index[key] if isinstance(key, VarRef) else int(key)
            vals[i] = float(round(val))
    else:
        seq = list(assignment)
        if len(seq) != len(bins):
            raise ValueError(f"assignment has {len(seq)} values for {len(bins)} binaries")
        vals = {i: float(round(x)) for i, x in zip(bins, seq)}
    missing = [problem.variables[i] for i in bins if i not in vals]
    if missing:
        raise ValueError(f"partial binary assignment; missing {missing[0]} and "
                         f"{len(missing) - 1} more")
    if any(x not in (0.0, 1.0) for x in vals.values()):
        raise ValueError("binary assignment must be 0/1")
    return vals


def _binary_only(row: Row, vals: dict[int, float]) -> Affine | None:
    """The row's constant once ``vals`` are substituted, if nothing else is left."""
    if row.sense == SOC:
        return None
    e, hit = _substitute(row.exprs[0], vals)
    return e if hit and len(e.idx) == 0 else None


def binary_row_violations(problem: MicpProblem, assignment) -> list[ConstraintId]:
    """Rows over binaries alone (such as the electrolyzer/fuel-cell exclusion) that
    ``assignment`` violates.  :func:`fix_binaries` drops these rows, so callers
    that need a point feasible for the mixed-integer problem check them here."""
    vals = _assignment_values(problem, assignment)
    out = []
    for row in problem.rows:
        e = _binary_only(row, vals)
        if e is not None and (abs(e.const) if row.sense == EQ else e.const) > 1e-9:
            out.append(row.cid)
    return out


def fix_binaries(problem: MicpProblem, assignment) -> MicpProblem:
    """Substitute binary values and simplify the gated rows.

    ``assignment`` maps variable index (or :class:`VarRef`) to 0/1, or is a sequence
    aligned with ``problem.binaries``.  Rows left with only constants (the
    electrolyzer/fuel-cell exclusion and the desalination segment count) are removed
    whether or not the assignment satisfies them; see :func:`binary_row_violations`.
    Single-variable gating rows become bounds; opposite pairs of gated rows become
    equalities.
    """
    vals = _assignment_values(problem, assignment)
    out = problem.copy_structure()
    for i, x in vals.items():
        out._binary[i] = False
        out.set_bounds(i, x, x)
    new_rows: list[Row] = []
    gated_linear: dict[int, Row] = {}
    for row in problem.rows:
        exprs = []
        touched = False
        for e in row.exprs:
            e2, hit = _substitute(e, vals)
            exprs.append(e2)
            touched |= hit
        if not touched:
            new_rows.append(row)
            continue
        if row.sense != SOC and len(exprs[0].idx) == 0:
            continue  # binary-only row
        if row.sense == LE and len(exprs[0].idx) == 1:
            # a*x + c <= 0 -> bound on x
            i, a, c = int(exprs[0].idx[0]), float(exprs[0].coef[0]), exprs[0].const
            lb, ub = out._lb[i], out._ub[i]
            if a > 0:
                ub = min(ub, -c / a)
            else:
                lb = max(lb, -c / a)
            if lb > ub and lb - ub <= 1e-9 * max(1.0, abs(lb)):
                ub = lb
            # lb > ub left in place: the solver reports it as infeasible
            out._lb[i], out._ub[i] = lb, ub
            continue
        new = Row(row.cid, row.sense, tuple(exprs))
        if row.sense == LE:
            gated_linear[len(new_rows)] = new
        new_rows.append(new)

    # merge opposite pairs a.x + c <= 0 and -a.x - c <= 0 into a.x + c == 0
    keyed: dict[tuple, int] = {}
    drop: set[int] = set()
    for pos, row in gated_linear.items():
        e = row.exprs[0]
        key = (tuple(e.idx.tolist()), tuple(np.round(e.coef, 12).tolist()), round(e.const, 12))
        neg = (key[0], tuple(np.round(-e.coef, 12).tolist()), round(-e.const, 12))
        if neg in keyed and keyed[neg] not in drop:
            first = keyed[neg]
            new_rows[first] = Row(new_rows[first].cid, EQ, new_rows[first].exprs)
            drop.add(pos)
        else:
            keyed[key] = pos
    new_rows = [r for k, r in enumerate(new_rows) if k not in drop]
    out.rows = new_rows
    out.registry = {r.cid: k for k, r in enumerate(new_rows)}
    out.origin_ids = problem.origin_ids or frozenset(problem.registry)
    out.meta["fixed_binaries"] = {i: vals[i] for i in problem.binaries}
    return out


def restrict_to_active(problem: MicpProblem, keep) -> MicpProblem:
    """Keep equalities, bounds, and only the inequality/cone rows named in ``keep``."""
    if problem.binaries:
        raise ValueError("restrict_to_active expects a problem without binaries")
    keep = set(keep)
    known = problem.origin_ids or frozenset(problem.registry)
    unknown = [c for c in keep if c not in known and c not in problem.registry]
    if unknown:
        raise KeyError(f"unknown constraint id {unknown[0]}")
    rows = [r for r in problem.rows if r.sense == EQ or r.cid in keep]
    out = problem.with_rows(rows)
    out.origin_ids = known
    return out
