import numpy as np
import pytest

from w2h.conic import (INFEASIBLE, ITERATION_LIMIT, OPTIMAL, UNBOUNDED, ActiveSet,
                       SolverConfig, check_feasibility, enumerate_binaries_oracle,
                       extract_active_set, solve_micp_bnb, solve_socp)
from w2h.domain import ScenarioTrace
from w2h.export import to_mps
from w2h.model import build_micp
from w2h.problem import ConstraintId, MicpProblem, VarRef

from helpers import TIGHT, bundled, cid, random_toy_problems, scalar_problem, window_problem
from oracles import parse_mps, solve_parsed


def _disk(radius: float = 1.0):
    """min -p over p^2 + q^2 <= radius^2 (cone row ``disk``)."""
    p = MicpProblem()
    ip = p.add_var(VarRef("p", "x", 0), -10, 10)
    iq = p.add_var(VarRef("q", "x", 0), -10, 10)
    p.add_objective(ip, -1.0)
    p.add_soc(cid("disk"), [p.affine({ip: 1.0}), p.affine({iq: 1.0})], p.affine({}, radius))
    return p


def _two_binaries(costs=(0.0, 0.0)):
    p = MicpProblem()
    a = p.add_var(VarRef("b", "a", 0), 0, 1, binary=True)
    b = p.add_var(VarRef("b", "b", 0), 0, 1, binary=True)
    y = p.add_var(VarRef("y", "x", 0), 0, 10)
    p.add_objective(a, costs[0])
    p.add_objective(b, costs[1])
    p.add_objective(y, 1.0)
    p.add_ge(cid("cover"), {y: 1.0, a: 1.0, b: 1.0}, 1.0)
    return p


# --- continuous solves --------------------------------------------------------------


def test_box_lower_bound():
    p = scalar_problem()
    p.add_ge(cid("floor"), {0: 1.0}, 1.0)
    sol = solve_socp(p)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_cone_head_at_norm():
    p = scalar_problem()
    p.add_soc(cid("cone"), [p.affine({}, 2.0)], p.affine({0: 1.0}))
    sol = solve_socp(p)
    assert sol.status == OPTIMAL
    assert sol.x[0] == pytest.approx(2.0, abs=1e-6)


def test_disk_optimum():
    sol = solve_socp(_disk(2.0))
    assert sol.optimal
    assert sol.x == pytest.approx([2.0, 0.0], abs=1e-6)
    assert sol.max_cone_violation <= 1e-6


def test_infeasible_and_unbounded():
    p = scalar_problem(lb=1.0, ub=5.0)
    p.add_le(cid("ceiling"), {0: 1.0}, 0.0)
    assert solve_socp(p).status == INFEASIBLE
    assert solve_socp(scalar_problem()).status == UNBOUNDED
    assert solve_socp(scalar_problem(lb=2.0, ub=2.0)).x[0] == 2.0


def test_binaries_rejected():
    with pytest.raises(ValueError, match="binary"):
        solve_socp(_two_binaries())


@pytest.mark.parametrize("name, horizon", [("toy3", 3), ("case13", 2)])
def test_relaxation_matches_exported_model(name, horizon):
    problem = window_problem(name, horizon=horizon).relaxed()
    sol = solve_socp(problem, TIGHT)
    assert sol.optimal
    status, value = solve_parsed(parse_mps(to_mps(problem)))
    assert status == "optimal"
    assert abs(sol.objective - value) <= 1e-6 * max(1.0, abs(value))


def test_solution_values_by_reference():
    sol = solve_socp(_disk())
    assert sol.value(VarRef("p", "x", 0)) == pytest.approx(1.0, abs=1e-6)
    assert set(sol.values) == {VarRef("p", "x", 0), VarRef("q", "x", 0)}


# --- branch and bound ---------------------------------------------------------------


def test_integral_relaxation_needs_no_branching():
    p = _two_binaries(costs=(2.0, 3.0))
    sol = solve_micp_bnb(p, TIGHT)
    assert sol.optimal
    assert sol.info["branchings"] == 0
    assert sol.x == pytest.approx([0.0, 0.0, 1.0], abs=1e-7)


def test_fractional_relaxation_branches():
    # covering with cheap binaries: relaxation picks a fraction that the search must fix
    p = MicpProblem()
    a = p.add_var(VarRef("b", "a", 0), 0, 1, binary=True)
    b = p.add_var(VarRef("b", "b", 0), 0, 1, binary=True)
    p.add_objective(a, 1.0)
    p.add_objective(b, 1.0)
    p.add_ge(cid("cover"), {a: 2.0, b: 2.0}, 1.0)
    sol = solve_micp_bnb(p, TIGHT)
    assert sol.optimal
    assert sol.objective == pytest.approx(1.0, abs=1e-7)
    assert sol.info["branchings"] >= 1
    assert sol.info["root_bound"] == pytest.approx(0.5, abs=1e-6)


def test_bnb_matches_enumeration_on_toy_desal():
    case, scen = bundled("toy_desal")
    problem = build_micp(case, scen.window(0, case.horizon), None, case.horizon)
    bnb = solve_micp_bnb(problem, TIGHT)
    ref = enumerate_binaries_oracle(problem, TIGHT)
    assert bnb.optimal and ref.optimal
    assert abs(bnb.objective - ref.objective) <= 1e-6 * max(1.0, abs(ref.objective))


def test_bnb_on_random_toys():
    for _, problem in random_toy_problems(6, seed=11):
        bnb = solve_micp_bnb(problem, TIGHT)
        ref = enumerate_binaries_oracle(problem, TIGHT)
        assert bnb.status == ref.status
        if not ref.optimal:
            continue
        assert abs(bnb.objective - ref.objective) <= 1e-6 * max(1.0, abs(ref.objective))
        assert bnb.info["bound_violations"] == 0
        assert bnb.max_residual <= TIGHT.feas_tol
        assert check_feasibility(problem, bnb, 10 * TIGHT.feas_tol) == []
        assert bnb.bound <= bnb.objective + 1e-9


def test_infeasible_micp():
    case, scen = bundled("toy3")
    w = scen.window(0, 1)
    heavy = ScenarioTrace(w.wind_speed, {k: (v * 1e3 if k.startswith("p_l.") else v)
                                         for k, v in w.series.items()})
    problem = build_micp(case, heavy, None, 1)
    assert solve_micp_bnb(problem).status == INFEASIBLE


def test_node_limit_reports_iteration_limit():
    p = MicpProblem()
    ids = [p.add_var(VarRef("b", f"k{j}", 0), 0, 1, binary=True) for j in range(6)]
    for i in ids:
        p.add_objective(i, 1.0)
    p.add_ge(cid("cover"), {i: 2.0 for i in ids}, 3.0)
    sol = solve_micp_bnb(p, SolverConfig(mip_gap=0.0, bnb_node_limit=1))
    assert sol.status == ITERATION_LIMIT
    assert sol.nodes == 1
    full = solve_micp_bnb(p, TIGHT)
    assert full.optimal and full.objective == pytest.approx(2.0, abs=1e-7)


def test_bnb_deterministic():
    problem = window_problem("toy3")
    a = solve_micp_bnb(problem, TIGHT)
    b = solve_micp_bnb(problem, TIGHT)
    assert a.nodes == b.nodes
    np.testing.assert_array_equal(a.x, b.x)


# --- enumeration oracle -------------------------------------------------------------


def test_enumeration_without_binaries():
    p = scalar_problem(lb=3.0, ub=4.0)
    sol = enumerate_binaries_oracle(p)
    assert sol.optimal and sol.x[0] == pytest.approx(3.0, abs=1e-7)
    assert sol.nodes == 1


def test_enumeration_prefers_first_assignment_on_ties():
    # (0,1), (1,0) and (1,1) all cost zero; (0,0) forces y = 1
    sol = enumerate_binaries_oracle(_two_binaries(), TIGHT)
    assert sol.optimal
    assert sol.x[:2] == pytest.approx([0.0, 1.0], abs=1e-9)
    assert sol.nodes == 4


def test_enumeration_cap_and_infeasible():
    p = MicpProblem()
    for j in range(5):
        p.add_var(VarRef("b", f"k{j}", 0), 0, 1, binary=True)
    with pytest.raises(ValueError, match="cap"):
        enumerate_binaries_oracle(p, cap=4)
    p.add_ge(cid("impossible"), {j: 1.0 for j in range(5)}, 6.0)
    assert enumerate_binaries_oracle(p).status == INFEASIBLE


# --- feasibility and activity -------------------------------------------------------


def test_optimal_point_is_feasible():
    problem = window_problem("toy3")
    sol = solve_micp_bnb(problem, TIGHT)
    assert check_feasibility(problem, sol, 10 * TIGHT.feas_tol) == []
    assert check_feasibility(problem, sol.values, 10 * TIGHT.feas_tol) == []


def test_cone_violation_residual():
    p = _disk(1.0)
    report = check_feasibility(p, np.array([1.5, 0.0]), 1e-9)
    assert report == [(cid("disk"), pytest.approx(0.5, abs=1e-12))]


def test_bound_and_integrality_violations():
    p = _two_binaries()
    report = dict(check_feasibility(p, np.array([0.5, 0.0, 12.0]), 1e-9))
    assert report[ConstraintId("integrality", "b:a", 0)] == pytest.approx(0.5)
    assert report[ConstraintId("bound_hi", "y:x", 0)] == pytest.approx(2.0)
    assert cid("cover") not in report


def test_zero_point_lists_balance_rows():
    problem = window_problem("toy3")
    report = check_feasibility(problem, np.zeros(problem.n), 1e-6)
    families = {c.family for c, _ in report}
    assert "pf_balance_p" in families
    residuals = [r for _, r in report]
    assert residuals == sorted(residuals, reverse=True)


def test_missing_variable_rejected():
    problem = window_problem("toy3")
    with pytest.raises(ValueError, match="missing"):
        check_feasibility(problem, {}, 1e-6)
    with pytest.raises(ValueError, match="shape"):
        check_feasibility(problem, np.zeros(3), 1e-6)


def test_active_lower_row():
    p = scalar_problem()
    p.add_ge(cid("floor"), {0: 1.0}, 1.0)
    p.add_le(cid("ceiling"), {0: 1.0}, 10.0)
    active = extract_active_set(p, solve_socp(p))
    assert isinstance(active, ActiveSet)
    assert cid("floor") in active and cid("ceiling") not in active
    assert len(active) == 1


def test_loaded_cone_is_active():
    active = extract_active_set(_disk(), solve_socp(_disk()))
    assert active.ids == frozenset({cid("disk")})


def test_interior_optimum_has_empty_active_set():
    p = scalar_problem(lb=1.0, ub=5.0)
    p.add_le(cid("loose"), {0: 1.0}, 4.0)
    sol = solve_socp(p)
    assert len(extract_active_set(p, sol)) == 0


def test_active_set_needs_optimal_solution():
    p = scalar_problem()
    with pytest.raises(ValueError, match="optimal"):
        extract_active_set(p, solve_socp(p))


def test_fingerprint_order_independent():
    a = ActiveSet(frozenset({cid("a"), cid("b")}))
    b = ActiveSet(frozenset({cid("b"), cid("a")}))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != ActiveSet(frozenset({cid("a")})).fingerprint


@pytest.mark.parametrize("kwargs", [dict(feas_tol=0), dict(mip_gap=-1), dict(bnb_node_limit=0),
                                    dict(time_limit=0), dict(act_tol=-1e-6)])
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)
