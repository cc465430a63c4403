"""Shared builders for the test suite."""
from __future__ import annotations

import copy
import json
from functools import lru_cache

import numpy as np

from w2h.conic import SolverConfig
from w2h.domain import bundled_path, case_from_dict, load_case, load_scenario
from w2h.model import build_micp
from w2h.problem import ConstraintId, MicpProblem, VarRef
from w2h.scenarios import ScenarioSampler

TIGHT = SolverConfig(mip_gap=1e-7)
TOYS = ("toy3", "toy_desal")
BUNDLED = ("toy3", "toy_desal", "case13", "case33")


@lru_cache(maxsize=None)
def bundled(name: str):
    """(case, base-day scenario) of a bundled case."""
    return load_case(f"{name}.json"), load_scenario(f"day_{name}.csv")


def case_dict(name: str) -> dict:
    return copy.deepcopy(json.loads(bundled_path(f"{name}.json").read_text()))


def case_with(name: str, edit) -> object:
    """Bundled case with ``edit(dict)`` applied to its raw document."""
    data = case_dict(name)
    edit(data)
    return case_from_dict(data)


def toy_sampler(name: str, horizon: int | None = None) -> ScenarioSampler:
    case, base = bundled(name)
    return ScenarioSampler(case, base, horizon or case.horizon, level_spread=0.4,
                           wind_sigma=4.0)


def random_toy_problems(count: int, seed: int):
    """``count`` sampled toy MICPs alternating over the bundled toys (<= 10 binaries)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        name = TOYS[i % len(TOYS)]
        case, _ = bundled(name)
        sampler = toy_sampler(name)
        scen, init, _ = sampler.draw(rng)
        out.append((name, build_micp(case, scen, init, case.horizon)))
    return out


def window_problem(name: str, start: int = 0, horizon: int | None = None, init=None):
    case, scen = bundled(name)
    horizon = horizon or case.horizon
    return build_micp(case, scen.window(start, horizon), init, horizon)


def scalar_problem(lb: float = -np.inf, ub: float = np.inf, cost: float = 1.0) -> MicpProblem:
    """One continuous variable ``x`` with the given bounds and objective ``cost * x``."""
    p = MicpProblem()
    i = p.add_var(VarRef("x", "x", 0), lb, ub)
    p.add_objective(i, cost)
    return p


def cid(family: str, k: int = 0) -> ConstraintId:
    return ConstraintId(family, "x", 0, k)


# one line per acceptance criterion, printed in the terminal summary by conftest
ACCEPTANCE_LINES: list[str] = []


class criterion:
    """Context manager that records PASS, or FAIL with the details gathered so far."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None
        line = f"criterion {self.number} [{'PASS' if ok else 'FAIL'}] {self.title}: {self.detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False
