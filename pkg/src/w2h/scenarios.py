"""Synthetic daily traces and a seeded perturbation sampler.

A day is 288 five-minute steps.  Wind speed follows a Gaussian AR(1) process
mapped onto a Weibull marginal; loads, water demand and hydrogen offtake follow
hourly shape factors interpolated to the step grid.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .domain import ScenarioTrace, W2HCase
from .model import InitialState

STEPS_PER_DAY = 288

LOAD_SHAPE = (0.62, 0.58, 0.56, 0.55, 0.57, 0.63, 0.74, 0.85, 0.90, 0.92, 0.93, 0.92,
              0.90, 0.89, 0.88, 0.89, 0.93, 0.98, 1.00, 0.98, 0.93, 0.85, 0.75, 0.67)
WATER_SHAPE = (0.45, 0.40, 0.38, 0.38, 0.45, 0.70, 1.00, 1.20, 1.15, 1.05, 1.00, 1.00,
               1.05, 1.00, 0.95, 0.95, 1.00, 1.15, 1.30, 1.25, 1.10, 0.90, 0.70, 0.55)
H2_SHAPE = (0.30, 0.25, 0.25, 0.25, 0.30, 0.50, 0.90, 1.30, 1.50, 1.40, 1.30, 1.30,
            1.30, 1.30, 1.30, 1.40, 1.50, 1.50, 1.30, 1.00, 0.80, 0.60, 0.45, 0.35)


def hourly_to_steps(shape, n_steps: int = STEPS_PER_DAY) -> np.ndarray:
    """Periodic linear interpolation of 24 hourly factors onto ``n_steps`` points."""
    hours = np.arange(n_steps) * 24.0 / n_steps
    knots = np.arange(25)
    vals = np.append(shape, shape[0])
    return np.interp(hours, knots, vals)


def wind_trace(n: int, rng: np.random.Generator, weibull_k: float = 2.0,
               weibull_c: float = 9.0, phi: float = 0.995) -> np.ndarray:
    """Autocorrelated wind speeds (m/s) with a Weibull(k, c) marginal."""
    z = np.empty(n)
    z[0] = rng.standard_normal()
    s = np.sqrt(1 - phi * phi)
    for t in range(1, n):
        z[t] = phi * z[t - 1] + s * rng.standard_normal()
    u = np.clip(stats.norm.cdf(z), 1e-12, 1 - 1e-12)
    return weibull_c * (-np.log1p(-u)) ** (1.0 / weibull_k)


def synthesize_day(case: W2HCase, peak_p: dict[str, float], peak_q: dict[str, float],
                   demand: dict[str, float], h_ts_mean: float, seed: int,
                   n_steps: int = STEPS_PER_DAY) -> ScenarioTrace:
    """Base-day trace for ``case``: shaped loads and demands plus a wind trace."""
    rng = np.random.default_rng(seed)
    load = hourly_to_steps(LOAD_SHAPE, n_steps)
    water = hourly_to_steps(WATER_SHAPE, n_steps)
    h2 = hourly_to_steps(H2_SHAPE, n_steps)
    series: dict[str, np.ndarray] = {}
    for b in case.power.buses:
        if peak_p.get(b.id, 0.0) > 0:
            wiggle = 1 + 0.02 * rng.standard_normal(n_steps)
            series[f"p_l.{b.id}"] = np.round(peak_p[b.id] * load * wiggle, 6)
            series[f"q_l.{b.id}"] = np.round(peak_q.get(b.id, 0.0) * load * wiggle, 6)
    for n in case.water.nodes:
        if demand.get(n.id, 0.0) > 0:
            wiggle = 1 + 0.03 * rng.standard_normal(n_steps)
            series[f"d.{n.id}"] = np.round(np.maximum(demand[n.id] * water * wiggle, 0), 6)
    if case.hydrogen is not None and h_ts_mean > 0:
        series["h_ts"] = np.round(h_ts_mean * h2, 6)
    wind = np.round(wind_trace(n_steps, rng), 6)
    return ScenarioTrace(wind, series)


@dataclass
class ScenarioSampler:
    """Draws perturbed windows of a base trace together with initial storage levels.

    Loads and demands get a common level factor in ``1 +/- level_spread`` and
    independent per-step noise; wind speed gets an AR(1) additive perturbation.
    Tank levels are drawn uniformly from the middle ``1 - 2 * tank_margin`` of their
    range.  ``starts`` restricts window starts to ``[lo, hi)``; by default any step
    of the base trace can start a window.
    """

    case: W2HCase
    base: ScenarioTrace
    horizon: int
    level_spread: float = 0.10
    step_sigma: float = 0.04
    wind_sigma: float = 1.5
    tank_margin: float = 0.2
    starts: tuple[int, int] | None = None

    def draw(self, rng: np.random.Generator) -> tuple[ScenarioTrace, InitialState, int]:
        """Return (window, initial state, start index of the window in the base trace)."""
        lo, hi = self.starts or (0, len(self.base))
        start = int(rng.integers(lo, hi)) % len(self.base)
        w = self.base.window(start, self.horizon)
        level = 1 + self.level_spread * rng.uniform(-1, 1)
        series = {}
        for key in sorted(w.series):
            noise = 1 + self.step_sigma * rng.standard_normal(self.horizon)
            series[key] = np.maximum(w.series[key] * level * noise, 0.0)
        pert = np.empty(self.horizon)
        pert[0] = rng.standard_normal()
        for t in range(1, self.horizon):
            pert[t] = 0.9 * pert[t - 1] + np.sqrt(1 - 0.81) * rng.standard_normal()
        wind = np.maximum(w.wind_speed + self.wind_sigma * pert, 0.0)
        return ScenarioTrace(wind, series), self.draw_initial(rng), start

    def draw_initial(self, rng: np.random.Generator) -> InitialState:
        m = self.tank_margin
        v_wt = {}
        for tk in self.case.water.tanks:
            span = tk.v_hi - tk.v_lo
            v_wt[tk.id] = float(rng.uniform(tk.v_lo + m * span, tk.v_hi - m * span))
        h = self.case.hydrogen
        v_ht = None
        if h is not None:
            span = h.v_hi - h.v_lo
            v_ht = float(rng.uniform(h.v_lo + m * span, h.v_hi - m * span))
        return InitialState(v_wt, v_ht)
