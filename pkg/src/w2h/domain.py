"""Data model of a wind-to-hydrogen critical infrastructure (power, water, hydrogen).

Cases are immutable once loaded.  Units: MW / MVAr / MVA for power, p.u.^2 for
squared voltages and currents, m^3/h for water flow, m for heads, kg and kg/h for
hydrogen, metric tons for CO2.  ``dt_minutes`` converts rates into per-step
quantities.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np


class CaseError(ValueError):
    """Raised when a case or scenario file cannot be loaded or is invalid."""


# --- power --------------------------------------------------------------------------


@dataclass(frozen=True)
class Bus:
    id: str
    v_lo: float = 0.9025
    v_hi: float = 1.1025


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r: float
    x: float
    s_max: float
    i_lo: float = 0.0
    i_hi: float = 4.0
    id: str = ""

    @property
    def name(self) -> str:
        return self.id or f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class DieselGenCcs:
    id: str
    bus: str
    p_lo: float
    p_hi: float
    q_lo: float
    q_hi: float
    emission_factor: float = 0.7
    capture_ratio: float = 0.0


@dataclass(frozen=True)
class WindFarm:
    id: str
    bus: str
    rated_power: float
    cut_in: float
    rated_speed: float
    cut_out: float
    hosting_capacity: float


@dataclass(frozen=True)
class PowerNetwork:
    root: str
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    diesel: tuple[DieselGenCcs, ...]
    wind: WindFarm | None = None
    s_base_mva: float = 10.0


# --- water --------------------------------------------------------------------------


@dataclass(frozen=True)
class WaterNode:
    id: str
    y_lo: float
    y_hi: float


@dataclass(frozen=True)
class Pump:
    id: str
    bus: str
    a1: float
    a0: float
    y_gain_max: float
    efficiency: float


@dataclass(frozen=True)
class Pipe:
    id: str
    from_node: str
    to_node: str
    r_w: float
    f_lo: float
    f_hi: float
    h: float = 0.0
    pump: Pump | None = None


@dataclass(frozen=True)
class WaterTank:
    id: str
    node: str
    v_lo: float
    v_hi: float
    v_init: float
    f_lo: float
    f_hi: float


@dataclass(frozen=True)
class Desalination:
    id: str
    node: str
    bus: str
    f_max: float
    energy: tuple[float, float, float, float]


@dataclass(frozen=True)
class WaterNetwork:
    nodes: tuple[WaterNode, ...] = ()
    pipes: tuple[Pipe, ...] = ()
    tanks: tuple[WaterTank, ...] = ()
    desalination: tuple[Desalination, ...] = ()

    @property
    def pumps(self) -> tuple[Pipe, ...]:
        return tuple(p for p in self.pipes if p.pump is not None)


# --- hydrogen -----------------------------------------------------------------------


@dataclass(frozen=True)
class HydrogenSystem:
    id: str
    bus: str
    node: str | None
    xi_we_p: float
    xi_we_w: float
    p_we_lo: float
    p_we_hi: float
    h_we_lo: float
    h_we_hi: float
    xi_fc_h: float
    h_fc_lo: float
    h_fc_hi: float
    xi_dsp: float
    v_lo: float
    v_hi: float
    v_init: float
    s_max: float


@dataclass(frozen=True)
class W2HCase:
    name: str
    power: PowerNetwork
    water: WaterNetwork
    hydrogen: HydrogenSystem | None
    a1_cost: float
    a2_cost: float
    dt_minutes: float = 5.0
    horizon: int = 12

    @property
    def dt_hours(self) -> float:
        return self.dt_minutes / 60.0

    @property
    def binaries_per_step(self) -> int:
        return (len(self.water.pumps) + 4 * len(self.water.desalination)
                + (2 if self.hydrogen is not None else 0))

    def to_dict(self) -> dict[str, Any]:
        return _case_to_dict(self)

    def digest(self) -> str:
        """Short stable hash of the case content."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


# --- scenarios ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioTrace:
    """Per-step exogenous series.

    Column naming: ``wind_speed``, ``h_ts`` and per-entity ``p_l.<bus>``,
    ``q_l.<bus>``, ``p_ts.<bus>``, ``q_ts.<bus>``, ``d.<node>``.  Missing series
    read as zero.
    """

    wind_speed: np.ndarray
    series: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.wind_speed)
        for key, val in self.series.items():
            if len(val) != n:
                raise CaseError(f"series {key!r} has length {len(val)}, expected {n}")
        if np.any(np.asarray(self.wind_speed) < 0):
            raise CaseError("wind speed must be nonnegative")

    def __len__(self) -> int:
        return len(self.wind_speed)

    def get(self, name: str, t: int) -> float:
        s = self.series.get(name)
        return 0.0 if s is None else float(s[t])

    def column(self, name: str) -> np.ndarray:
        s = self.series.get(name)
        return np.zeros(len(self)) if s is None else np.asarray(s, dtype=float)

    def window(self, start: int, length: int, wrap: bool = True) -> "ScenarioTrace":
        n = len(self)
        if not wrap and start + length > n:
            raise CaseError(f"window [{start}, {start + length}) exceeds trace length {n}")
        idx = (np.arange(start, start + length)) % n
        return ScenarioTrace(np.asarray(self.wind_speed)[idx],
                             {k: np.asarray(v)[idx] for k, v in self.series.items()})

    def columns(self) -> list[str]:
        return ["wind_speed"] + sorted(self.series)


# --- physics oracles ----------------------------------------------------------------


def wind_speed_to_power(speed: float, farm: WindFarm) -> float:
    """Cubic cut-in / rated / cut-out turbine curve, in MW."""
    v = float(speed)
    if v < farm.cut_in or v > farm.cut_out:
        return 0.0
    if v >= farm.rated_speed:
        return farm.rated_power
    num = v ** 3 - farm.cut_in ** 3
    den = farm.rated_speed ** 3 - farm.cut_in ** 3
    return farm.rated_power * num / den


def head_loss_exact(r_w: float, f: float) -> float:
    return r_w * f * abs(f)


# --- loading / saving ---------------------------------------------------------------

_SCHEMA_NAME = "case.schema.json"


def case_schema() -> dict[str, Any]:
    return json.loads(resources.files("w2h.data").joinpath(_SCHEMA_NAME).read_text())


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file (``case13.json``, ``day13.csv``, ...)."""
    return Path(str(resources.files("w2h.data").joinpath(name)))


def _locate(path: str | Path, suffix: str) -> Path:
    """A local path if it exists, else a bundled file by name (suffix optional)."""
    path = Path(path)
    if path.exists() or path.is_absolute():
        return path
    for name in (path.name, path.name + suffix):
        if bundled_path(name).exists():
            return bundled_path(name)
    return path


def _build(cls, data: dict[str, Any], rename: dict[str, str] | None = None):
    rename = rename or {}
    names = {f.name for f in fields(cls)}
    kw = {}
    for key, val in data.items():
        key = rename.get(key, key)
        if key in names:
            kw[key] = val
    return cls(**kw)


def case_from_dict(data: dict[str, Any]) -> W2HCase:
    try:
        jsonschema.validate(data, case_schema())
    except jsonschema.ValidationError as exc:
        locus = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CaseError(f"schema error at {locus}: {exc.message}") from None

    br = {"from": "from_bus", "to": "to_bus"}
    pw = data["power"]
    power = PowerNetwork(
        root=pw["root"],
        buses=tuple(_build(Bus, b) for b in pw["buses"]),
        branches=tuple(_build(Branch, b, br) for b in pw["branches"]),
        diesel=tuple(_build(DieselGenCcs, d) for d in pw.get("diesel", [])),
        wind=_build(WindFarm, pw["wind"]) if pw.get("wind") else None,
        s_base_mva=pw.get("s_base_mva", 10.0),
    )
    wt = data.get("water") or {}
    pipes = []
    for p in wt.get("pipes", []):
        pump = _build(Pump, p["pump"]) if p.get("pump") else None
        pipes.append(replace(_build(Pipe, {k: v for k, v in p.items() if k != "pump"},
                                    {"from": "from_node", "to": "to_node"}), pump=pump))
    desal = []
    for d in wt.get("desalination", []):
        d = dict(d)
        d["energy"] = tuple(d["energy"])
        desal.append(_build(Desalination, d))
    water = WaterNetwork(
        nodes=tuple(_build(WaterNode, n) for n in wt.get("nodes", [])),
        pipes=tuple(pipes),
        tanks=tuple(_build(WaterTank, t) for t in wt.get("tanks", [])),
        desalination=tuple(desal),
    )
    hs = data.get("hydrogen")
    hydrogen = _build(HydrogenSystem, hs) if hs else None
    case = W2HCase(
        name=data.get("name", "case"),
        power=power,
        water=water,
        hydrogen=hydrogen,
        a1_cost=data["costs"]["a1"],
        a2_cost=data["costs"]["a2"],
        dt_minutes=data["time"]["dt_minutes"],
        horizon=data["time"]["horizon"],
    )
    problems = validate_case(case)
    if problems:
        raise CaseError("invalid case: " + "; ".join(problems))
    return case


def load_case(path: str | Path) -> W2HCase:
    """Load and validate a case file (a path or a bundled name such as ``case13``)."""
    path = _locate(path, ".json")
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise CaseError(f"case file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CaseError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                        f"{exc.msg}") from None
    return case_from_dict(data)


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_drop_none(v) for v in d]
    return d


def _case_to_dict(case: W2HCase) -> dict[str, Any]:
    pw = case.power
    branches = []
    for b in pw.branches:
        d = asdict(b)
        d["from"] = d.pop("from_bus")
        d["to"] = d.pop("to_bus")
        if not d["id"]:
            del d["id"]
        branches.append(d)
    pipes = []
    for p in case.water.pipes:
        d = asdict(p)
        d["from"] = d.pop("from_node")
        d["to"] = d.pop("to_node")
        pipes.append(d)
    desal = []
    for ds in case.water.desalination:
        d = asdict(ds)
        d["energy"] = list(d["energy"])
        desal.append(d)
    out = {
        "name": case.name,
        "power": {
            "s_base_mva": pw.s_base_mva,
            "root": pw.root,
            "buses": [asdict(b) for b in pw.buses],
            "branches": branches,
            "diesel": [asdict(d) for d in pw.diesel],
            "wind": asdict(pw.wind) if pw.wind else None,
        },
        "water": {
            "nodes": [asdict(n) for n in case.water.nodes],
            "pipes": pipes,
            "tanks": [asdict(t) for t in case.water.tanks],
            "desalination": desal,
        },
        "hydrogen": asdict(case.hydrogen) if case.hydrogen else None,
        "costs": {"a1": case.a1_cost, "a2": case.a2_cost},
        "time": {"dt_minutes": case.dt_minutes, "horizon": case.horizon},
    }
    return _drop_none(out)


def save_case(case: W2HCase, path: str | Path) -> None:
    Path(path).write_text(json.dumps(case.to_dict(), indent=2) + "\n")


def load_scenario(path: str | Path) -> ScenarioTrace:
    path = _locate(path, ".csv")
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except FileNotFoundError:
        raise CaseError(f"scenario file not found: {path}") from None
    if len(rows) < 2:
        raise CaseError(f"{path}: scenario needs a header and at least one row")
    header = [h.strip() for h in rows[0]]
    if "wind_speed" not in header:
        raise CaseError(f"{path}: missing 'wind_speed' column")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise CaseError(f"{path}: {exc}") from None
    if data.shape[1] != len(header):
        raise CaseError(f"{path}: ragged rows")
    cols = {h: data[:, j] for j, h in enumerate(header)}
    wind = cols.pop("wind_speed")
    return ScenarioTrace(wind, cols)


def save_scenario(scenario: ScenarioTrace, path: str | Path) -> None:
    cols = scenario.columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for t in range(len(scenario)):
            w.writerow([repr(float(scenario.wind_speed[t]))]
                       + [repr(float(scenario.series[c][t])) for c in cols[1:]])


# --- validation ---------------------------------------------------------------------


def _radial_problems(power: PowerNetwork) -> list[str]:
    ids = [b.id for b in power.buses]
    parent: dict[str, str] = {}
    adj: dict[str, list[str]] = {i: [] for i in ids}
    out = []
    for br in power.branches:
        if br.from_bus in adj and br.to_bus in adj:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
            if br.to_bus in parent:
                out.append(f"bus {br.to_bus} has more than one incoming branch")
            parent[br.to_bus] = br.from_bus
    if len(power.branches) != len(ids) - 1:
        out.append("non-radial network: branch count must equal bus count - 1")
    seen = {power.root}
    stack = [power.root] if power.root in adj else []
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    if len(seen) != len(ids):
        out.append("non-radial network: buses not connected to root "
                   + ",".join(sorted(set(ids) - seen)))
    if power.root in parent:
        out.append("non-radial network: root bus has an incoming branch")
    return out


def validate_case(case: W2HCase) -> list[str]:
    """Return a list of human-readable invariant violations (empty when valid)."""
    rep: list[str] = []
    pw = case.power
    bus_ids = [b.id for b in pw.buses]
    buses = set(bus_ids)
    if len(buses) != len(bus_ids):
        rep.append("duplicate bus id")
    if pw.root not in buses:
        rep.append(f"dangling reference: root bus {pw.root!r}")
    if pw.s_base_mva <= 0:
        rep.append("s_base_mva must be > 0")
    for b in pw.buses:
        if not (0 < b.v_lo < b.v_hi):
            rep.append(f"bus {b.id}: V_lo < V_hi with V_lo > 0 violated")
    for br in pw.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in buses:
                rep.append(f"dangling reference: branch {br.name} bus {end!r}")
        if br.r < 0 or br.x < 0:
            rep.append(f"branch {br.name}: negative impedance")
        if br.s_max <= 0:
            rep.append(f"branch {br.name}: s_max must be > 0")
        if not (0 <= br.i_lo <= br.i_hi):
            rep.append(f"branch {br.name}: current bounds out of order")
    if not any(r.startswith("dangling") for r in rep):
        rep.extend(_radial_problems(pw))
    for d in pw.diesel:
        if d.bus not in buses:
            rep.append(f"dangling reference: diesel {d.id} bus {d.bus!r}")
        if d.p_lo > d.p_hi or d.q_lo > d.q_hi:
            rep.append(f"diesel {d.id}: generator limits out of order")
        if d.emission_factor < 0:
            rep.append(f"diesel {d.id}: emission factor must be >= 0")
        if not 0 <= d.capture_ratio <= 1:
            rep.append(f"diesel {d.id}: capture ratio out of range")
    w = pw.wind
    if w is not None:
        if w.bus not in buses:
            rep.append(f"dangling reference: wind {w.id} bus {w.bus!r}")
        if not (0 < w.cut_in < w.rated_speed < w.cut_out):
            rep.append(f"wind {w.id}: need 0 < cut-in < rated < cut-out")
        if w.rated_power <= 0:
            rep.append(f"wind {w.id}: rated power must be > 0")
        if not 0 <= w.hosting_capacity <= w.rated_power:
            rep.append(f"wind {w.id}: hosting capacity out of range")

    wt = case.water
    nodes = {n.id for n in wt.nodes}
    for n in wt.nodes:
        if n.y_lo > n.y_hi:
            rep.append(f"node {n.id}: head bounds out of order")
    for p in wt.pipes:
        for end in (p.from_node, p.to_node):
            if end not in nodes:
                rep.append(f"dangling reference: pipe {p.id} node {end!r}")
        if p.r_w <= 0:
            rep.append(f"pipe {p.id}: r_w must be > 0")
        if p.f_lo > p.f_hi:
            rep.append(f"pipe {p.id}: flow bounds out of order")
        if p.pump is None:
            if not (p.f_lo < 0 < p.f_hi):
                rep.append(f"pipe {p.id}: plain pipe needs f_lo < 0 < f_hi")
            elif not (1 / (1 + math.sqrt(2)) <= -p.f_lo / p.f_hi <= 1 + math.sqrt(2)):
                rep.append(f"pipe {p.id}: flow bound asymmetry breaks the head-loss hull")
        else:
            pu = p.pump
            if p.f_lo != 0:
                rep.append(f"pipe {p.id}: pump pipe requires f_lo = 0")
            if pu.bus not in buses:
                rep.append(f"dangling reference: pump {pu.id} bus {pu.bus!r}")
            if not 0 < pu.efficiency <= 1:
                rep.append(f"pump {pu.id}: efficiency out of range")
            if pu.y_gain_max < 0:
                rep.append(f"pump {pu.id}: head gain bound must be >= 0")
            if pu.a1 < 0 or pu.a0 < 0:
                rep.append(f"pump {pu.id}: curve coefficients must be >= 0")
    for t in wt.tanks:
        if t.node not in nodes:
            rep.append(f"dangling reference: tank {t.id} node {t.node!r}")
        if not t.v_lo <= t.v_init <= t.v_hi:
            rep.append(f"tank {t.id}: initial volume outside bounds")
        if t.f_lo > t.f_hi:
            rep.append(f"tank {t.id}: flow bounds out of order")
    for d in wt.desalination:
        if d.node not in nodes:
            rep.append(f"dangling reference: desalination {d.id} node {d.node!r}")
        if d.bus not in buses:
            rep.append(f"dangling reference: desalination {d.id} bus {d.bus!r}")
        if len(d.energy) != 4 or any(e <= 0 for e in d.energy):
            rep.append(f"desalination {d.id}: need 4 positive segment energies")
        if d.f_max <= 0:
            rep.append(f"desalination {d.id}: f_max must be > 0")

    h = case.hydrogen
    if h is not None:
        if h.bus not in buses:
            rep.append(f"dangling reference: hydrogen {h.id} bus {h.bus!r}")
        if h.node is not None and h.node not in nodes:
            rep.append(f"dangling reference: hydrogen {h.id} node {h.node!r}")
        if min(h.xi_we_p, h.xi_we_w, h.xi_fc_h) <= 0:
            rep.append(f"hydrogen {h.id}: conversion factors must be > 0")
        if not 0 <= h.xi_dsp < 1:
            rep.append(f"hydrogen {h.id}: dissipation out of range")
        pairs = [(h.p_we_lo, h.p_we_hi), (h.h_we_lo, h.h_we_hi), (h.h_fc_lo, h.h_fc_hi),
                 (h.v_lo, h.v_hi)]
        if any(lo < 0 or lo > hi for lo, hi in pairs):
            rep.append(f"hydrogen {h.id}: bounds out of order")
        if not h.v_lo <= h.v_init <= h.v_hi:
            rep.append(f"hydrogen {h.id}: initial tank volume outside bounds")
        if h.s_max <= 0:
            rep.append(f"hydrogen {h.id}: station limit must be > 0")
    if case.dt_minutes <= 0:
        rep.append("dt_minutes must be > 0")
    if case.horizon < 1:
        rep.append("horizon must be >= 1")
    return rep


def scenario_columns_for(case: W2HCase) -> list[str]:
    """Series names the model reads for this case."""
    cols = ["wind_speed", "h_ts"]
    for b in case.power.buses:
        cols += [f"p_l.{b.id}", f"q_l.{b.id}", f"p_ts.{b.id}", f"q_ts.{b.id}"]
    cols += [f"d.{n.id}" for n in case.water.nodes]
    return cols


def variant(case: W2HCase, kind: str) -> W2HCase:
    """Derived comparison systems.

    ``diesel-only`` drops wind and hydrogen; ``wind-only`` keeps wind without the
    hydrogen subsystem.  Both remove carbon capture.  ``w2h`` returns the case.
    """
    if kind == "w2h":
        return case
    no_ccs = tuple(replace(d, capture_ratio=0.0) for d in case.power.diesel)
    if kind == "wind-only":
        power = replace(case.power, diesel=no_ccs)
    elif kind == "diesel-only":
        power = replace(case.power, diesel=no_ccs, wind=None)
    else:
        raise ValueError(f"unknown variant {kind!r}")
    return replace(case, name=f"{case.name}-{kind}", power=power, hydrogen=None)


def iter_branch_children(power: PowerNetwork) -> dict[str, list[Branch]]:
    out: dict[str, list[Branch]] = {b.id: [] for b in power.buses}
    for br in power.branches:
        out[br.from_bus].append(br)
    return out


def bus_parent_branch(power: PowerNetwork) -> dict[str, Branch]:
    return {br.to_bus: br for br in power.branches}

