"""Regenerate the bundled cases and base-day traces under src/w2h/data/.

    python3 scripts/make_cases.py
"""
from __future__ import annotations

from pathlib import Path

from w2h.domain import case_from_dict, save_case, save_scenario
from w2h.scenarios import synthesize_day

DATA = Path(__file__).resolve().parents[1] / "src" / "w2h" / "data"

DESAL_ENERGY = [0.0045, 0.0038, 0.0035, 0.0036]  # MWh per m^3 on each quarter of f_max


def branch_list(edges, s_base, v_lo, limits):
    out = []
    for (a, b, r, x) in edges:
        s = limits[b]
        out.append({"from": a, "to": b, "r": r, "x": x, "s_max": round(s, 3),
                    "i_lo": 0.0, "i_hi": round((s / s_base) ** 2 / v_lo * 1.05, 6)})
    return out


def downstream_limits(edges, peak_p, peak_q, export_bus, export_mw, margin=1.5, floor=0.5):
    """Branch limits sized from downstream peak load plus any export path."""
    children: dict[str, list[str]] = {}
    parent = {}
    for a, b, *_ in edges:
        children.setdefault(a, []).append(b)
        parent[b] = a

    def load(bus):
        p, q = peak_p.get(bus, 0.0), peak_q.get(bus, 0.0)
        for c in children.get(bus, []):
            cp, cq = load(c)
            p, q = p + cp, q + cq
        return p, q

    path = set()
    u = export_bus
    while u in parent:
        path.add(u)
        u = parent[u]
    out = {}
    for _, b, *_ in edges:
        p, q = load(b)
        s = margin * (p * p + q * q) ** 0.5 + floor
        if b in path:
            s += export_mw
        out[b] = s
    return out


def pump(pid, bus, a1, a0, gain, eff=0.75):
    return {"id": pid, "bus": bus, "a1": a1, "a0": a0, "y_gain_max": gain, "efficiency": eff}


def pipe(pid, a, b, r_w, f, h, pu=None):
    d = {"id": pid, "from": a, "to": b, "r_w": r_w, "f_lo": 0.0 if pu else -f, "f_hi": f,
         "h": h}
    if pu:
        d["pump"] = pu
    return d


def diesel(bus, p_hi, q_lo, q_hi):
    return [{"id": "dg1", "bus": bus, "p_lo": 0.0, "p_hi": p_hi, "q_lo": q_lo, "q_hi": q_hi,
             "emission_factor": 0.7, "capture_ratio": 1.0}]


# --- 13-bus feeder with an 8-node water network --------------------------------------

E13 = [("b1", "b2", 0.012, 0.035), ("b2", "b3", 0.010, 0.020), ("b3", "b4", 0.008, 0.015),
       ("b2", "b5", 0.015, 0.020), ("b5", "b6", 0.010, 0.012), ("b2", "b7", 0.012, 0.035),
       ("b7", "b8", 0.010, 0.020), ("b7", "b9", 0.008, 0.012), ("b9", "b10", 0.010, 0.012),
       ("b9", "b11", 0.012, 0.010), ("b7", "b12", 0.004, 0.006), ("b12", "b13", 0.010, 0.015)]
P13 = {"b2": 0.20, "b3": 0.17, "b4": 0.40, "b5": 0.17, "b6": 0.23, "b7": 0.60, "b8": 0.05,
       "b9": 0.10, "b10": 0.17, "b11": 0.13, "b12": 0.17, "b13": 0.84}
Q13 = {k: round(0.55 * v, 4) for k, v in P13.items()}
D13 = {"w4": 22.0, "w5": 18.0, "w6": 20.0, "w7": 16.0, "w8": 24.0}


def case13():
    v_lo, v_hi = 0.9025, 1.1025
    lim = downstream_limits(E13, P13, Q13, "b8", 1.5)
    nodes = [{"id": "w1", "y_lo": 0.0, "y_hi": 5.0}, {"id": "w2", "y_lo": 0.0, "y_hi": 90.0},
             {"id": "w3", "y_lo": 0.0, "y_hi": 60.0}]
    nodes += [{"id": f"w{i}", "y_lo": 10.0, "y_hi": 70.0} for i in range(4, 9)]
    return {
        "name": "case13",
        "power": {
            "s_base_mva": 10.0, "root": "b1",
            "buses": [{"id": f"b{i}", "v_lo": v_lo, "v_hi": v_hi} for i in range(1, 14)],
            "branches": branch_list(E13, 10.0, v_lo, lim),
            "diesel": diesel("b1", 6.0, -3.0, 4.5),
            "wind": {"id": "wf1", "bus": "b8", "rated_power": 4.0, "cut_in": 3.0,
                     "rated_speed": 12.0, "cut_out": 25.0, "hosting_capacity": 1.2},
        },
        "water": {
            "nodes": nodes,
            "pipes": [
                pipe("q1", "w1", "w2", 5e-5, 300.0, -20.0, pump("pu1", "b8", 0.05, 40.0, 90.0)),
                pipe("q2", "w2", "w3", 1e-4, 300.0, -25.0),
                pipe("q3", "w3", "w4", 2e-4, 250.0, 30.0),
                pipe("q4", "w4", "w5", 3e-4, 200.0, 3.0),
                pipe("q5", "w3", "w6", 2e-4, 250.0, 27.0),
                pipe("q6", "w6", "w7", 3e-4, 150.0, -12.0, pump("pu2", "b13", 0.10, 20.0, 40.0)),
                pipe("q7", "w7", "w8", 3e-4, 150.0, 20.0),
                pipe("q8", "w5", "w8", 4e-4, 150.0, 2.0),
            ],
            "tanks": [{"id": "tk1", "node": "w3", "v_lo": 500.0, "v_hi": 6000.0,
                       "v_init": 3500.0, "f_lo": -300.0, "f_hi": 300.0}],
            "desalination": [{"id": "ds1", "node": "w1", "bus": "b8", "f_max": 200.0,
                              "energy": DESAL_ENERGY}],
        },
        "hydrogen": {"id": "h1", "bus": "b8", "node": "w2", "xi_we_p": 18.0, "xi_we_w": 0.01,
                     "p_we_lo": 0.3, "p_we_hi": 3.0, "h_we_lo": 5.4, "h_we_hi": 54.0,
                     "xi_fc_h": 0.0167, "h_fc_lo": 4.0, "h_fc_hi": 40.0, "xi_dsp": 1e-5,
                     "v_lo": 0.0, "v_hi": 4000.0, "v_init": 2000.0, "s_max": 3.5},
        "costs": {"a1": 250.0, "a2": 100.0},
        "time": {"dt_minutes": 5.0, "horizon": 12},
    }


# --- 33-bus feeder with a 13-node water network --------------------------------------

_E33_OHM = [
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
]
_L33_KW = [(100, 60), (90, 40), (120, 80), (60, 30), (60, 20), (200, 100), (200, 100),
           (60, 20), (60, 20), (45, 30), (60, 35), (60, 35), (120, 80), (60, 10), (60, 20),
           (60, 20), (90, 40), (90, 40), (90, 40), (90, 40), (90, 40), (90, 50), (420, 200),
           (420, 200), (60, 25), (60, 25), (60, 20), (120, 70), (200, 600), (150, 70),
           (210, 100), (60, 40)]
Z_BASE_33 = 12.66 ** 2 / 10.0
E33 = [(f"b{a}", f"b{b}", round(r / Z_BASE_33, 6), round(x / Z_BASE_33, 6))
       for a, b, r, x in _E33_OHM]
P33 = {f"b{i + 2}": p / 1000 for i, (p, _) in enumerate(_L33_KW)}
Q33 = {f"b{i + 2}": q / 1000 for i, (_, q) in enumerate(_L33_KW)}
D33 = {f"n{i}": v for i, v in zip((4, 5, 6, 7, 8, 9, 11, 12, 13),
                                    (16.0, 14.0, 15.0, 13.0, 15.0, 14.0, 16.0, 17.0, 15.0))}


def case33():
    v_lo, v_hi = 0.81, 1.1025
    lim = downstream_limits(E33, P33, Q33, "b25", 2.0)
    y = {"n1": (0.0, 5.0), "n2": (0.0, 90.0), "n3": (0.0, 60.0), "n10": (0.0, 60.0)}
    nodes = [{"id": f"n{i}", "y_lo": y.get(f"n{i}", (10.0, 70.0))[0],
              "y_hi": y.get(f"n{i}", (10.0, 70.0))[1]} for i in range(1, 14)]
    return {
        "name": "case33",
        "power": {
            "s_base_mva": 10.0, "root": "b1",
            "buses": [{"id": f"b{i}", "v_lo": v_lo, "v_hi": v_hi} for i in range(1, 34)],
            "branches": branch_list(E33, 10.0, v_lo, lim),
            "diesel": diesel("b1", 7.0, -3.0, 5.0),
            "wind": {"id": "wf1", "bus": "b25", "rated_power": 5.0, "cut_in": 3.0,
                     "rated_speed": 12.0, "cut_out": 25.0, "hosting_capacity": 1.5},
        },
        "water": {
            "nodes": nodes,
            "pipes": [
                pipe("q1", "n1", "n2", 5e-5, 300.0, -20.0, pump("pu1", "b25", 0.05, 40.0, 90.0)),
                pipe("q2", "n2", "n3", 1e-4, 300.0, -30.0),
                pipe("q3", "n3", "n4", 2e-4, 250.0, 25.0),
                pipe("q4", "n4", "n5", 3e-4, 200.0, 5.0),
                pipe("q5", "n5", "n6", 3e-4, 200.0, 5.0),
                pipe("q6", "n4", "n7", 3e-4, 200.0, 3.0),
                pipe("q7", "n7", "n8", 3e-4, 150.0, -13.0, pump("pu2", "b14", 0.10, 20.0, 40.0)),
                pipe("q8", "n8", "n9", 3e-4, 150.0, 5.0),
                pipe("q9", "n9", "n10", 3e-4, 150.0, -25.0, pump("pu3", "b30", 0.10, 30.0, 60.0)),
                pipe("q10", "n10", "n11", 3e-4, 150.0, 27.0),
                pipe("q11", "n11", "n12", 3e-4, 150.0, 10.0),
                pipe("q12", "n12", "n13", 3e-4, 150.0, 6.0),
                pipe("q13", "n6", "n13", 4e-4, 150.0, 3.0),
                pipe("q14", "n5", "n12", 4e-4, 150.0, 2.0),
            ],
            "tanks": [{"id": "tkA", "node": "n3", "v_lo": 500.0, "v_hi": 7000.0,
                       "v_init": 4000.0, "f_lo": -300.0, "f_hi": 300.0},
                      {"id": "tkB", "node": "n10", "v_lo": 200.0, "v_hi": 3000.0,
                       "v_init": 1800.0, "f_lo": -150.0, "f_hi": 150.0}],
            "desalination": [{"id": "ds1", "node": "n1", "bus": "b25", "f_max": 250.0,
                              "energy": DESAL_ENERGY}],
        },
        "hydrogen": {"id": "h1", "bus": "b25", "node": "n2", "xi_we_p": 18.0, "xi_we_w": 0.01,
                     "p_we_lo": 0.4, "p_we_hi": 4.0, "h_we_lo": 7.2, "h_we_hi": 72.0,
                     "xi_fc_h": 0.0167, "h_fc_lo": 6.0, "h_fc_hi": 60.0, "xi_dsp": 1e-5,
                     "v_lo": 0.0, "v_hi": 6000.0, "v_init": 3000.0, "s_max": 5.0},
        "costs": {"a1": 250.0, "a2": 100.0},
        "time": {"dt_minutes": 5.0, "horizon": 24},
    }


# --- toys ----------------------------------------------------------------------------

ET = [("b1", "b2", 0.01, 0.02), ("b2", "b3", 0.01, 0.02)]
PT = {"b2": 0.8, "b3": 1.0}
QT = {"b2": 0.3, "b3": 0.4}
DT = {"c": 20.0, "d": 15.0}


def toy3():
    """3-bus feeder, pump + electrolyzer/fuel cell: 3 binaries per step."""
    v_lo = 0.9025
    lim = downstream_limits(ET, PT, QT, "b3", 1.0)
    return {
        "name": "toy3",
        "power": {
            "s_base_mva": 10.0, "root": "b1",
            "buses": [{"id": f"b{i}", "v_lo": v_lo, "v_hi": 1.1025} for i in range(1, 4)],
            "branches": branch_list(ET, 10.0, v_lo, lim),
            "diesel": diesel("b1", 3.0, -2.0, 2.0),
            "wind": {"id": "wf1", "bus": "b3", "rated_power": 2.0, "cut_in": 3.0,
                     "rated_speed": 12.0, "cut_out": 25.0, "hosting_capacity": 0.6},
        },
        "water": {
            "nodes": [{"id": "a", "y_lo": 0.0, "y_hi": 5.0}, {"id": "c", "y_lo": 10.0, "y_hi": 70.0},
                      {"id": "d", "y_lo": 0.0, "y_hi": 60.0}],
            "pipes": [pipe("q1", "a", "c", 1e-4, 120.0, -15.0, pump("pu1", "b2", 0.05, 30.0, 70.0)),
                      pipe("q2", "c", "d", 2e-4, 120.0, -10.0)],
            "tanks": [{"id": "low", "node": "a", "v_lo": 100.0, "v_hi": 5000.0, "v_init": 3000.0,
                       "f_lo": -150.0, "f_hi": 150.0},
                      {"id": "high", "node": "d", "v_lo": 50.0, "v_hi": 1500.0, "v_init": 200.0,
                       "f_lo": -150.0, "f_hi": 150.0}],
        },
        "hydrogen": {"id": "h1", "bus": "b3", "node": "c", "xi_we_p": 18.0, "xi_we_w": 0.01,
                     "p_we_lo": 0.2, "p_we_hi": 1.6, "h_we_lo": 3.6, "h_we_hi": 28.8,
                     "xi_fc_h": 0.0167, "h_fc_lo": 3.0, "h_fc_hi": 30.0, "xi_dsp": 1e-5,
                     "v_lo": 0.0, "v_hi": 2000.0, "v_init": 300.0, "s_max": 2.0},
        "costs": {"a1": 250.0, "a2": 100.0},
        "time": {"dt_minutes": 5.0, "horizon": 3},
    }


def toy_desal():
    """Same feeder with a desalination unit instead of the pump: 6 binaries per step."""
    c = toy3()
    c["name"] = "toy_desal"
    c["water"] = {
        "nodes": [{"id": "s", "y_lo": 0.0, "y_hi": 50.0}, {"id": "c", "y_lo": 10.0, "y_hi": 70.0}],
        "pipes": [pipe("q1", "s", "c", 2e-4, 120.0, -5.0)],
        "tanks": [{"id": "tk", "node": "c", "v_lo": 50.0, "v_hi": 2000.0, "v_init": 800.0,
                   "f_lo": -150.0, "f_hi": 150.0}],
        "desalination": [{"id": "ds1", "node": "s", "bus": "b3", "f_max": 100.0,
                          "energy": DESAL_ENERGY}],
    }
    c["time"]["horizon"] = 1
    return c


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    specs = [
        ("case13", case13(), P13, Q13, D13, 10.0, 13),
        ("case33", case33(), P33, Q33, D33, 15.0, 33),
        ("toy3", toy3(), PT, QT, DT, 5.0, 3),
        ("toy_desal", toy_desal(), PT, QT, {"c": 20.0}, 5.0, 4),
    ]
    for name, data, pp, qq, dd, hts, seed in specs:
        case = case_from_dict(data)
        save_case(case, DATA / f"{name}.json")
        day = synthesize_day(case, pp, qq, dd, hts, seed=seed)
        save_scenario(day, DATA / f"day_{name}.csv")
        print(f"wrote {name}: {case.binaries_per_step} binaries/step, digest {case.digest()}")


if __name__ == "__main__":
    main()
