"""Plain-text and CSV report emission with self-describing headers.

Every file starts with ``#`` lines naming the tool version, the case hash and the
configuration hash.  Numbers are written with fixed precision so that identical
inputs give identical bytes.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .simulator import Comparison, MetricsReport, SimulationTrace

REFERENCE_NET_EMISSIONS_T = {"diesel-only": 79.53, "wind-only": 44.27, "w2h": 0.0}


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[list]


@dataclass
class Report:
    kind: str
    case_digest: str
    config_digest: str
    tables: list[Table] = field(default_factory=list)
    notes: dict[str, object] = field(default_factory=dict)

    def header(self) -> list[str]:
        return [f"# w2h {__version__}", f"# report: {self.kind}",
                f"# case: {self.case_digest}", f"# config: {self.config_digest}"]


def _cell(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        text = f"{v:.6f}"
        return "0.000000" if text == "-0.000000" else text
    return str(v)


def render_text(report: Report) -> str:
    out = report.header()
    for key in sorted(report.notes):
        out.append(f"# {key}: {_cell(report.notes[key])}")
    for table in report.tables:
        cells = [[_cell(v) for v in row] for row in table.rows]
        widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(table.columns)]
        out += ["", f"[{table.name}]",
                "  ".join(c.rjust(w) for c, w in zip(table.columns, widths)),
                "  ".join("-" * w for w in widths)]
        out += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    return "\n".join(out) + "\n"


def render_csv(report: Report) -> str:
    buf = io.StringIO()
    buf.write("\n".join(report.header()) + "\n")
    for key in sorted(report.notes):
        buf.write(f"# {key}: {_cell(report.notes[key])}\n")
    writer = csv.writer(buf, lineterminator="\n")
    for table in report.tables:
        buf.write(f"# table: {table.name}\n")
        writer.writerow(table.columns)
        writer.writerows([[_cell(v) for v in row] for row in table.rows])
    return buf.getvalue()


def emit_report(report: Report, fmt: str, path: str | Path) -> Path:
    if fmt not in ("text", "csv"):
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    path.write_text(render_text(report) if fmt == "text" else render_csv(report))
    return path


# --- tables -------------------------------------------------------------------------


METRIC_COLUMNS = ["diesel_mwh", "gross_t", "captured_t", "net_t", "cost"]


def metrics_table(name: str, metrics: dict[str, MetricsReport]) -> Table:
    rows = [[label] + [getattr(m, c) for c in METRIC_COLUMNS] for label, m in metrics.items()]
    return Table(name, ["system"] + METRIC_COLUMNS, rows)


def emissions_table(metrics: dict[str, MetricsReport]) -> Table:
    rows = [[kind, m.diesel_mwh, m.gross_t, m.captured_t, m.net_t, m.cost,
             REFERENCE_NET_EMISSIONS_T.get(kind, float("nan"))]
            for kind, m in metrics.items()]
    return Table("emissions", ["system"] + METRIC_COLUMNS + ["reference_net_t"], rows)


def timing_table(case_label: str, comparison: Comparison) -> Table:
    """Per-step solve times in the case / clock / conventional / learned layout."""
    rows = [[case_label, clock, a, b] for clock, a, b in comparison.rows()]
    return Table("solution_time_s", ["case", "time", "conventional", "aci_ivp"], rows)


def comparison_summary(comparison: Comparison) -> Table:
    a, b = comparison.reference_metrics, comparison.candidate_metrics
    rows = [["mean_time_s", a.mean_time, b.mean_time],
            ["max_time_s", a.max_time, b.max_time],
            ["cost", a.cost, b.cost],
            ["net_t", a.net_t, b.net_t],
            ["fallback_steps", a.fallbacks, b.fallbacks],
            ["repaired_steps", a.repaired, b.repaired]]
    return Table("comparison", ["quantity", a.method, b.method], rows)


TRACE_COLUMNS = ["step", "status", "wind_power", "objective", "p_dg", "c_dg", "c_chi", "c_e",
                 "cost", "rounds", "flags", "step0_violation"]


def trace_table(trace: SimulationTrace) -> Table:
    tanks = sorted(trace.records[0].state_out.v_wt) if trace.records else []
    has_h2 = bool(trace.records) and trace.records[0].state_out.v_ht is not None
    cols = TRACE_COLUMNS + [f"V_wt.{k}" for k in tanks] + (["V_ht"] if has_h2 else [])
    rows = []
    for r in trace.records:
        row = [r.step, r.status, r.wind_power, r.objective, r.p_dg, r.c_dg, r.c_chi, r.c_e,
               r.cost, r.rounds, "|".join(r.flags) or "-", r.step0_violation]
        row += [r.state_out.v_wt[k] for k in tanks]
        if has_h2:
            row.append(r.state_out.v_ht)
        rows.append(row)
    return Table("trace", cols, rows)


def step_times_table(trace: SimulationTrace) -> Table:
    return Table("step_times_s", ["step", "solve_time"],
                 [[r.step, r.solve_time] for r in trace.records])
