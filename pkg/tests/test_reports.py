import pytest

from w2h.reports import (Report, Table, comparison_summary, emissions_table, emit_report,
                         metrics_table, render_csv, render_text, timing_table, trace_table)
from w2h.simulator import CONVENTIONAL, compare_methods, compute_metrics

from helpers import TIGHT, bundled


@pytest.fixture(scope="module")
def comparison():
    case, scen = bundled("toy3")
    return compare_methods(case, scen, None, 3, 3, TIGHT, methods=(CONVENTIONAL, CONVENTIONAL))


def _report(tables):
    return Report("test", "abc123", "def456", tables, {"steps": 3, "ratio": 0.5})


def test_header_and_notes():
    text = render_text(_report([]))
    lines = text.splitlines()
    assert lines[0].startswith("# w2h ")
    assert lines[1:4] == ["# report: test", "# case: abc123", "# config: def456"]
    assert "# ratio: 0.500000" in lines and "# steps: 3" in lines


def test_fixed_precision_cells():
    table = Table("t", ["a", "b", "c", "d"], [[1, -0.0, 1.23456789, True]])
    text = render_text(_report([table]))
    assert "0.000000" in text and "-0.000000" not in text
    assert "1.234568" in text
    csv_text = render_csv(_report([table]))
    assert "# table: t\na,b,c,d\n1,0.000000,1.234568,1\n" in csv_text


def test_reports_are_byte_stable(comparison, tmp_path):
    trace = comparison.reference
    metrics = {"conventional": compute_metrics(trace)}
    tables = [trace_table(trace), metrics_table("metrics", metrics),
              emissions_table({"w2h": metrics["conventional"]}), comparison_summary(comparison)]
    for fmt in ("text", "csv"):
        a = emit_report(_report(tables), fmt, tmp_path / f"a.{fmt}").read_bytes()
        b = emit_report(_report(tables), fmt, tmp_path / f"b.{fmt}").read_bytes()
        assert a == b
    with pytest.raises(ValueError):
        emit_report(_report(tables), "xml", tmp_path / "c")


def test_trace_table_columns(comparison):
    table = trace_table(comparison.reference)
    assert table.columns[:3] == ["step", "status", "wind_power"]
    assert table.columns[-1] == "V_ht"
    assert len(table.rows) == 3


def test_timing_table_layout(comparison):
    table = timing_table("toy3", comparison)
    assert table.columns == ["case", "time", "conventional", "aci_ivp"]
    assert [r[1] for r in table.rows] == ["00:05", "00:10", "00:15"]


def test_emissions_table_has_reference_column(comparison):
    m = compute_metrics(comparison.reference)
    table = emissions_table({"diesel-only": m})
    assert table.columns[-1] == "reference_net_t"
    assert table.rows[0][-1] == 79.53
