import ast
import dataclasses

import numpy as np
import pytest

from regsim.engine import simulate
from regsim.output import emit_plot_script, read_trace_csv, summarize, trace_columns, write_trace_csv
from regsim.scenario import section5_scenario
from regsim.verification import audit_assumptions


@pytest.fixture(scope="module")
def short_run():
    sc = section5_scenario(t_final=0.2)
    return sc, simulate(sc)


def test_columns_layout():
    cols = trace_columns([(2, 1, 1, 4), (2, 1, 2, 6)], 2)
    assert cols[:8] == ["t", "z1_1", "e1_1", "werr1", "serr1", "lam1_1_re", "lam1_1_im", "lam1_2_re"]
    assert "z2_2" in cols and "e2_2" in cols
    # 1 + per agent (2q + 2 + 2k)
    assert len(cols) == 1 + (2 + 2 + 4) + (4 + 2 + 4)


def test_csv_round_trip_and_decimation(short_run, tmp_path):
    _, tr = short_run
    p = write_trace_csv(tr, tmp_path / "t.csv", decimation=10)
    cols, data = read_trace_csv(p)
    assert cols == trace_columns(tr.dims, 2)
    assert data.shape == (21, len(cols))
    np.testing.assert_allclose(np.diff(data[:, 0]), 1e-2, atol=1e-12)
    np.testing.assert_array_equal(data[:, cols.index("z2_1")], tr.z_i(1)[::10, 0])
    np.testing.assert_array_equal(data[:, cols.index("werr3")], tr.w_err(2)[::10])
    np.testing.assert_array_equal(data[:, cols.index("lam4_2_im")], tr.lam[::10, 3, 1].imag)
    text = p.read_text()
    assert text.startswith("# seed: 0\n")
    assert "wall" not in text


def test_empty_trace_writes_header_only(short_run, tmp_path):
    _, tr = short_run
    empty = dataclasses.replace(
        tr, t=tr.t[:0], w=tr.w[:0], S_err=tr.S_err[:0], mu=tr.mu[:0], lam=tr.lam[:0],
        z=tr.z[:0], e=tr.e[:0], u=tr.u[:0], segment=tr.segment[:0])
    p = write_trace_csv(empty, tmp_path / "e.csv")
    cols, data = read_trace_csv(p)
    assert data.shape == (0, len(cols))
    lines = [ln for ln in p.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1


def test_csv_is_byte_identical_across_runs(tmp_path):
    sc = section5_scenario(t_final=0.3)
    a = write_trace_csv(simulate(sc), tmp_path / "a.csv")
    b = write_trace_csv(simulate(sc), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_summary(short_run):
    sc, tr = short_run
    rep = summarize(tr, audit_assumptions(sc))
    assert len(rep.agents) == 4 and rep.t_final == pytest.approx(0.2)
    assert rep.agents[0].final_z == pytest.approx(tr.z_norm(0)[-1])
    assert rep.agents[2].resynth_count == tr.resynth_counts()[2]
    assert '"passed": true' in rep.to_json()
    assert "audit: pass" in rep.to_text()


def test_audit_only_summary():
    rep = summarize(None, audit_assumptions(section5_scenario()))
    assert rep.agents == [] and rep.t_final is None
    assert rep.to_text() == "audit: pass"


def test_plot_script_uses_only_csv_columns(short_run, tmp_path):
    _, tr = short_run
    csv_path = write_trace_csv(tr, tmp_path / "t.csv")
    script = emit_plot_script(csv_path, tmp_path / "plot.py")
    src = script.read_text()
    tree = ast.parse(src)
    names = {}
    for node in tree.body:
        if isinstance(node, ast.Assign) and isinstance(node.targets[0], ast.Name):
            names[node.targets[0].id] = ast.literal_eval(node.value)
    cols, _ = read_trace_csv(csv_path)
    assert names["W_COLUMNS"] == [f"werr{i}" for i in range(1, 5)]
    assert set(names["W_COLUMNS"] + names["Z_COLUMNS"]) <= set(cols)
    assert names["TRACE"] == str(csv_path)
