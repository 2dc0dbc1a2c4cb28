"""Trace CSV files, run summaries and plot-script generation.

CSV layout
----------
Comment lines starting with ``#`` describe the run and every column, then
one header row, then one row per sample.  Columns are ``t`` followed by one
block per agent ``i`` (1-based)::

    z{i}_{j}        regulated output components, j = 1..q_i
    e{i}_{j}        error-feedback components, j = 1..q_i
    werr{i}         |w_i - w_0|
    serr{i}         |S_i - S_0|_F
    lam{i}_{l}_re   eigenvalue estimate l, real part, l = 1..k
    lam{i}_{l}_im   eigenvalue estimate l, imaginary part

Numbers are written with ``repr``-exact ``%.17g`` so identical runs give
identical bytes.
"""

from __future__ import annotations

import csv
import json
import textwrap
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .verification import exp_rate_fit

__all__ = [
    "SummaryReport",
    "AgentSummary",
    "trace_columns",
    "write_trace_csv",
    "read_trace_csv",
    "summarize",
    "emit_plot_script",
]

_FMT = "%.17g"


def trace_columns(dims, k):
    """Column names for agents with ``dims[i] = (n, m, q, nxi)`` and ``k`` estimates each."""
    cols = ["t"]
    for i, (_, _, q, _) in enumerate(dims, start=1):
        cols += [f"z{i}_{j}" for j in range(1, q + 1)]
        cols += [f"e{i}_{j}" for j in range(1, q + 1)]
        cols += [f"werr{i}", f"serr{i}"]
        for l in range(1, k + 1):
            cols += [f"lam{i}_{l}_re", f"lam{i}_{l}_im"]
    return cols


def _column_docs(dims, k):
    lines = ["t: time [s]"]
    for i, (_, _, q, _) in enumerate(dims, start=1):
        zr = f"z{i}_1" if q == 1 else f"z{i}_1..z{i}_{q}"
        er = f"e{i}_1" if q == 1 else f"e{i}_1..e{i}_{q}"
        lines.append(f"{zr}: regulated output of agent {i} (uses w0, reporting only)")
        lines.append(f"{er}: error feedback of agent {i} (uses its own w)")
        lines.append(f"werr{i}: |w{i} - w0|")
        lines.append(f"serr{i}: Frobenius norm of S{i} - S0")
        if k:
            lines.append(f"lam{i}_<l>_re, lam{i}_<l>_im for l = 1..{k}: eigenvalue estimates of agent {i}")
    return lines


def _trace_matrix(trace, decimation):
    sel = slice(None, None, decimation)
    blocks = [trace.t[sel, None]]
    for i in range(trace.N):
        lam = trace.lam[sel, i]
        parts = np.empty((lam.shape[0], 2 * lam.shape[1]))
        parts[:, 0::2] = lam.real
        parts[:, 1::2] = lam.imag
        blocks += [
            trace.z_i(i)[sel],
            trace.e_i(i)[sel],
            trace.w_err(i)[sel, None],
            trace.S_err[sel, i, None],
            parts,
        ]
    return np.hstack(blocks)


def write_trace_csv(trace, path, decimation=1):
    """Write ``trace`` to ``path`` keeping every ``decimation``-th sample."""
    if decimation < 1:
        raise ValueError("decimation must be a positive integer")
    k = trace.lam.shape[2]
    cols = trace_columns(trace.dims, k)
    path = Path(path)
    with path.open("w", newline="") as fh:
        for key in ("seed", "dt", "t_final", "integrator", "resynth_margin", "draw_order", "k"):
            if key in trace.header:
                fh.write(f"# {key}: {trace.header[key]}\n")
        fh.write(f"# decimation: {decimation}\n")
        for line in _column_docs(trace.dims, k):
            fh.write(f"# {line}\n")
        fh.write(",".join(cols) + "\n")
        if trace.t.size:
            np.savetxt(fh, _trace_matrix(trace, decimation), fmt=_FMT, delimiter=",")
    return path


def read_trace_csv(path):
    """Return ``(columns, data)`` from a file written by :func:`write_trace_csv`."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no header row")
    cols = next(csv.reader([lines[0]]))
    rows = [list(map(float, ln.split(","))) for ln in lines[1:] if ln.strip()]
    data = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    return cols, data


@dataclass
class AgentSummary:
    agent: int
    final_z: float
    final_w_err: float
    final_S_err: float
    final_lam_err: float
    z_slope: float
    z_r2: float
    w_slope: float
    w_r2: float
    resynth_count: int


@dataclass
class SummaryReport:
    audit: dict
    agents: list = field(default_factory=list)
    t_final: float | None = None

    def to_dict(self):
        return {"audit": self.audit, "t_final": self.t_final, "agents": [asdict(a) for a in self.agents]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True)

    def to_text(self):
        out = [f"audit: {'pass' if self.audit['passed'] else 'FAIL ' + ', '.join(self.audit['failed'])}"]
        if self.agents:
            out.append(f"t_final = {self.t_final:g}")
            out.append("agent  |z|        |w-w0|     |S-S0|_F   lam err    z slope   R^2    resynth")
            for a in self.agents:
                out.append(
                    f"{a.agent:5d}  {a.final_z:9.2e}  {a.final_w_err:9.2e}  {a.final_S_err:9.2e}  "
                    f"{a.final_lam_err:9.2e}  {a.z_slope:8.3f}  {a.z_r2:5.3f}  {a.resynth_count:7d}"
                )
        return "\n".join(out)


def _fit(t, v):
    try:
        f = exp_rate_fit(t, v)
    except ValueError:
        return float("nan"), float("nan")
    return f.slope, f.r_squared


def summarize(trace, audit) -> SummaryReport:
    """Summary of a run; with ``trace=None`` only the audit is reported."""
    report = SummaryReport(audit=audit.to_dict())
    if trace is None or trace.t.size == 0:
        return report
    report.t_final = float(trace.t[-1])
    counts = trace.resynth_counts()
    for i in range(trace.N):
        z, w = trace.z_norm(i), trace.w_err(i)
        zs, zr = _fit(trace.t, z)
        ws, wr = _fit(trace.t, w)
        report.agents.append(AgentSummary(
            agent=i + 1,
            final_z=float(z[-1]),
            final_w_err=float(w[-1]),
            final_S_err=float(trace.S_err[-1, i]),
            final_lam_err=float(trace.lam_err(i)[-1]),
            z_slope=zs, z_r2=zr, w_slope=ws, w_r2=wr,
            resynth_count=counts[i],
        ))
    return report


_PLOT_TEMPLATE = '''\
"""Plot a regsim trace: synchronization error and regulated outputs versus time.

Generated for {trace_name}; needs numpy and matplotlib.
"""
import sys

import matplotlib.pyplot as plt
import numpy as np

TRACE = {trace_path!r}
W_COLUMNS = {w_cols!r}
Z_COLUMNS = {z_cols!r}


def load(path):
    with open(path) as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    cols = rows[0].strip().split(",")
    data = np.loadtxt(rows[1:], delimiter=",", ndmin=2)
    return cols, data


def main(path=TRACE):
    cols, data = load(path)
    missing = [c for c in ["t"] + W_COLUMNS + Z_COLUMNS if c not in cols]
    if missing:
        sys.exit(f"columns missing from {{path}}: {{missing}}")
    t = data[:, cols.index("t")]
    fig, (ax_w, ax_z) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
    for c in W_COLUMNS:
        ax_w.semilogy(t, np.maximum(data[:, cols.index(c)], 1e-16), label=c)
    ax_w.set_ylabel("|w_i - w_0|")
    ax_w.legend(fontsize="small")
    for c in Z_COLUMNS:
        ax_z.plot(t, data[:, cols.index(c)], label=c)
    ax_z.set_ylabel("z_i")
    ax_z.set_xlabel("t [s]")
    ax_z.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)


if __name__ == "__main__":
    main(*sys.argv[1:])
'''


def emit_plot_script(trace_path, out_path):
    """Write a standalone matplotlib script for the CSV at ``trace_path``.

    The script only names columns that exist in that file's header.
    """
    cols, _ = read_trace_csv(trace_path)
    w_cols = [c for c in cols if c.startswith("werr")]
    z_cols = [c for c in cols if c.startswith("z")]
    src = _PLOT_TEMPLATE.format(
        trace_name=Path(trace_path).name,
        trace_path=str(trace_path),
        w_cols=w_cols,
        z_cols=z_cols,
    )
    out_path = Path(out_path)
    out_path.write_text(textwrap.dedent(src))
    return out_path
