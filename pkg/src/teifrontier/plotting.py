"""SVG charts drawn from the CSV artifacts.

Charts only read the CSV files; the rows a chart was drawn from are
embedded verbatim in an XML comment after the SVG header, so a chart can
be checked against its source without parsing paths.
"""

from __future__ import annotations

import io
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
from matplotlib.figure import Figure  # noqa: E402

from .report import read_csv_columns  # noqa: E402

RC = {
    "svg.hashsalt": "teifrontier",
    "svg.fonttype": "path",
    "font.size": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

# DTC long dash, ETC dotted, SE short dash, STC thin solid, TFPG thick solid
DECOMPOSITION_STYLE = {
    "dtc": dict(linestyle=(0, (8, 3)), color="0.2", lw=1.0, label="DTC"),
    "etc": dict(linestyle=":", color="0.2", lw=1.2, label="ETC"),
    "se": dict(linestyle=(0, (3, 3)), color="tab:blue", lw=1.0, label="SE"),
    "stc": dict(linestyle="-", color="0.6", lw=0.8, label="STC"),
    "tfpg": dict(linestyle="-", color="black", lw=1.6, label="TFPG"),
}


def _float(s):
    return float(s) if s not in ("", None) else float("nan")


def _grid(n):
    ncols = min(4, n) or 1
    nrows = -(-n // ncols) if n else 1
    return nrows, ncols


def _save(fig: Figure, path, columns, rows) -> None:
    buf = io.StringIO()
    with matplotlib.rc_context(RC):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    svg = buf.getvalue()
    lines = [",".join(columns)] + [",".join(r[c] for c in columns) for r in rows]
    comment = "<!-- data\n" + "\n".join(lines).replace("--", "- -") + "\n-->\n"
    head, sep, rest = svg.partition("?>\n")
    Path(path).write_text(head + sep + comment + rest if sep else comment + svg, encoding="utf-8")


def embedded_data(svg_path) -> list[list[str]]:
    """Rows embedded in a chart by this module (header first)."""
    text = Path(svg_path).read_text(encoding="utf-8")
    start = text.index("<!-- data\n") + len("<!-- data\n")
    block = text[start : text.index("\n-->", start)]
    return [line.split(",") for line in block.split("\n")]


def tei_chart(efficiency_csv, out_svg, highlight_unitary: bool = True) -> None:
    """TEI time series, one line per firm; indices at or above one marked."""
    _, rows = read_csv_columns(efficiency_csv)
    series = defaultdict(list)
    for r in rows:
        series[r["firm"]].append((int(r["year"]), _float(r["tei"])))
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(7.5, 4.5))
        ax = fig.add_subplot()
        for firm, pts in series.items():
            years, tei = zip(*pts)
            ax.plot(years, tei, lw=1.0, marker="o", ms=2.5, label=firm)
            if highlight_unitary:
                top = [(y, v) for y, v in pts if v >= 1.0]
                if top:
                    ax.plot(*zip(*top), ls="none", marker="o", ms=5, color="red")
        ax.set_xlabel("Year")
        ax.set_ylabel("Technical efficiency index")
        ax.legend(ncol=2, fontsize=6, loc="center left", bbox_to_anchor=(1.0, 0.5))
        fig.tight_layout()
    _save(fig, out_svg, ("firm", "year", "tei"), rows)


def elasticity_chart(efficiency_csv, out_svg) -> None:
    """One panel per variable with the TEI elasticity of every firm over time."""
    columns, rows = read_csv_columns(efficiency_csv)
    cols = [c for c in columns if c.startswith("elasticity_")]
    nrows, ncols = _grid(len(cols))
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(3.2 * ncols, 2.6 * nrows))
        for i, col in enumerate(cols):
            ax = fig.add_subplot(nrows, ncols, i + 1)
            series = defaultdict(list)
            for r in rows:
                series[r["firm"]].append((int(r["year"]), _float(r[col])))
            for firm, pts in series.items():
                ax.plot(*zip(*pts), lw=0.8)
            ax.set_title(col.removeprefix("elasticity_"))
        fig.tight_layout()
    _save(fig, out_svg, ("firm", "year", *cols), rows)


def tfpg_chart(tfpg_csv, out_svg) -> None:
    """Per-firm TFP growth decomposition panels (DTC, ETC, SE, STC, TFPG)."""
    _, rows = read_csv_columns(tfpg_csv)
    by_firm = defaultdict(list)
    for r in rows:
        by_firm[r["firm"]].append(r)
    nrows, ncols = _grid(len(by_firm))
    with matplotlib.rc_context(RC):
        fig = Figure(figsize=(3.0 * ncols, 2.2 * nrows + 0.4))
        for i, (firm, rs) in enumerate(by_firm.items()):
            ax = fig.add_subplot(nrows, ncols, i + 1)
            years = [int(r["year"]) for r in rs]
            for key, style in DECOMPOSITION_STYLE.items():
                ax.plot(years, [_float(r[key]) for r in rs], **style)
            ax.set_title(firm)
        handles, labels = fig.axes[0].get_legend_handles_labels() if fig.axes else ([], [])
        fig.legend(handles, labels, loc="lower center", ncol=5)
        fig.tight_layout(rect=(0, 0.06, 1, 1))
    _save(fig, out_svg, ("firm", "year", *DECOMPOSITION_STYLE), rows)
