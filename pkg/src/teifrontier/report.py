"""Delimited and JSON artifacts, text tables and the run manifest.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections.abc import Sequence
from pathlib import Path

from . import __version__
from .efficiency import EfficiencyRecord, TFPGRecord
from .inference import LrTestResult
from .tobit import FitResult

TFPG_COLUMNS = ("firm", "year", "dtc", "etc", "stc", "tc", "se", "tfpg", "delta_ln_y", "gap")


def efficiency_columns(input_names: Sequence[str]) -> tuple[str, ...]:
    return (
        "firm", "year", "fitted_ln_distance", "tei", "clamped",
        *(f"elasticity_{j}" for j in input_names),
        "elasticity_output", "eps_dy", "rts",
    )


def _f(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def write_efficiency_csv(records: Sequence[EfficiencyRecord], path) -> None:
    names = list(records[0].elasticity_inputs) if records else []
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(efficiency_columns(names))
        for r in records:
            w.writerow(
                [r.firm_id, r.year, _f(r.fitted_ln_distance), _f(r.tei), int(r.clamped)]
                + [_f(r.elasticity_inputs[j]) for j in names]
                + [_f(r.elasticity_output), _f(r.eps_Dy), _f(r.rts)]
            )


def write_tfpg_csv(records: Sequence[TFPGRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TFPG_COLUMNS)
        for r in records:
            w.writerow(
                [r.firm_id, r.year, _f(r.dtc), _f(r.etc), _f(r.stc), _f(r.tc),
                 _f(r.se), _f(r.tfpg), _f(r.delta_ln_y), int(r.gap)]
            )


def read_csv_columns(path) -> tuple[list[str], list[dict[str, str]]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _pfmt(p) -> str:
    if p is None or not math.isfinite(p):
        return "."
    return "<.0001" if p < 1e-4 else f"{p:.4f}"


def coefficient_table(fit: FitResult) -> str:
    """Parameter / Coefficient / P-Value rows in term order."""
    rows = [("Parameter", "Coefficient", "P-Value")]
    for label, b, p in fit.table():
        rows.append((label, f"{b:.6f}", _pfmt(p)))
    footer = [
        "",
        f"Log-likelihood: {fit.loglik:.6f}" if math.isfinite(fit.loglik) else "Log-likelihood: +inf (perfect fit)",
        f"Observations: {fit.n_obs} ({fit.n_censored} censored)",
        f"Converged: {'yes' if fit.converged else 'NO'} after {fit.iterations} iterations "
        f"(max |gradient| {fit.gradient_norm:.2e})",
    ]
    if not fit.vcov_available:
        footer.append("Covariance unavailable: " + fit.message)
    return _render(rows) + "\n".join(footer) + "\n"


def test_table(results: Sequence[LrTestResult]) -> str:
    rows = [("Null hypothesis", "Statistic", "df", "Pr>Chi-square", "Decision")]
    for i, r in enumerate(results, start=1):
        rows.append((f"Test {i}: {r.name}", f"{r.stat:.2f}", str(r.df), _pfmt(r.p_value), r.decision))
    return _render(rows)


def _render(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for n, r in enumerate(rows):
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(command: str, settings: dict, input_path=None) -> dict:
    return {
        "tool": "teifrontier",
        "version": __version__,
        "command": command,
        "input": None if input_path is None else str(input_path),
        "input_sha256": None if input_path is None else file_sha256(input_path),
        "settings": settings,
    }
