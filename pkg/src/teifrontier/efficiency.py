"""Post-estimation quantities: technical efficiency indices, elasticities,
returns to scale, technical change and the TFP growth decomposition."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScale
from .panel import TransformedObservation
from .tobit import CoefficientSet, FitResult, predict_linear
from .translog import DesignMatrix

SCALE_EPS = 1e-10


def _coefs(fit) -> CoefficientSet:
    return fit.coefficients if isinstance(fit, FitResult) else fit


@dataclass(frozen=True)
class EfficiencyRecord:
    firm_id: str
    year: int
    fitted_ln_distance: float
    tei: float
    clamped: bool
    elasticity_inputs: dict[str, float]
    elasticity_output: float
    eps_Dy: float
    rts: float


@dataclass(frozen=True)
class TFPGRecord:
    firm_id: str
    year: int
    dtc: float
    etc: float
    stc: float
    tc: float
    se: float | None = None
    tfpg: float | None = None
    delta_ln_y: float | None = None
    gap: bool = False


def distance_gradient(fit, obs: TransformedObservation) -> tuple[dict[str, float], float]:
    """Partial derivatives of ln D with respect to each ln x_j and ln y."""
    c = _coefs(fit)
    terms = c.terms
    names = terms.input_names
    lx, ly, t = obs.ln_inputs, obs.ln_output, obs.trend
    d_inputs = {}
    for j in names:
        v = c[j] + c[f"{j}*y"] * ly + c[f"{j}*t"] * t
        for k in names:
            v += c[terms.pair_key(j, k)] * lx[k]
        d_inputs[j] = v
    d_output = c["y"] + c["y*y"] * ly + c["t*y"] * t
    d_output += sum(c[f"{j}*y"] * lx[j] for j in names)
    return d_inputs, d_output


def elasticities(fit, obs: TransformedObservation) -> tuple[dict[str, float], float, float]:
    """TEI elasticities w.r.t. inputs and output, and returns to scale.

    The output elasticity equals eps_Dy = -dlnD/dln y and RTS = 1/eps_Dy.
    Raises DegenerateScale when |eps_Dy| < 1e-10.
    """
    d_inputs, d_output = distance_gradient(fit, obs)
    eps = -d_output
    if abs(eps) < SCALE_EPS:
        raise DegenerateScale(f"eps_Dy = {eps:.3g}; returns to scale undefined")
    return {j: -v for j, v in d_inputs.items()}, eps, 1.0 / eps


def technical_change(fit, obs: TransformedObservation) -> tuple[float, float, float, float]:
    """(DTC, ETC, STC, TC) at one observation; TC = dlnD/dt."""
    c = _coefs(fit)
    t = obs.trend
    dtc = c["t"] + c.get("t*t") * t
    etc = math.fsum(c[f"{j}*t"] * obs.ln_inputs[j] for j in c.terms.input_names)
    stc = c["t*y"] * obs.ln_output
    return dtc, etc, stc, dtc + etc + stc


def compute_tei(fit, design: DesignMatrix, clamp: bool = False) -> list[EfficiencyRecord]:
    """TEI = exp(-fitted ln D) per observation, with elasticities.

    Values above one are reported as computed unless ``clamp``; clamped
    records report 1 and carry the flag.
    """
    mu = predict_linear(_coefs(fit), design)
    out = []
    for obs, m in zip(design.observations, mu):
        tei = math.exp(-m)
        clamped = clamp and tei > 1.0
        d_inputs, d_output = distance_gradient(fit, obs)
        eps = -d_output
        out.append(
            EfficiencyRecord(
                firm_id=obs.firm_id,
                year=obs.year,
                fitted_ln_distance=float(m),
                tei=1.0 if clamped else tei,
                clamped=clamped,
                elasticity_inputs={j: -v for j, v in d_inputs.items()},
                elasticity_output=eps,
                eps_Dy=eps,
                rts=1.0 / eps if abs(eps) >= SCALE_EPS else math.nan,
            )
        )
    return out


def tfpg_decompose(fit, observations: Iterable[TransformedObservation]) -> list[TFPGRecord]:
    """DTC/ETC/STC/SE decomposition of TFP growth per firm-year.

    SE uses the current-period eps_Dy and the log output change from the
    firm's previous available year; records after a gap of more than one
    year are flagged. The first year of each firm has no SE or TFPG.
    """
    obs = sorted(observations, key=lambda o: (o.firm_id, o.year))
    out = []
    prev = None
    for o in obs:
        dtc, etc, stc, tc = technical_change(fit, o)
        if prev is None or prev.firm_id != o.firm_id:
            out.append(TFPGRecord(o.firm_id, o.year, dtc, etc, stc, tc))
        else:
            _, d_output = distance_gradient(fit, o)
            eps = -d_output
            dly = o.ln_output - prev.ln_output
            se = (1.0 - eps) * dly
            out.append(
                TFPGRecord(
                    o.firm_id, o.year, dtc, etc, stc, tc,
                    se=se, tfpg=tc + se, delta_ln_y=dly, gap=o.year - prev.year > 1,
                )
            )
        prev = o
    return out


def firm_average_tei(records: Sequence[EfficiencyRecord]) -> dict[str, float]:
    groups: dict[str, list[float]] = {}
    for r in records:
        groups.setdefault(r.firm_id, []).append(r.tei)
    return {f: math.fsum(v) / len(v) for f, v in groups.items()}


def average_elasticities(records: Sequence[EfficiencyRecord]) -> dict[str, dict[str, float]]:
    """Mean elasticities over all observations and as a mean of firm means."""
    names = list(records[0].elasticity_inputs) if records else []
    cols = names + ["output"]

    def value(r, c):
        return r.elasticity_output if c == "output" else r.elasticity_inputs[c]

    pooled = {c: float(np.mean([value(r, c) for r in records])) for c in cols}
    by_firm: dict[str, list[EfficiencyRecord]] = {}
    for r in records:
        by_firm.setdefault(r.firm_id, []).append(r)
    firm_means = {
        c: float(np.mean([np.mean([value(r, c) for r in rs]) for rs in by_firm.values()]))
        for c in cols
    }
    return {"observation_weighted": pooled, "firm_then_time": firm_means}


def se_tfpg_correlation(records: Sequence[TFPGRecord]) -> dict[str, float | None]:
    """Per-firm correlation between the SE component and TFPG."""
    groups: dict[str, list[tuple[float, float]]] = {}
    for r in records:
        if r.se is not None:
            groups.setdefault(r.firm_id, []).append((r.se, r.tfpg))
    out = {}
    for firm, pairs in groups.items():
        a = np.array(pairs)
        if len(a) < 3 or np.std(a[:, 0]) == 0 or np.std(a[:, 1]) == 0:
            out[firm] = None
        else:
            out[firm] = float(np.corrcoef(a[:, 0], a[:, 1])[0, 1])
    return out
