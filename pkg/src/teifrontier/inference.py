"""Likelihood-ratio specification tests between nested translog fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .errors import NotNested, UnknownHypothesis
from .tobit import FitResult, OptimOptions, fit
from .translog import (
    DesignMatrix,
    LinearRestriction,
    ModelSpec,
    RestrictionSet,
    TermIndex,
    build_restrictions,
    restriction_rows,
)

log = logging.getLogger(__name__)

HYPOTHESES = {
    "CobbDouglas": "Cobb-Douglas Functional Form",
    "CRS": "Constant Returns to Scale",
    "NoTechChange": "No Technical Change",
}

NEGATIVE_SLACK = 1e-6


def chisq_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularised upper
    incomplete gamma function Q(df/2, x/2))."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if df < 1:
        raise ValueError("df must be a positive integer")
    return float(gammaincc(0.5 * df, 0.5 * x))


def hypothesis_restrictions(name: str, spec: ModelSpec, terms: TermIndex | None = None):
    """Restrictions of a named null hypothesis, in structural coordinates.

    Terms the model does not contain (the squared trend, dummies) are left out.
    """
    terms = terms or TermIndex.build(spec)
    names = spec.input_names
    if name == "CobbDouglas":
        keys = sorted({terms.pair_key(j, k) for j in names for k in names}, key=terms.index)
        keys += [f"{j}*y" for j in names] + ["y*y", "t*y", "t*t"]
        rows = [LinearRestriction.fix(k) for k in keys if k in terms]
    elif name == "CRS":
        rows = [LinearRestriction.fix("y", -1.0)]
        keys = [f"{j}*y" for j in names] + ["y*y", "t*y"]
        rows += [LinearRestriction.fix(k) for k in keys if k in terms]
    elif name == "NoTechChange":
        keys = ["t"] + [f"{j}*t" for j in names] + ["t*y", "t*t", "brexit", "covid"]
        rows = [LinearRestriction.fix(k) for k in keys if k in terms]
    else:
        raise UnknownHypothesis(f"unknown hypothesis {name!r}; expected one of {list(HYPOTHESES)}")
    return rows


def restricted_set(base: RestrictionSet, rows, terms: TermIndex) -> RestrictionSet:
    R, r = restriction_rows(rows, terms)
    labels = [
        " + ".join(k if w == 1.0 else f"{w:g}*{k}" for k, w in lr.weights) + f" = {lr.rhs:g}"
        for lr in rows
    ]
    return base.extended(R, r, labels)


def degrees_of_freedom(base: RestrictionSet, rows, terms: TermIndex) -> int:
    return restricted_set(base, rows, terms).rank - base.rank


@dataclass(frozen=True)
class LrTestResult:
    name: str
    stat: float
    df: int
    p_value: float
    loglik_unrestricted: float
    loglik_restricted: float
    level: float = 0.05

    @property
    def reject(self) -> bool:
        return self.p_value < self.level

    @property
    def decision(self) -> str:
        return "Reject" if self.reject else "Fail to reject"

    def to_dict(self) -> dict:
        return {
            "null_hypothesis": self.name,
            "statistic": self.stat,
            "df": self.df,
            "p_value": self.p_value,
            "decision": self.decision,
            "loglik_unrestricted": self.loglik_unrestricted,
            "loglik_restricted": self.loglik_restricted,
        }


def lr_test(fit_u: FitResult, fit_r: FitResult, df: int | None = None, name: str = "") -> LrTestResult:
    """LR statistic 2 (loglik_u - loglik_r) against chi-square(df).

    ``df`` defaults to the rank difference of the two restriction sets.
    Raw statistics in (-1e-6, 0) are floored at zero; anything more
    negative signals an optimiser failure and raises NotNested.
    """
    ru, rr = fit_u.restrictions, fit_r.restrictions
    if fit_u.terms.keys != fit_r.terms.keys:
        raise NotNested("fits use different coefficient terms")
    if not (rr.contains(ru) and rr.rank > ru.rank):
        raise NotNested("restricted fit does not strictly contain the unrestricted restrictions")
    if df is None:
        df = rr.rank - ru.rank
    if df < 1:
        raise ValueError("df must be at least 1")
    return _lr(fit_u.loglik, fit_r.loglik, df, name)


def _lr(ll_u, ll_r, df, name=""):
    stat = 2.0 * (ll_u - ll_r)
    if stat < 0:
        if stat < -NEGATIVE_SLACK:
            raise NotNested(
                f"restricted log-likelihood exceeds unrestricted by {-stat / 2:.3g}"
            )
        log.warning("LR statistic %.3g within numerical slack; set to 0", stat)
        stat = 0.0
    p = 0.0 if np.isinf(stat) else chisq_sf(stat, df)
    return LrTestResult(name, float(stat), int(df), p, float(ll_u), float(ll_r))


def specification_tests(
    design: DesignMatrix,
    unrestricted: FitResult | None = None,
    hypotheses=tuple(HYPOTHESES),
    options: OptimOptions | None = None,
) -> tuple[FitResult, list[LrTestResult], dict[str, FitResult]]:
    """Fit the maintained model and each restricted model; test each null."""
    base = build_restrictions(design.spec, design.terms)
    fit_u = unrestricted or fit(design, base, options)
    results, fits = [], {}
    for name in hypotheses:
        rows = hypothesis_restrictions(name, design.spec, design.terms)
        rs = restricted_set(fit_u.restrictions, rows, design.terms)
        fit_r = fit(design, rs, options)
        fits[name] = fit_r
        results.append(lr_test(fit_u, fit_r, name=HYPOTHESES[name]))
    return fit_u, results, fits
