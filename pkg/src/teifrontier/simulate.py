"""Synthetic panels with a known translog frontier, and a Monte Carlo
parameter-recovery harness.

Random numbers come from numpy's PCG64 bit generator. Replication ``i`` of
a Monte Carlo run with seed ``s`` uses the 64-bit seed built from the first
two 32-bit words of ``SeedSequence(entropy=s, spawn_key=(i,))``; both
algorithms are fully specified and platform independent.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import reference
from .errors import InvalidTruth
from .panel import (
    PanelDataset,
    PanelObservation,
    TransformedObservation,
    brexit_rule,
    covid_rule,
    transform,
)
from .tobit import CoefficientSet, fit
from .translog import ModelSpec, TermIndex, build_design, build_restrictions, expand_row

log = logging.getLogger(__name__)

# log-ranges of the raw variables, roughly +-0.5 around the sample means
# of the airline data
DEFAULT_INPUT_LOG_RANGES = {
    "K": (6.87, 7.87),
    "L": (10.46, 11.46),
    "E": (7.10, 8.10),
}
DEFAULT_OUTPUT_LOG_RANGE = (9.33, 10.33)


@dataclass(frozen=True)
class SimConfig:
    n_firms: int = 19
    n_years: int = 10
    start_year: int = 2012
    true_coefficients: CoefficientSet | None = None
    noise_sigma: float = 0.05
    het_alpha: Mapping[str, float] | None = None
    input_log_ranges: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_INPUT_LOG_RANGES)
    )
    output_log_range: tuple[float, float] = DEFAULT_OUTPUT_LOG_RANGE
    seed: int = 0
    censor_target: float | None = 0.05
    european_firms: tuple[str, ...] | None = None
    brexit_years: tuple[int, ...] = (2017, 2018, 2019)
    covid_years: tuple[int, ...] | None = None
    spec: ModelSpec = field(default_factory=lambda: ModelSpec(heteroskedastic=True))
    firm_effect_scale: float = 0.5

    @property
    def firms(self) -> tuple[str, ...]:
        return reference.default_firms(self.n_firms)

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(range(self.start_year, self.start_year + self.n_years))

    def resolved_covid_years(self) -> tuple[int, ...]:
        if self.covid_years is not None:
            return tuple(self.covid_years)
        return self.years[-2:]

    def resolved_european_firms(self) -> tuple[str, ...]:
        if self.european_firms is not None:
            return tuple(self.european_firms)
        # a few firms stand in for the European carriers
        return self.firms[1:4]

    def truth(self) -> CoefficientSet:
        """Configured truth, or the published airline estimates with firm
        effects shrunk by ``firm_effect_scale`` (the full published spread
        pushes mean load factors below 0.6 under independent draws)."""
        if self.true_coefficients is not None:
            return self.true_coefficients
        return reference.airline_coefficients(
            self.firms, self.spec, firm_effect_scale=self.firm_effect_scale
        )


@dataclass(frozen=True)
class SimulatedPanel:
    dataset: PanelDataset
    transformed: tuple[TransformedObservation, ...]
    coefficients: CoefficientSet
    frontier_ln_distance: np.ndarray
    latent_ln_distance: np.ndarray
    true_tei: np.ndarray
    censored: np.ndarray

    def rules(self, cfg: SimConfig):
        return (
            brexit_rule(cfg.resolved_european_firms(), cfg.brexit_years),
            covid_rule(cfg.resolved_covid_years()),
        )


def _check_truth(coefs: CoefficientSet, cfg: SimConfig) -> None:
    expected = TermIndex.build(cfg.spec, cfg.firms)
    if coefs.terms.keys != expected.keys:
        raise InvalidTruth("true coefficients do not match the model terms")
    rs = build_restrictions(cfg.spec, coefs.terms)
    if rs.residual(coefs.beta) > 1e-10:
        raise InvalidTruth(
            f"true coefficients violate homogeneity by {rs.residual(coefs.beta):.3g}"
        )


def generate(cfg: SimConfig) -> SimulatedPanel:
    """Draw a panel from the translog frontier plus normal noise.

    Inputs and output are log-uniform on the configured ranges. When
    ``censor_target`` is set the constant of the truth is shifted so that
    that fraction of latent ln D values is at or below zero; the returned
    ``coefficients`` carry the shifted constant.
    """
    truth = cfg.truth()
    _check_truth(truth, cfg)
    spec = cfg.spec
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    firms, years = cfg.firms, cfg.years
    n = len(firms) * len(years)
    ln_x = {
        j: rng.uniform(*cfg.input_log_ranges[j], size=n) for j in spec.input_names
    }
    ln_y = rng.uniform(*cfg.output_log_range, size=n)
    z = rng.standard_normal(n)

    keys = [(f, yr) for f in firms for yr in years]
    draft = PanelDataset.from_observations(
        (
            PanelObservation(f, yr, 0.5, math.exp(ln_y[i]), {j: math.exp(ln_x[j][i]) for j in spec.input_names})
            for i, (f, yr) in enumerate(keys)
        ),
        spec.input_names,
    )
    brexit, covid = brexit_rule(cfg.resolved_european_firms(), cfg.brexit_years), covid_rule(
        cfg.resolved_covid_years()
    )
    rows = np.vstack([expand_row(o, spec) for o in transform(draft, brexit, covid)])

    frontier = rows @ truth.beta
    if cfg.het_alpha:
        vterms = spec.variance_terms
        alpha = np.array([cfg.het_alpha.get(k, 0.0) for k in vterms])
        sd = np.exp(0.5 * rows[:, [truth.terms.index(k) for k in vterms]] @ alpha)
    else:
        sd = np.full(n, float(cfg.noise_sigma))
    latent = frontier + sd * z
    if cfg.censor_target:
        shift = -float(np.quantile(latent, cfg.censor_target))
        frontier = frontier + shift
        latent = latent + shift
        beta = truth.beta.copy()
        beta[truth.terms.index("const")] += shift
        truth = CoefficientSet(truth.terms, beta, truth.variance_terms, truth.alpha)

    censored = latent <= 0.0
    lf = np.exp(-np.maximum(latent, 0.0))
    dataset = PanelDataset.from_observations(
        (
            replace(obs, load_factor=float(lf[i]))
            for i, obs in enumerate(draft.observations)
        ),
        spec.input_names,
    )
    transformed = tuple(transform(dataset, brexit, covid))
    return SimulatedPanel(
        dataset=dataset,
        transformed=transformed,
        coefficients=truth,
        frontier_ln_distance=frontier,
        latent_ln_distance=latent,
        true_tei=np.exp(-frontier),
        censored=censored,
    )


def replication_seed(seed: int, rep: int) -> int:
    words = np.random.SeedSequence(entropy=seed, spawn_key=(rep,)).generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


@dataclass
class RecoveryReport:
    reps: int
    failures: int
    keys: tuple[str, ...]
    bias: dict[str, float]
    rmse: dict[str, float]
    median_abs_error_first_order: float
    median_abs_bias_first_order: float
    coverage_first_order: float
    tei_correlation: float
    censored_share: float
    converged_share: float

    def to_dict(self) -> dict:
        return {
            "reps": self.reps,
            "failures": self.failures,
            "bias": self.bias,
            "rmse": self.rmse,
            "median_abs_error_first_order": self.median_abs_error_first_order,
            "median_abs_bias_first_order": self.median_abs_bias_first_order,
            "coverage_first_order": self.coverage_first_order,
            "tei_correlation": self.tei_correlation,
            "censored_share": self.censored_share,
            "converged_share": self.converged_share,
        }


def first_order_keys(spec: ModelSpec) -> tuple[str, ...]:
    return (*spec.input_names, "y", "t")


def _replicate(args):
    cfg, rep = args
    sim = generate(replace(cfg, seed=replication_seed(cfg.seed, rep)))
    design = build_design(sim.transformed, cfg.spec, sim.dataset.firms)
    try:
        res = fit(design)
    except Exception as exc:  # counted, not fatal
        log.warning("replication %d failed: %s", rep, exc)
        return rep, None
    est_tei = np.exp(-(design.X @ res.beta))
    corr = float(np.corrcoef(sim.true_tei, est_tei)[0, 1])
    return rep, {
        "estimate": res.beta,
        "truth": sim.coefficients.beta,
        "se": res.std_errors,
        "converged": res.converged,
        "tei_corr": corr,
        "censored": float(sim.censored.mean()),
    }


def monte_carlo(cfg: SimConfig, reps: int, workers: int | None = None) -> RecoveryReport:
    """Fit ``reps`` independent synthetic panels and summarise recovery.

    Coverage counts first-order coefficients whose nominal 95% interval
    (estimate +- 1.96 se) contains the truth.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    jobs = [(cfg, i) for i in range(reps)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate, jobs))
    else:
        results = [_replicate(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    ok = [r for _, r in results if r is not None]
    terms = TermIndex.build(cfg.spec, cfg.firms)
    if not ok:
        nan = math.nan
        return RecoveryReport(reps, reps, terms.keys, {}, {}, nan, nan, nan, nan, nan, 0.0)
    est = np.array([r["estimate"] for r in ok])
    truth = np.array([r["truth"] for r in ok])
    se = np.array([r["se"] for r in ok])
    err = est - truth
    fo = [terms.index(k) for k in first_order_keys(cfg.spec)]
    covered = np.abs(err[:, fo]) <= 1.959963984540054 * se[:, fo]
    return RecoveryReport(
        reps=reps,
        failures=reps - len(ok),
        keys=terms.keys,
        bias={k: float(v) for k, v in zip(terms.keys, err.mean(axis=0))},
        rmse={k: float(v) for k, v in zip(terms.keys, np.sqrt((err**2).mean(axis=0)))},
        median_abs_error_first_order=float(np.median(np.abs(err[:, fo]))),
        median_abs_bias_first_order=float(np.median(np.abs(err[:, fo].mean(axis=0)))),
        coverage_first_order=float(np.mean(covered)),
        tei_correlation=float(np.mean([r["tei_corr"] for r in ok])),
        censored_share=float(np.mean([r["censored"] for r in ok])),
        converged_share=float(np.mean([r["converged"] for r in ok])),
    )
