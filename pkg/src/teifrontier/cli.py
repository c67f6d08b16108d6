"""Command-line entry point: fit, test, efficiency, tfpg, simulate, report.

Exit codes: 0 success, 1 input or validation error, 2 the maximum-likelihood
fit did not converge (artifacts are still written and flagged).

Config files are flat ``key = value`` text; ``#`` starts a comment, list
values are comma separated and year lists accept ranges such as
``2017-2019``. Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import efficiency as eff
from . import plotting, reference
from .errors import DataError, TeiFrontierError
from .inference import specification_tests
from .panel import ColumnMap, brexit_rule, covid_rule, load_csv, transform, write_csv
from .report import (
    coefficient_table,
    manifest,
    test_table,
    write_efficiency_csv,
    write_json,
    write_tfpg_csv,
)
from .simulate import SimConfig, generate, monte_carlo
from .tobit import FitResult, OptimOptions, fit
from .translog import ModelSpec, build_design

log = logging.getLogger("teifrontier")

DEFAULTS = {
    "input": None,
    "out_dir": "out",
    "firm_col": "firm",
    "year_col": "year",
    "lf_col": "lf",
    "output_col": "y",
    "input_cols": "K,L,E",
    "input_names": "",
    "brexit_firms": "",
    "brexit_years": "2017-2019",
    "covid_years": "2020-2021",
    "trend_squared": "false",
    "dummies": "true",
    "heteroskedastic": "true",
    "clamp_tei": "false",
    "charts": "false",
    "max_iter": "500",
    "seed": "0",
    "reps": "0",
    "workers": "1",
    "sim_n_firms": "19",
    "sim_n_years": "10",
    "sim_start_year": "2012",
    "sim_noise_sigma": "0.05",
    "sim_censor_target": "0.05",
    "sim_truth": "airline",
    "sim_firm_effect_scale": "0.5",
}


class UsageError(TeiFrontierError):
    pass


def parse_config(path) -> dict[str, str]:
    """Read a flat key-value config file."""
    out = {}
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    for n, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_").replace(".", "_")
        if not sep or not key:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{n}: unknown key '{key}'")
        out[key] = value.strip()
    return out


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _list(s: str) -> list[str]:
    return [p.strip() for p in s.split(",") if p.strip()]


def _years(s: str) -> list[int]:
    years = []
    for part in _list(s):
        lo, sep, hi = part.partition("-")
        try:
            years += list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
        except ValueError:
            raise UsageError(f"bad year list {s!r}") from None
    return years


def resolve(args) -> dict[str, str]:
    settings = dict(DEFAULTS)
    if args.config:
        settings.update(parse_config(args.config))
    overrides = {
        "input": args.input,
        "out_dir": args.out_dir,
        "seed": None if args.seed is None else str(args.seed),
        "reps": None if args.reps is None else str(args.reps),
    }
    if args.no_het:
        overrides["heteroskedastic"] = "false"
    if args.trend_squared:
        overrides["trend_squared"] = "true"
    if args.clamp_tei:
        overrides["clamp_tei"] = "true"
    if args.charts:
        overrides["charts"] = "true"
    settings.update({k: v for k, v in overrides.items() if v is not None})
    return settings


def column_map(s) -> ColumnMap:
    cols = _list(s["input_cols"])
    names = _list(s["input_names"]) or cols
    if len(names) != len(cols):
        raise UsageError("input_names and input_cols differ in length")
    return ColumnMap(s["firm_col"], s["year_col"], s["lf_col"], s["output_col"], dict(zip(names, cols)))


class Pipeline:
    """Loaded data, transformed observations and the design for one run."""

    def __init__(self, s: dict[str, str], spec_override: ModelSpec | None = None):
        if not s["input"]:
            raise UsageError("no input file given (--input or 'input' in the config)")
        self.settings = s
        self.schema = column_map(s)
        self.dataset = load_csv(s["input"], self.schema)
        brexit_firms = _list(s["brexit_firms"])
        self.brexit = brexit_rule(brexit_firms, _years(s["brexit_years"]))
        self.covid = covid_rule(_years(s["covid_years"]))
        self.transformed = transform(self.dataset, self.brexit, self.covid)
        if spec_override is not None:
            self.spec = spec_override
        else:
            has_brexit = any(o.brexit_dummy for o in self.transformed)
            has_covid = any(o.covid_dummy for o in self.transformed)
            if not has_brexit:
                log.info("no Brexit observations; Brexit dummy dropped")
            if not has_covid:
                log.info("no Covid observations; Covid dummy dropped")
            self.spec = ModelSpec(
                input_names=self.schema.input_names,
                include_trend_squared=_bool(s["trend_squared"]),
                include_dummies=_bool(s["dummies"]),
                include_brexit=has_brexit,
                include_covid=has_covid,
                heteroskedastic=_bool(s["heteroskedastic"]),
            )
        self.design = build_design(self.transformed, self.spec, self.dataset.firms)
        self.options = OptimOptions(max_iter=int(s["max_iter"]))

    @property
    def out_dir(self) -> Path:
        p = Path(self.settings["out_dir"])
        p.mkdir(parents=True, exist_ok=True)
        return p

    def manifest(self, command):
        settings = {k: v for k, v in self.settings.items() if k not in ("out_dir", "input")}
        doc = manifest(command, settings, self.settings["input"])
        doc["spec"] = self.spec.to_dict()
        return doc


def _fit_outputs(p: Pipeline, res: FitResult):
    out = p.out_dir
    write_json(res.to_dict(), out / "fit.json")
    table = coefficient_table(res)
    (out / "coefficients.txt").write_text(table, encoding="utf-8")
    return table


def _load_prior_fit(path) -> FitResult:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"fit artifact not found: {path}")
    return FitResult.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _pipeline_and_fit(s, fit_path=None):
    if fit_path:
        prior = _load_prior_fit(fit_path)
        p = Pipeline(s, spec_override=prior.spec)
        if p.design.terms.keys != prior.terms.keys:
            raise UsageError("fit artifact does not match the terms implied by the input data")
        return p, prior, False
    p = Pipeline(s)
    return p, fit(p.design, options=p.options), True


def cmd_fit(s, args) -> int:
    p = Pipeline(s)
    res = fit(p.design, options=p.options)
    print(_fit_outputs(p, res), end="")
    write_json(p.manifest("fit"), p.out_dir / "manifest.json")
    return 0 if res.converged else 2


def cmd_test(s, args) -> int:
    p = Pipeline(s)
    fit_u, results, fits = specification_tests(p.design, options=p.options)
    doc = {"specification_tests": [r.to_dict() for r in results]}
    write_json(doc, p.out_dir / "tests.json")
    table = test_table(results)
    (p.out_dir / "tests.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    write_json(p.manifest("test"), p.out_dir / "manifest.json")
    ok = fit_u.converged and all(f.converged for f in fits.values())
    return 0 if ok else 2


def _efficiency(p, res, charts):
    records = eff.compute_tei(res, p.design, clamp=_bool(p.settings["clamp_tei"]))
    write_efficiency_csv(records, p.out_dir / "efficiency.csv")
    summary = {
        "average_tei_by_firm": eff.firm_average_tei(records),
        "average_elasticities": eff.average_elasticities(records),
        "n_clamped": sum(r.clamped for r in records),
        "n_above_one": sum(r.fitted_ln_distance < 0 for r in records),
    }
    write_json(summary, p.out_dir / "efficiency_summary.json")
    if charts:
        plotting.tei_chart(p.out_dir / "efficiency.csv", p.out_dir / "tei.svg")
        plotting.elasticity_chart(p.out_dir / "efficiency.csv", p.out_dir / "elasticities.svg")
    return summary


def _tfpg(p, res, charts):
    records = eff.tfpg_decompose(res, p.transformed)
    write_tfpg_csv(records, p.out_dir / "tfpg.csv")
    summary = {"se_tfpg_correlation": eff.se_tfpg_correlation(records)}
    write_json(summary, p.out_dir / "tfpg_summary.json")
    if charts:
        plotting.tfpg_chart(p.out_dir / "tfpg.csv", p.out_dir / "tfpg_decomposition.svg")
    return summary


def cmd_efficiency(s, args) -> int:
    p, res, fresh = _pipeline_and_fit(s, args.fit)
    if fresh:
        _fit_outputs(p, res)
    summary = _efficiency(p, res, _bool(s["charts"]))
    for firm, v in summary["average_tei_by_firm"].items():
        print(f"{firm}\t{v:.5f}")
    write_json(p.manifest("efficiency"), p.out_dir / "manifest.json")
    return 0 if res.converged else 2


def cmd_tfpg(s, args) -> int:
    p, res, fresh = _pipeline_and_fit(s, args.fit)
    if fresh:
        _fit_outputs(p, res)
    summary = _tfpg(p, res, _bool(s["charts"]))
    for firm, v in summary["se_tfpg_correlation"].items():
        print(f"{firm}\tcorr(SE, TFPG) = {'n/a' if v is None else f'{v:.4f}'}")
    write_json(p.manifest("tfpg"), p.out_dir / "manifest.json")
    return 0 if res.converged else 2


def cmd_report(s, args) -> int:
    p = Pipeline(s)
    charts = _bool(s["charts"])
    fit_u, results, fits = specification_tests(p.design, options=p.options)
    print(_fit_outputs(p, fit_u))
    table = test_table(results)
    (p.out_dir / "tests.txt").write_text(table, encoding="utf-8")
    print(table)
    eff_summary = _efficiency(p, fit_u, charts)
    tfpg_summary = _tfpg(p, fit_u, charts)
    doc = {
        "fit": {
            "loglik": fit_u.to_dict()["loglik"],
            "converged": fit_u.converged,
            "n_obs": fit_u.n_obs,
            "n_censored": fit_u.n_censored,
        },
        "specification_tests": [r.to_dict() for r in results],
        "efficiency": eff_summary,
        "tfpg": tfpg_summary,
    }
    write_json(doc, p.out_dir / "report.json")
    write_json({"specification_tests": doc["specification_tests"]}, p.out_dir / "tests.json")
    write_json(p.manifest("report"), p.out_dir / "manifest.json")
    for firm, v in eff_summary["average_tei_by_firm"].items():
        print(f"{firm}\taverage TEI {v:.5f}")
    ok = fit_u.converged and all(f.converged for f in fits.values())
    return 0 if ok else 2


def sim_config(s) -> SimConfig:
    spec = ModelSpec(
        include_trend_squared=_bool(s["trend_squared"]),
        heteroskedastic=_bool(s["heteroskedastic"]),
    )
    base = SimConfig(
        n_firms=int(s["sim_n_firms"]),
        n_years=int(s["sim_n_years"]),
        start_year=int(s["sim_start_year"]),
        noise_sigma=float(s["sim_noise_sigma"]),
        censor_target=float(s["sim_censor_target"]) or None,
        seed=int(s["seed"]),
        spec=spec,
        firm_effect_scale=float(s["sim_firm_effect_scale"]),
        european_firms=tuple(_list(s["brexit_firms"])),
        brexit_years=tuple(_years(s["brexit_years"])),
        covid_years=tuple(_years(s["covid_years"])),
    )
    truth = s["sim_truth"]
    if truth == "cobb_douglas":
        coefs = reference.cobb_douglas_coefficients(base.firms, spec, base.firm_effect_scale)
        base = replace(base, true_coefficients=coefs)
    elif truth != "airline":
        raise UsageError(f"unknown sim_truth {truth!r}; expected airline or cobb_douglas")
    return base


def cmd_simulate(s, args) -> int:
    cfg = sim_config(s)
    out = Path(s["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    sim = generate(cfg)
    write_csv(sim.dataset, out / "panel.csv")
    truth = {
        "coefficients": sim.coefficients.as_dict(),
        "brexit_firms": list(cfg.resolved_european_firms()),
        "brexit_years": list(cfg.brexit_years),
        "covid_years": list(cfg.resolved_covid_years()),
        "censored_share": float(sim.censored.mean()),
    }
    write_json(truth, out / "truth.json")
    print(f"wrote {len(sim.dataset)} observations to {out / 'panel.csv'}")
    reps = int(s["reps"])
    if reps > 0:
        report = monte_carlo(cfg, reps, workers=int(s["workers"]))
        write_json(report.to_dict(), out / "monte_carlo.json")
        for key in ("median_abs_error_first_order", "coverage_first_order", "tei_correlation"):
            print(f"{key}\t{getattr(report, key):.4f}")
        print(f"failures\t{report.failures}")
    write_json(manifest("simulate", {k: v for k, v in s.items() if k not in ("out_dir", "input")}),
               out / "manifest.json")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "test": cmd_test,
    "efficiency": cmd_efficiency,
    "tfpg": cmd_tfpg,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="panel CSV (firm,year,lf,output,inputs...)")
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out-dir", help="directory for artifacts (default: out)")
    common.add_argument("--no-het", action="store_true", help="homoskedastic errors")
    common.add_argument("--trend-squared", action="store_true", help="include 0.5 t^2")
    common.add_argument("--clamp-tei", action="store_true", help="report TEI above 1 as 1")
    common.add_argument("--seed", type=int)
    common.add_argument("--reps", type=int, help="Monte Carlo replications (simulate)")
    common.add_argument("--charts", action="store_true", help="write SVG charts")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="teifrontier", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name in ("efficiency", "tfpg"):
            sp.add_argument("--fit", help="reuse a fit.json instead of fitting")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not hasattr(args, "fit"):
        args.fit = None
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
    )
    try:
        settings = resolve(args)
        return COMMANDS[args.command](settings, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, UsageError, TeiFrontierError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
