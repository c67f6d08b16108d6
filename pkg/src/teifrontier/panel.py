"""Panel data ingestion, validation and the log/mean-scaled transform."""

from __future__ import annotations

import csv
import math
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DataError,
    DuplicateKey,
    LoadFactorOutOfRange,
    MissingColumn,
    NonPositiveValue,
)

DEFAULT_INPUTS = ("K", "L", "E")
LF_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class ColumnMap:
    """Maps model roles onto CSV column names.

    ``inputs`` maps each input name (as used in coefficient names) to its
    column; insertion order fixes the input order of the model.
    """

    firm: str = "firm"
    year: str = "year"
    lf: str = "lf"
    output: str = "y"
    inputs: Mapping[str, str] = field(
        default_factory=lambda: {name: name for name in DEFAULT_INPUTS}
    )

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(self.inputs)


@dataclass(frozen=True)
class PanelObservation:
    firm_id: str
    year: int
    load_factor: float
    output: float
    inputs: Mapping[str, float]


@dataclass(frozen=True)
class PanelDataset:
    observations: tuple[PanelObservation, ...]
    input_names: tuple[str, ...]
    firms: tuple[str, ...]
    years: tuple[int, ...]
    variable_means: Mapping[str, float]

    @classmethod
    def from_observations(
        cls, observations: Iterable[PanelObservation], input_names=DEFAULT_INPUTS
    ) -> "PanelDataset":
        """Validate, sort by (firm, year) and compute arithmetic means."""
        input_names = tuple(input_names)
        checked = []
        seen = set()
        for row, obs in enumerate(observations, start=1):
            obs = _validated(obs, input_names, row)
            key = (obs.firm_id, obs.year)
            if key in seen:
                raise DuplicateKey(f"duplicate firm-year {key}", row=row)
            seen.add(key)
            checked.append(obs)
        if not checked:
            raise DataError("dataset has no observations")
        checked.sort(key=lambda o: (o.firm_id, o.year))
        n = len(checked)
        means = {"lf": math.fsum(o.load_factor for o in checked) / n}
        means["y"] = math.fsum(o.output for o in checked) / n
        for name in input_names:
            means[name] = math.fsum(o.inputs[name] for o in checked) / n
        return cls(
            observations=tuple(checked),
            input_names=input_names,
            firms=tuple(sorted({o.firm_id for o in checked})),
            years=tuple(sorted({o.year for o in checked})),
            variable_means=means,
        )

    def __len__(self):
        return len(self.observations)

    def by_firm(self) -> dict[str, list[PanelObservation]]:
        grouped: dict[str, list[PanelObservation]] = {f: [] for f in self.firms}
        for obs in self.observations:
            grouped[obs.firm_id].append(obs)
        return grouped


def _validated(obs: PanelObservation, input_names, row) -> PanelObservation:
    lf = float(obs.load_factor)
    if not (lf > 0.0) or lf > 1.0 + LF_CLAMP_TOL:
        raise LoadFactorOutOfRange(
            f"load factor {lf!r} outside (0, 1]", row=row, column="lf"
        )
    lf = min(lf, 1.0)
    if not (obs.output > 0.0):
        raise NonPositiveValue(
            f"output {obs.output!r} must be positive", row=row, column="y"
        )
    missing = [name for name in input_names if name not in obs.inputs]
    if missing:
        raise MissingColumn(f"observation lacks inputs {missing}", row=row)
    for name in input_names:
        if not (obs.inputs[name] > 0.0):
            raise NonPositiveValue(
                f"input {name} = {obs.inputs[name]!r} must be positive",
                row=row,
                column=name,
            )
    return PanelObservation(
        firm_id=str(obs.firm_id),
        year=int(obs.year),
        load_factor=lf,
        output=float(obs.output),
        inputs={name: float(obs.inputs[name]) for name in input_names},
    )


def load_csv(path, schema: ColumnMap | None = None) -> PanelDataset:
    """Read a panel from a headed, comma-separated UTF-8 file."""
    schema = schema or ColumnMap()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [schema.firm, schema.year, schema.lf, schema.output, *schema.inputs.values()]
        for col in required:
            if col not in header:
                raise MissingColumn(f"missing column '{col}'", column=col)
        observations = []
        for row, rec in enumerate(reader, start=1):
            observations.append(
                PanelObservation(
                    firm_id=rec[schema.firm].strip(),
                    year=_parse(rec, schema.year, row, int),
                    load_factor=_parse(rec, schema.lf, row, float),
                    output=_parse(rec, schema.output, row, float),
                    inputs={
                        name: _parse(rec, col, row, float)
                        for name, col in schema.inputs.items()
                    },
                )
            )
    return _with_columns(observations, schema)


def _with_columns(observations, schema):
    roles = {"lf": schema.lf, "y": schema.output, **schema.inputs}
    try:
        return PanelDataset.from_observations(observations, schema.input_names)
    except DataError as exc:
        column = roles.get(exc.column, exc.column)
        raise type(exc)(exc.detail, row=exc.row, column=column) from None


def _parse(rec, col, row, kind):
    raw = (rec.get(col) or "").strip()
    try:
        if kind is int:
            return int(raw)
        value = float(raw)
    except ValueError:
        raise DataError(f"cannot parse {raw!r} as {kind.__name__}", row=row, column=col) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite value {raw!r}", row=row, column=col)
    return value


def write_csv(ds: PanelDataset, path, schema: ColumnMap | None = None) -> None:
    schema = schema or ColumnMap(inputs={n: n for n in ds.input_names})
    header = [schema.firm, schema.year, schema.lf, schema.output, *schema.inputs.values()]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for obs in ds.observations:
            writer.writerow(
                [obs.firm_id, obs.year, repr(obs.load_factor), repr(obs.output)]
                + [repr(obs.inputs[name]) for name in schema.inputs]
            )


@dataclass(frozen=True)
class TransformedObservation:
    firm_id: str
    year: int
    ln_distance: float
    is_censored: bool
    ln_output: float
    ln_inputs: Mapping[str, float]
    trend: float
    firm_dummies: tuple[int, ...]
    brexit_dummy: int = 0
    covid_dummy: int = 0

    def as_row(self) -> list:
        return [
            self.firm_id,
            self.year,
            repr(self.ln_distance),
            int(self.is_censored),
            repr(self.ln_output),
            *(repr(v) for v in self.ln_inputs.values()),
            repr(self.trend),
            *self.firm_dummies,
            self.brexit_dummy,
            self.covid_dummy,
        ]


def brexit_rule(firms: Iterable[str], years: Iterable[int] = (2017, 2018, 2019)):
    """Brexit dummy: one for the given (European) firms in the given years."""
    firms, years = frozenset(firms), frozenset(years)
    return lambda firm_id, year: firm_id in firms and year in years


def covid_rule(years: Iterable[int] = (2020, 2021)):
    years = frozenset(years)
    return lambda year: year in years


def transform(
    ds: PanelDataset,
    brexit_rule: Callable[[str, int], bool] | None = None,
    covid_rule: Callable[[int], bool] | None = None,
    censor_tol: float = 1e-12,
) -> list[TransformedObservation]:
    """Log-transform mean-scaled variables and build the dummy columns.

    The trend counts years from the first sample year. The first firm in
    sorted order is the reference for the firm dummies.
    """
    means = ds.variable_means
    base_year = ds.years[0]
    dummy_firms = ds.firms[1:]
    out = []
    for obs in ds.observations:
        lf = obs.load_factor
        censored = lf >= 1.0 - censor_tol
        out.append(
            TransformedObservation(
                firm_id=obs.firm_id,
                year=obs.year,
                ln_distance=0.0 if censored else -math.log(lf),
                is_censored=censored,
                ln_output=math.log(obs.output / means["y"]),
                ln_inputs={
                    name: math.log(obs.inputs[name] / means[name]) for name in ds.input_names
                },
                trend=float(obs.year - base_year),
                firm_dummies=tuple(int(obs.firm_id == f) for f in dummy_firms),
                brexit_dummy=int(bool(brexit_rule and brexit_rule(obs.firm_id, obs.year))),
                covid_dummy=int(bool(covid_rule and covid_rule(obs.year))),
            )
        )
    return out
