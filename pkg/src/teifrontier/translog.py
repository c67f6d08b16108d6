"""Translog regressor expansion and exact linear-homogeneity restrictions.

Coefficients live in "structural" coordinates, one slot per term of the
translog distance function with symmetric cross terms folded into a single
slot. Linear restrictions R @ beta = r are imposed exactly by writing
beta = beta_star + N @ theta with N an orthonormal null-space basis of R.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .errors import DimensionMismatch, RankDeficientRestrictions
from .panel import TransformedObservation

_RESERVED = {"y", "t", "const", "brexit", "covid"}


@dataclass(frozen=True)
class LinearRestriction:
    """``sum(weight * beta[key]) == rhs`` in structural coordinates."""

    weights: tuple[tuple[str, float], ...]
    rhs: float = 0.0

    @classmethod
    def of(cls, weights: Mapping[str, float], rhs: float = 0.0) -> "LinearRestriction":
        return cls(tuple((k, float(w)) for k, w in weights.items()), float(rhs))

    @classmethod
    def fix(cls, key: str, value: float = 0.0) -> "LinearRestriction":
        return cls(((key, 1.0),), float(value))

    def keys(self):
        return [k for k, _ in self.weights]


@dataclass(frozen=True)
class ModelSpec:
    input_names: tuple[str, ...] = ("K", "L", "E")
    include_trend_squared: bool = False
    include_dummies: bool = True
    include_brexit: bool = True
    include_covid: bool = True
    heteroskedastic: bool = True
    het_regressors: tuple[str, ...] | None = None
    extra_restrictions: tuple[LinearRestriction, ...] = ()

    def __post_init__(self):
        names = tuple(self.input_names)
        if not names:
            raise ValueError("at least one input is required")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate input names {names}")
        for name in names:
            if name in _RESERVED or "*" in name or ":" in name or not name:
                raise ValueError(f"invalid input name {name!r}")
        object.__setattr__(self, "input_names", names)
        object.__setattr__(self, "extra_restrictions", tuple(self.extra_restrictions))
        if self.het_regressors is not None:
            object.__setattr__(self, "het_regressors", tuple(self.het_regressors))

    @property
    def variance_terms(self) -> tuple[str, ...]:
        """Regressors of the log-variance equation."""
        if not self.heteroskedastic:
            return ("const",)
        if self.het_regressors is not None:
            return self.het_regressors
        return ("const", *self.input_names, "y", "t")

    def with_restrictions(self, extra: Sequence[LinearRestriction]) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, extra_restrictions=self.extra_restrictions + tuple(extra))

    def to_dict(self) -> dict:
        return {
            "input_names": list(self.input_names),
            "include_trend_squared": self.include_trend_squared,
            "include_dummies": self.include_dummies,
            "include_brexit": self.include_brexit,
            "include_covid": self.include_covid,
            "heteroskedastic": self.heteroskedastic,
            "het_regressors": None if self.het_regressors is None else list(self.het_regressors),
            "extra_restrictions": [
                {"weights": [[k, w] for k, w in lr.weights], "rhs": lr.rhs}
                for lr in self.extra_restrictions
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(
            input_names=tuple(d["input_names"]),
            include_trend_squared=d["include_trend_squared"],
            include_dummies=d["include_dummies"],
            include_brexit=d["include_brexit"],
            include_covid=d["include_covid"],
            heteroskedastic=d["heteroskedastic"],
            het_regressors=d.get("het_regressors"),
            extra_restrictions=tuple(
                LinearRestriction(tuple((k, float(w)) for k, w in lr["weights"]), lr["rhs"])
                for lr in d.get("extra_restrictions", ())
            ),
        )


def _pairs(names):
    return [(a, b) for i, a in enumerate(names) for b in names[i:]]


@dataclass(frozen=True)
class TermIndex:
    """Ordered coefficient slots of the translog model.

    Keys: ``const``, each input name, ``y``, ``t``, ``J*K`` for input pairs
    (J before K in input order, diagonal included), ``J*y``, ``J*t``,
    ``y*y``, ``t*y``, optionally ``t*t``, ``z:<firm>`` firm dummies,
    ``brexit`` and ``covid``.
    """

    keys: tuple[str, ...]
    labels: tuple[str, ...]
    input_names: tuple[str, ...]
    firms: tuple[str, ...] = ()
    _pos: Mapping[str, int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_pos", {k: i for i, k in enumerate(self.keys)})

    @classmethod
    def build(cls, spec: ModelSpec, firms: Sequence[str] = ()) -> "TermIndex":
        names = spec.input_names
        keys, labels = ["const"], ["Constant"]
        for j in names:
            keys.append(j)
            labels.append(f"Ln {j}")
        keys += ["y", "t"]
        labels += ["Ln y", "t"]
        for j, k in _pairs(names):
            keys.append(f"{j}*{k}")
            labels.append(f".5 (ln {j})²" if j == k else f"ln {j} ln {k}")
        for j in names:
            keys.append(f"{j}*y")
            labels.append(f"ln {j} ln y")
        for j in names:
            keys.append(f"{j}*t")
            labels.append(f"t ln {j}")
        keys += ["y*y", "t*y"]
        labels += [".5 (Ln y)²", "t ln y"]
        if spec.include_trend_squared:
            keys.append("t*t")
            labels.append(".5 t²")
        firms = tuple(firms)
        if spec.include_dummies:
            for i, f in enumerate(firms[1:], start=1):
                keys.append(f"z:{f}")
                labels.append(f"z{i}")
        if spec.include_brexit:
            keys.append("brexit")
            labels.append("Brexit")
        if spec.include_covid:
            keys.append("covid")
            labels.append("Covid")
        return cls(tuple(keys), tuple(labels), names, firms)

    def __len__(self):
        return len(self.keys)

    def __contains__(self, key):
        return key in self._pos

    def index(self, key: str) -> int:
        try:
            return self._pos[key]
        except KeyError:
            raise KeyError(f"unknown coefficient {key!r}") from None

    def label(self, key: str) -> str:
        return self.labels[self.index(key)]

    def pair_key(self, j: str, k: str) -> str:
        """Key of the folded symmetric coefficient for inputs j and k."""
        order = self.input_names
        a, b = sorted((j, k), key=order.index)
        return f"{a}*{b}"

    def to_dict(self) -> dict:
        return {
            "keys": list(self.keys),
            "labels": list(self.labels),
            "input_names": list(self.input_names),
            "firms": list(self.firms),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TermIndex":
        return cls(tuple(d["keys"]), tuple(d["labels"]), tuple(d["input_names"]), tuple(d["firms"]))


def expand_row(obs: TransformedObservation, spec: ModelSpec) -> np.ndarray:
    """Regressor row aligned with ``TermIndex.build(spec, firms)``."""
    names = spec.input_names
    lx = [obs.ln_inputs[j] for j in names]
    ly, t = obs.ln_output, obs.trend
    row = [1.0, *lx, ly, t]
    for a in range(len(names)):
        for b in range(a, len(names)):
            row.append(0.5 * lx[a] * lx[a] if a == b else lx[a] * lx[b])
    row += [v * ly for v in lx]
    row += [v * t for v in lx]
    row += [0.5 * ly * ly, t * ly]
    if spec.include_trend_squared:
        row.append(0.5 * t * t)
    if spec.include_dummies:
        row += [float(d) for d in obs.firm_dummies]
    if spec.include_brexit:
        row.append(float(obs.brexit_dummy))
    if spec.include_covid:
        row.append(float(obs.covid_dummy))
    return np.asarray(row, dtype=float)


@dataclass(frozen=True)
class RestrictionSet:
    """Linear restrictions ``R @ beta = r`` with R of full row rank."""

    R: np.ndarray
    r: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        r = np.asarray(self.r, dtype=float).reshape(-1)
        if R.shape[0] != r.shape[0]:
            raise DimensionMismatch(f"R has {R.shape[0]} rows but r has {r.shape[0]}")
        if R.shape[0] and np.linalg.matrix_rank(R) < R.shape[0]:
            raise RankDeficientRestrictions(
                f"{R.shape[0]} restriction rows but rank {np.linalg.matrix_rank(R)}"
            )
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @classmethod
    def empty(cls, dim: int) -> "RestrictionSet":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def rank(self) -> int:
        return self.R.shape[0]

    def residual(self, beta) -> float:
        if not self.rank:
            return 0.0
        return float(np.max(np.abs(self.R @ np.asarray(beta) - self.r)))

    def extended(self, R_extra, r_extra, labels=()) -> "RestrictionSet":
        """Append rows, silently dropping those implied by rows already present.

        A dropped row must be consistent with the existing ones; an implied row
        with a conflicting right-hand side means the restrictions cannot all hold.
        """
        R, r = self.R, self.r
        kept = list(self.labels)
        R_extra = np.atleast_2d(np.asarray(R_extra, dtype=float))
        r_extra = np.asarray(r_extra, dtype=float).reshape(-1)
        labels = list(labels) or [""] * len(r_extra)
        for row, rhs, lab in zip(R_extra, r_extra, labels):
            R_try = np.vstack([R, row])
            if np.linalg.matrix_rank(R_try) > R.shape[0]:
                R, r = R_try, np.append(r, rhs)
                kept.append(lab)
            else:
                coef, *_ = np.linalg.lstsq(R.T, row, rcond=None)
                if abs(coef @ r - rhs) > 1e-9 * (1.0 + abs(rhs)):
                    raise RankDeficientRestrictions(
                        f"restriction {lab or row} contradicts the existing set"
                    )
        return RestrictionSet(R, r, tuple(kept))

    def contains(self, other: "RestrictionSet", tol: float = 1e-9) -> bool:
        """True if every restriction of ``other`` is implied by this set."""
        if not other.rank:
            return True
        if not self.rank:
            return False
        coef, *_ = np.linalg.lstsq(self.R.T, other.R.T, rcond=None)
        return bool(
            np.allclose(self.R.T @ coef, other.R.T, atol=tol)
            and np.allclose(coef.T @ self.r, other.r, atol=tol)
        )


def restriction_rows(restrictions: Sequence[LinearRestriction], terms: TermIndex):
    R = np.zeros((len(restrictions), len(terms)))
    r = np.zeros(len(restrictions))
    for i, lr in enumerate(restrictions):
        for key, w in lr.weights:
            R[i, terms.index(key)] += w
        r[i] = lr.rhs
    return R, r


def homogeneity_restrictions(terms: TermIndex) -> list[LinearRestriction]:
    """Linear homogeneity of degree one of the distance function in inputs."""
    names = terms.input_names
    rows = [LinearRestriction.of({j: 1.0 for j in names}, 1.0)]
    for k in names:
        rows.append(LinearRestriction.of({terms.pair_key(j, k): 1.0 for j in names}))
    rows.append(LinearRestriction.of({f"{j}*y": 1.0 for j in names}))
    rows.append(LinearRestriction.of({f"{j}*t": 1.0 for j in names}))
    return rows


def build_restrictions(spec: ModelSpec, terms: TermIndex) -> RestrictionSet:
    """Homogeneity rows followed by ``spec.extra_restrictions``.

    Raises RankDeficientRestrictions if any row is redundant.
    """
    rows = homogeneity_restrictions(terms) + list(spec.extra_restrictions)
    R, r = restriction_rows(rows, terms)
    n_hom = len(terms.input_names) + 3
    labels = ["homogeneity"] * n_hom + ["extra"] * len(spec.extra_restrictions)
    return RestrictionSet(R, r, tuple(labels))


def reparameterize(rs: RestrictionSet, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Particular solution and orthonormal null-space basis of ``rs``.

    Every ``beta_star + N @ theta`` satisfies the restrictions exactly (up to
    rounding); the free dimension is ``dim - rank``.
    """
    if rs.R.shape[1] != dim:
        raise DimensionMismatch(f"restrictions have {rs.R.shape[1]} columns, expected {dim}")
    if not rs.rank:
        return np.zeros(dim), np.eye(dim)
    if np.linalg.matrix_rank(rs.R) < rs.rank:
        raise RankDeficientRestrictions("restriction matrix is not of full row rank")
    beta_star = np.linalg.lstsq(rs.R, rs.r, rcond=None)[0]
    N = null_space(rs.R)
    if N.shape[1] != dim - rs.rank:
        raise RankDeficientRestrictions("null space has unexpected dimension")
    return beta_star, N


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    response: np.ndarray
    censored: np.ndarray
    W: np.ndarray
    terms: TermIndex
    variance_terms: tuple[str, ...]
    spec: ModelSpec
    observations: tuple[TransformedObservation, ...]

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]


def build_design(
    observations: Sequence[TransformedObservation],
    spec: ModelSpec,
    firms: Sequence[str] | None = None,
) -> DesignMatrix:
    """Stack regressor rows, the response ln D and the variance regressors.

    ``firms`` must be the dataset's sorted firm list (the first entry is the
    dummy reference); it is inferred from the observations when omitted.
    """
    observations = tuple(observations)
    if not observations:
        raise DimensionMismatch("no observations")
    if firms is None:
        firms = sorted({o.firm_id for o in observations})
    terms = TermIndex.build(spec, firms)
    X = np.vstack([expand_row(o, spec) for o in observations])
    if X.shape[1] != len(terms):
        raise DimensionMismatch(
            f"rows have {X.shape[1]} columns but the term index has {len(terms)}"
        )
    for key in spec.variance_terms:
        if key not in terms:
            raise ValueError(f"variance regressor {key!r} is not a model term")
    W = X[:, [terms.index(k) for k in spec.variance_terms]]
    return DesignMatrix(
        X=X,
        response=np.array([o.ln_distance for o in observations]),
        censored=np.array([o.is_censored for o in observations], dtype=bool),
        W=W,
        terms=terms,
        variance_terms=spec.variance_terms,
        spec=spec,
        observations=observations,
    )
