"""Tobit (left-censored at ln D = 0) likelihood with multiplicative
heteroskedasticity, and its maximum-likelihood fit.

Free parameters are ``(theta, alpha)``: structural coefficients are
``beta = beta_star + N @ theta`` and the error variance is
``exp(W @ alpha)``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr, ndtr

from .errors import DimensionMismatch, NonFiniteLikelihood
from .translog import (
    DesignMatrix,
    ModelSpec,
    RestrictionSet,
    TermIndex,
    build_restrictions,
    reparameterize,
)

log = logging.getLogger(__name__)

LN_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CoefficientSet:
    """Structural coefficients with named access, plus the variance vector."""

    terms: TermIndex
    beta: np.ndarray
    variance_terms: tuple[str, ...] = ("const",)
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        if beta.shape[0] != len(self.terms):
            raise DimensionMismatch(f"{beta.shape[0]} coefficients for {len(self.terms)} terms")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(-1))
        object.__setattr__(self, "variance_terms", tuple(self.variance_terms))

    @classmethod
    def from_mapping(
        cls,
        values: Mapping[str, float],
        spec: ModelSpec,
        firms: Sequence[str] = (),
        alpha: Mapping[str, float] | None = None,
    ) -> "CoefficientSet":
        """Coefficients keyed by term; absent terms are zero."""
        terms = TermIndex.build(spec, firms)
        beta = np.zeros(len(terms))
        for key, value in values.items():
            beta[terms.index(key)] = value
        vterms = spec.variance_terms
        a = np.zeros(len(vterms))
        for key, value in (alpha or {}).items():
            a[vterms.index(key)] = value
        return cls(terms, beta, vterms, a)

    def __getitem__(self, key: str) -> float:
        return float(self.beta[self.terms.index(key)])

    def get(self, key: str, default: float = 0.0) -> float:
        return self[key] if key in self.terms else default

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.terms.keys, self.beta)}


@dataclass(frozen=True)
class OptimOptions:
    max_iter: int = 500
    gtol: float = 1e-6
    ftol: float = 1e-10
    polish_steps: int = 3


@dataclass
class FitResult:
    coefficients: CoefficientSet
    loglik: float
    restrictions: RestrictionSet
    spec: ModelSpec
    free_vcov: np.ndarray | None
    structural_vcov: np.ndarray | None
    std_errors: np.ndarray
    z_stats: np.ndarray
    p_values: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    n_obs: int = 0
    n_censored: int = 0
    message: str = ""
    perfect_fit: bool = False

    @property
    def beta(self) -> np.ndarray:
        return self.coefficients.beta

    @property
    def terms(self) -> TermIndex:
        return self.coefficients.terms

    @property
    def vcov_available(self) -> bool:
        return self.structural_vcov is not None

    def table(self) -> list[tuple[str, float, float]]:
        """(label, coefficient, p-value) rows in term order."""
        return [
            (lab, float(b), float(p))
            for lab, b, p in zip(self.terms.labels, self.beta, self.p_values)
        ]

    def to_dict(self) -> dict:
        c = self.coefficients
        return {
            "spec": self.spec.to_dict(),
            "terms": c.terms.to_dict(),
            "coefficients": [
                {
                    "key": k,
                    "label": lab,
                    "estimate": _num(b),
                    "std_error": _num(se),
                    "z": _num(z),
                    "p_value": _num(p),
                }
                for k, lab, b, se, z, p in zip(
                    c.terms.keys, c.terms.labels, c.beta, self.std_errors, self.z_stats, self.p_values
                )
            ],
            "variance": [
                {"key": k, "estimate": _num(a)} for k, a in zip(c.variance_terms, c.alpha)
            ],
            "loglik": _num(self.loglik),
            "n_obs": self.n_obs,
            "n_censored": self.n_censored,
            "convergence": {
                "converged": self.converged,
                "iterations": self.iterations,
                "gradient_norm": _num(self.gradient_norm),
                "perfect_fit": self.perfect_fit,
                "vcov_available": self.vcov_available,
                "message": self.message,
            },
            "restrictions": {
                "R": self.restrictions.R.tolist(),
                "r": self.restrictions.r.tolist(),
                "labels": list(self.restrictions.labels),
            },
            "structural_vcov": None if self.structural_vcov is None else _matrix(self.structural_vcov),
            "free_vcov": None if self.free_vcov is None else _matrix(self.free_vcov),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FitResult":
        spec = ModelSpec.from_dict(d["spec"])
        terms = TermIndex.from_dict(d["terms"])
        coefs = CoefficientSet(
            terms,
            [_unnum(c["estimate"]) for c in d["coefficients"]],
            tuple(v["key"] for v in d["variance"]),
            [_unnum(v["estimate"]) for v in d["variance"]],
        )
        conv = d["convergence"]
        rs = d["restrictions"]
        R = np.asarray(rs["R"], dtype=float).reshape(-1, len(terms))
        return cls(
            coefficients=coefs,
            loglik=_unnum(d["loglik"], default=math.inf),
            restrictions=RestrictionSet(R, rs["r"], tuple(rs["labels"])),
            spec=spec,
            free_vcov=None if d.get("free_vcov") is None else _unmatrix(d["free_vcov"]),
            structural_vcov=(
                None if d.get("structural_vcov") is None else _unmatrix(d["structural_vcov"])
            ),
            std_errors=np.array([_unnum(c["std_error"]) for c in d["coefficients"]]),
            z_stats=np.array([_unnum(c["z"]) for c in d["coefficients"]]),
            p_values=np.array([_unnum(c["p_value"]) for c in d["coefficients"]]),
            converged=conv["converged"],
            iterations=conv["iterations"],
            gradient_norm=_unnum(conv["gradient_norm"]),
            n_obs=d["n_obs"],
            n_censored=d["n_censored"],
            message=conv["message"],
            perfect_fit=conv["perfect_fit"],
        )


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _unnum(x, default=math.nan):
    return default if x is None else float(x)


def _matrix(m):
    return [[_num(v) for v in row] for row in np.asarray(m)]


def _unmatrix(m):
    return np.array([[_unnum(v) for v in row] for row in m], dtype=float)


def _split(params, reparam, n_alpha):
    beta_star, N = reparam
    params = np.asarray(params, dtype=float)
    k = N.shape[1]
    if params.shape[0] != k + n_alpha:
        raise DimensionMismatch(f"expected {k + n_alpha} parameters, got {params.shape[0]}")
    return beta_star + N @ params[:k], params[k:]


def _loglik_parts(params, design: DesignMatrix, reparam, want_grad=True):
    beta, alpha = _split(params, reparam, design.W.shape[1])
    mu = design.X @ beta
    h = design.W @ alpha
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        var = np.exp(h)
        sd = np.exp(0.5 * h)
        cens = design.censored
        unc = ~cens
        resid = design.response - mu
        ll_unc = -0.5 * (LN_2PI + h[unc]) - 0.5 * resid[unc] ** 2 / var[unc]
        z = -mu[cens] / sd[cens]
        ll_cens = log_ndtr(z)
        total = float(np.sum(ll_unc) + np.sum(ll_cens))
    if not math.isfinite(total):
        raise NonFiniteLikelihood(f"log-likelihood is {total}")
    if not want_grad:
        return total, None
    d_mu = np.empty_like(mu)
    d_h = np.empty_like(mu)
    with np.errstate(over="ignore", invalid="ignore"):
        d_mu[unc] = resid[unc] / var[unc]
        d_h[unc] = -0.5 + 0.5 * resid[unc] ** 2 / var[unc]
        # inverse Mills ratio phi(z)/Phi(z), stable for very negative z
        mills = np.exp(-0.5 * z * z - 0.5 * LN_2PI - ll_cens)
        d_mu[cens] = -mills / sd[cens]
        d_h[cens] = -0.5 * z * mills
    _, N = reparam
    with np.errstate(over="ignore", invalid="ignore"):
        grad = np.concatenate([N.T @ (design.X.T @ d_mu), design.W.T @ d_h])
    if not np.all(np.isfinite(grad)):
        raise NonFiniteLikelihood("log-likelihood gradient is not finite")
    return total, grad


def loglik(params, design: DesignMatrix, reparam) -> float:
    """Tobit log-likelihood at free parameters ``(theta, alpha)``."""
    return _loglik_parts(params, design, reparam, want_grad=False)[0]


def loglik_grad(params, design: DesignMatrix, reparam) -> np.ndarray:
    """Analytic score with respect to ``(theta, alpha)``."""
    return _loglik_parts(params, design, reparam)[1]


def numerical_hessian(grad_fn, params, rel_step=1e-5) -> np.ndarray:
    """Central differences of an analytic gradient, symmetrised."""
    params = np.asarray(params, dtype=float)
    n = params.shape[0]
    H = np.empty((n, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(params[i]))
        up, dn = params.copy(), params.copy()
        up[i] += h
        dn[i] -= h
        H[:, i] = (grad_fn(up) - grad_fn(dn)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _initial_inverse_hessian(design, reparam, params):
    """Inverse of the (expected) information at ``params``, block-diagonal."""
    beta, alpha = _split(params, reparam, design.W.shape[1])
    _, N = reparam
    w = np.exp(-np.clip(design.W @ alpha, -700, 700))
    XN = design.X @ N
    info_theta = XN.T @ (XN * w[:, None])
    info_alpha = 0.5 * design.W.T @ design.W
    k = N.shape[1]
    H0 = np.zeros((k + len(alpha), k + len(alpha)))
    H0[:k, :k] = np.linalg.pinv(info_theta)
    H0[k:, k:] = np.linalg.pinv(info_alpha)
    return H0


def _warm_start(design: DesignMatrix, reparam):
    beta_star, N = reparam
    unc = ~design.censored
    rows = unc if unc.sum() > N.shape[1] else np.ones_like(unc)
    X = design.X[rows]
    yv = design.response[rows]
    theta = np.linalg.lstsq(X @ N, yv - X @ beta_star, rcond=None)[0]
    resid = yv - X @ (beta_star + N @ theta)
    s2 = float(np.mean(resid**2))
    return theta, s2


def _bfgs(fun, x0, H0, opts: OptimOptions):
    """Minimise ``fun`` (returning value and gradient) by BFGS with
    Armijo backtracking. Non-finite trial points are treated as failed
    steps and backtracked."""
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    H = H0.copy()
    converged = False
    message = "maximum iterations exceeded"
    it = 0
    for it in range(1, opts.max_iter + 1):
        if np.max(np.abs(g)) < opts.gtol:
            converged, message = True, "gradient tolerance reached"
            it -= 1
            break
        d = -H @ g
        slope = g @ d
        if not slope < 0:
            H = H0.copy()
            d = -H @ g
            slope = g @ d
        step = 1.0
        while True:
            x_new = x + step * d
            try:
                f_new, g_new = fun(x_new)
                if f_new <= f + 1e-4 * step * slope:
                    break
            except NonFiniteLikelihood:
                pass
            step *= 0.5
            if step < 1e-20:
                x_new = None
                break
        if x_new is None:
            message = "line search failed"
            converged = bool(np.max(np.abs(g)) < 1e3 * opts.gtol)
            break
        s = x_new - x
        yv = g_new - g
        change = abs(f - f_new)
        x, f, g = x_new, f_new, g_new
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            rho = 1.0 / sy
            Hy = H @ yv
            H += (rho * rho * (yv @ Hy) + rho) * np.outer(s, s) - rho * (
                np.outer(Hy, s) + np.outer(s, Hy)
            )
        if change <= opts.ftol * max(1.0, abs(f)):
            converged, message = True, "relative log-likelihood change below tolerance"
            break
    return x, f, g, converged, it, message


def fit(
    design: DesignMatrix,
    restrictions: RestrictionSet | None = None,
    options: OptimOptions | None = None,
) -> FitResult:
    """Maximum-likelihood fit of the censored translog distance function.

    ``restrictions`` defaults to homogeneity plus ``spec.extra_restrictions``.
    Starts from restricted least squares on uncensored rows, runs BFGS, then
    takes a few Newton steps with the numerical Hessian, which also yields
    the covariance matrix.
    """
    opts = options or OptimOptions()
    spec = design.spec
    if restrictions is None:
        restrictions = build_restrictions(spec, design.terms)
    reparam = reparameterize(restrictions, len(design.terms))
    k = reparam[1].shape[1]
    n_alpha = design.W.shape[1]
    n_unc = int((~design.censored).sum())
    if n_unc == 0:
        raise ValueError("fit needs at least one uncensored observation")
    if design.n_obs <= k:
        raise ValueError(f"{design.n_obs} observations for {k} free coefficients")

    theta0, s2 = _warm_start(design, reparam)
    scale = max(1.0, float(np.var(design.response)))
    if s2 <= 1e-24 * scale:
        beta = reparam[0] + reparam[1] @ theta0
        if np.all(design.X[design.censored] @ beta <= 1e-12):
            return _perfect_fit(design, spec, restrictions, beta)

    alpha0 = np.linalg.lstsq(design.W, np.full(design.n_obs, math.log(s2)), rcond=None)[0]
    x0 = np.concatenate([theta0, alpha0])

    def neg(p):
        ll, g = _loglik_parts(p, design, reparam)
        return -ll, -g

    try:
        neg(x0)
    except NonFiniteLikelihood as exc:
        raise NonFiniteLikelihood(f"at starting values: {exc}") from None

    H0 = _initial_inverse_hessian(design, reparam, x0)
    x, f, g, converged, iterations, message = _bfgs(neg, x0, H0, opts)

    def grad(p):
        return _loglik_parts(p, design, reparam)[1]

    hess = None
    for _ in range(opts.polish_steps):
        try:
            hess = numerical_hessian(grad, x)
            step = np.linalg.solve(hess, -grad(x))
            f_new, g_new = neg(x + step)
        except (np.linalg.LinAlgError, NonFiniteLikelihood):
            break
        if f_new > f + 1e-12 * max(1.0, abs(f)):
            break
        hess = None
        x, f, g = x + step, f_new, g_new
        if np.max(np.abs(g)) < 1e-3 * opts.gtol:
            break
    gnorm = float(np.max(np.abs(g)))
    if gnorm < opts.gtol and not converged:
        converged, message = True, "gradient tolerance reached"
    if hess is None:
        try:
            hess = numerical_hessian(grad, x)
        except NonFiniteLikelihood:
            hess = None

    free_vcov = _invert_information(hess)
    if free_vcov is None:
        message += "; Hessian singular, covariance unavailable"
        log.warning("singular Hessian at the optimum; covariance unavailable")
    beta, alpha = _split(x, reparam, n_alpha)
    return _result(
        design, spec, restrictions, reparam, beta, alpha, -f, free_vcov,
        converged, iterations, gnorm, message,
    )


def _invert_information(hess):
    if hess is None or not np.all(np.isfinite(hess)):
        return None
    info = -hess
    try:
        np.linalg.cholesky(info)
        vcov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None
    return 0.5 * (vcov + vcov.T)


def _result(design, spec, restrictions, reparam, beta, alpha, ll, free_vcov,
            converged, iterations, gnorm, message, perfect=False):
    _, N = reparam
    k = N.shape[1]
    p = len(beta)
    if free_vcov is not None:
        struct = N @ free_vcov[:k, :k] @ N.T
        se = np.sqrt(np.clip(np.diag(struct), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 1e-12 * (1.0 + np.abs(beta)), beta / se, np.nan)
        pv = 2.0 * ndtr(-np.abs(z))
    else:
        struct = None
        se = z = pv = np.full(p, np.nan)
    return FitResult(
        coefficients=CoefficientSet(design.terms, beta, design.variance_terms, alpha),
        loglik=ll,
        restrictions=restrictions,
        spec=spec,
        free_vcov=free_vcov,
        structural_vcov=struct,
        std_errors=se,
        z_stats=z,
        p_values=pv,
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        n_obs=design.n_obs,
        n_censored=int(design.censored.sum()),
        message=message,
        perfect_fit=perfect,
    )


def _perfect_fit(design, spec, restrictions, beta):
    # zero residual variance: the likelihood is unbounded above, the
    # least-squares point is the estimate and no covariance exists
    reparam = reparameterize(restrictions, len(design.terms))
    alpha = np.full(design.W.shape[1], np.nan)
    return _result(
        design, spec, restrictions, reparam, beta, alpha, math.inf, None,
        True, 0, 0.0, "perfect fit: zero residual variance", perfect=True,
    )


def predict_linear(fit: FitResult | CoefficientSet, design: DesignMatrix) -> np.ndarray:
    """Latent index X @ beta for every row (not clipped at zero)."""
    coefs = fit.coefficients if isinstance(fit, FitResult) else fit
    if coefs.terms.keys != design.terms.keys:
        raise DimensionMismatch("design terms do not match the coefficient terms")
    return design.X @ coefs.beta
