import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import lifted, noiseless
from teifrontier.errors import DimensionMismatch, NonFiniteLikelihood
from teifrontier.reference import airline_coefficients
from teifrontier.simulate import generate
from teifrontier.tobit import (
    CoefficientSet,
    FitResult,
    OptimOptions,
    fit,
    loglik,
    loglik_grad,
    predict_linear,
)
from teifrontier.translog import (
    DesignMatrix,
    ModelSpec,
    RestrictionSet,
    TermIndex,
    build_design,
    build_restrictions,
    expand_row,
    reparameterize,
)


def raw_design(X, y, censored, W):
    X = np.atleast_2d(np.asarray(X, float))
    terms = TermIndex(tuple(f"c{i}" for i in range(X.shape[1])), tuple(f"c{i}" for i in range(X.shape[1])), ())
    W = np.atleast_2d(np.asarray(W, float))
    return DesignMatrix(X, np.asarray(y, float), np.asarray(censored, bool), W, terms,
                        tuple(f"w{i}" for i in range(W.shape[1])), ModelSpec(), ())


def free(dim):
    return reparameterize(RestrictionSet.empty(dim), dim)


def phi_cdf_quadrature(z):
    val, _ = quad(lambda u: math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi), -np.inf, z,
                  epsabs=1e-14, epsrel=1e-13)
    return val


def oracle_loglik(X, y, cens, W, beta, alpha):
    total = 0.0
    for xi, yi, ci, wi in zip(X, y, cens, W):
        mu = xi @ beta
        var = math.exp(wi @ alpha)
        if ci:
            total += math.log(phi_cdf_quadrature(-mu / math.sqrt(var)))
        else:
            total += -0.5 * math.log(2 * math.pi * var) - (yi - mu) ** 2 / (2 * var)
    return total


def test_single_uncensored_observation():
    d = raw_design([[1.0]], [0.5], [False], [[1.0]])
    assert loglik([0.5, 0.0], d, free(1)) == pytest.approx(-0.9189385332046727, abs=1e-12)


def test_single_censored_observation():
    d = raw_design([[1.0]], [0.0], [True], [[1.0]])
    assert loglik([0.0, 0.0], d, free(1)) == pytest.approx(math.log(0.5), abs=1e-12)
    g = loglik_grad([0.0, 0.0], d, free(1))
    # d/dmu ln Phi(-mu) at 0 is -phi(0)/Phi(0) = -sqrt(2/pi)
    assert g[0] == pytest.approx(-math.sqrt(2 / math.pi), abs=1e-12)
    assert g[0] == pytest.approx(-0.7978846, abs=1e-7)


def test_loglik_matches_quadrature_oracle(rng):
    for _ in range(10):
        X = np.column_stack([np.ones(5), rng.normal(size=(5, 2))])
        W = X[:, :2]
        cens = np.array([True, False, True, False, False])
        beta = rng.normal(scale=0.5, size=3)
        alpha = rng.normal(scale=0.3, size=2)
        y = np.where(cens, 0.0, np.abs(X @ beta + rng.normal(scale=0.2, size=5)))
        d = raw_design(X, y, cens, W)
        got = loglik(np.concatenate([beta, alpha]), d, free(3))
        assert got == pytest.approx(oracle_loglik(X, y, cens, W, beta, alpha), abs=1e-8)


def test_gradient_zero_at_exact_least_squares_fit():
    X = np.column_stack([np.ones(6), np.arange(6.0)])
    y = X @ np.array([0.3, 0.1])
    d = raw_design(X, y, [False] * 6, np.ones((6, 1)))
    g = loglik_grad([0.3, 0.1, 0.0], d, free(2))
    np.testing.assert_allclose(g[:2], 0.0, atol=1e-14)


def finite_difference(f, x, rel=1e-6):
    g = np.empty_like(x)
    for i in range(len(x)):
        h = rel * (1 + abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2 * h)
    return g


@pytest.mark.parametrize("censor_share", [0.0, 0.35])
def test_gradient_matches_finite_differences(sim_design, rng, censor_share):
    d = sim_design
    if censor_share:
        # force a share of rows onto the censoring point
        cens = rng.random(d.n_obs) < censor_share
        d = replace(d, censored=cens, response=np.where(cens, 0.0, d.response))
        assert cens.mean() >= 0.3
    reparam = reparameterize(build_restrictions(d.spec, d.terms), len(d.terms))
    k = reparam[1].shape[1] + d.W.shape[1]
    base = fit(d).free_vcov
    for _ in range(20):
        x = rng.normal(scale=0.3, size=k)
        x[reparam[1].shape[1]] = math.log(0.05**2) + rng.normal(scale=0.5)
        g = loglik_grad(x, d, reparam)
        fd = finite_difference(lambda p: loglik(p, d, reparam), x)
        rel = np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd)))
        assert rel < 1e-6
    assert base is not None


def test_non_finite_likelihood_raises():
    d = raw_design([[1.0]], [0.5], [False], [[1.0]])
    with pytest.raises(NonFiniteLikelihood):
        loglik([0.5, -1e6], d, free(1))


def test_noiseless_recovery(small_cfg):
    sim = generate(noiseless(lifted(small_cfg)))
    assert not sim.censored.any()
    d = build_design(sim.transformed, small_cfg.spec, sim.dataset.firms)
    res = fit(d)
    assert res.perfect_fit and res.converged and not res.vcov_available
    np.testing.assert_allclose(res.beta, sim.coefficients.beta, atol=1e-6)


def restricted_least_squares(X, y, R, r):
    """KKT solution of min ||y - X b|| subject to R b = r."""
    p, m = X.shape[1], R.shape[0]
    K = np.block([[X.T @ X, R.T], [R, np.zeros((m, m))]])
    rhs = np.concatenate([X.T @ y, r])
    return np.linalg.solve(K, rhs)[:p]


def test_uncensored_homoskedastic_fit_equals_restricted_least_squares(sim_cfg):
    cfg = lifted(replace(sim_cfg, spec=ModelSpec(heteroskedastic=False), seed=5))
    sim = generate(cfg)
    sim_lnd = sim.latent_ln_distance
    assert np.all(sim_lnd > 0)
    d = build_design(sim.transformed, cfg.spec, sim.dataset.firms)
    res = fit(d)
    rs = build_restrictions(cfg.spec, d.terms)
    expected = restricted_least_squares(d.X, d.response, rs.R, rs.r)
    np.testing.assert_allclose(res.beta, expected, atol=1e-8)


def test_basis_invariance(sim_design, rng):
    rs = build_restrictions(sim_design.spec, sim_design.terms)
    a = fit(sim_design, rs)
    b0, N = reparameterize(rs, len(sim_design.terms))
    Q, _ = np.linalg.qr(rng.normal(size=(N.shape[1], N.shape[1])))
    from teifrontier import tobit

    original = tobit.reparameterize
    tobit.reparameterize = lambda rs_, dim: (b0, N @ Q)
    try:
        b = fit(sim_design, rs)
    finally:
        tobit.reparameterize = original
    assert a.loglik == pytest.approx(b.loglik, abs=1e-8)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-6)


def test_fit_properties(sim_design):
    res = fit(sim_design)
    assert res.converged and res.vcov_available
    assert res.restrictions.residual(res.beta) < 1e-10
    assert np.all((res.p_values >= 0) & (res.p_values <= 1))
    k = res.free_vcov.shape[0] - len(res.coefficients.alpha)
    b0, N = reparameterize(res.restrictions, len(res.terms))
    np.testing.assert_allclose(res.structural_vcov, N @ res.free_vcov[:k, :k] @ N.T, atol=1e-15)
    assert res.n_censored == int(sim_design.censored.sum()) > 0


def test_restricted_fit_never_beats_unrestricted(sim_design):
    from teifrontier.inference import hypothesis_restrictions, restricted_set

    u = fit(sim_design)
    for name in ("CobbDouglas", "CRS", "NoTechChange"):
        rows = hypothesis_restrictions(name, sim_design.spec, sim_design.terms)
        r = fit(sim_design, restricted_set(u.restrictions, rows, sim_design.terms))
        assert r.loglik <= u.loglik + 1e-6
        assert r.restrictions.residual(r.beta) < 1e-10


def test_max_iterations_flagged(sim_design):
    res = fit(sim_design, options=OptimOptions(max_iter=1, polish_steps=0))
    assert not res.converged
    assert "maximum iterations" in res.message
    assert math.isfinite(res.loglik)


def test_singular_hessian_flagged(small_panel, small_cfg):
    # a Brexit column of zeros leaves its coefficient unidentified
    spec = replace(small_cfg.spec, include_brexit=True)
    obs = [replace(o, brexit_dummy=0) for o in small_panel.transformed]
    d = build_design(obs, spec, small_panel.dataset.firms)
    res = fit(d)
    assert res.converged
    assert not res.vcov_available
    assert "covariance unavailable" in res.message
    assert np.all(np.isnan(res.std_errors))


def test_fit_json_round_trip(sim_design, tmp_path):
    res = fit(sim_design)
    doc = json.loads(json.dumps(res.to_dict()))
    back = FitResult.from_dict(doc)
    np.testing.assert_array_equal(back.beta, res.beta)
    np.testing.assert_array_equal(back.structural_vcov, res.structural_vcov)
    assert back.loglik == res.loglik
    assert back.terms == res.terms and back.spec == res.spec
    assert json.dumps(back.to_dict()) == json.dumps(res.to_dict())


def mean_point_design(spec, firms, rows):
    from teifrontier.panel import TransformedObservation

    obs = []
    for ln_inputs in rows:
        obs.append(TransformedObservation(
            firms[0], 2012, 0.3, False, 0.0,
            {j: 0.0 for j in spec.input_names} | ln_inputs, 0.0, (0,) * (len(firms) - 1)))
    return build_design(obs, spec, firms)


def test_predict_linear_published_coefficients():
    coefs = airline_coefficients()
    spec = ModelSpec(heteroskedastic=False)
    d = mean_point_design(spec, coefs.terms.firms, [{}, {"K": 1.0}])
    mu = predict_linear(coefs, d)
    assert mu[0] == pytest.approx(0.297336, abs=1e-12)
    assert mu[1] == pytest.approx(0.297336 + 0.204451 + 0.5 * 0.231760, abs=1e-6)
    assert mu[1] == pytest.approx(0.617667, abs=1e-6)


def test_predict_linear_zero_and_mismatch(sim_design):
    zero = CoefficientSet(sim_design.terms, np.zeros(len(sim_design.terms)))
    np.testing.assert_array_equal(predict_linear(zero, sim_design), 0.0)
    other = CoefficientSet(TermIndex.build(ModelSpec()), np.zeros(len(TermIndex.build(ModelSpec()))))
    with pytest.raises(DimensionMismatch):
        predict_linear(other, sim_design)


def test_fit_is_deterministic(sim_design):
    a, b = fit(sim_design), fit(sim_design)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_latent_reproduced_by_row_evaluation(sim_panel, sim_cfg):
    rows = np.vstack([expand_row(o, sim_cfg.spec) for o in sim_panel.transformed])
    np.testing.assert_allclose(rows @ sim_panel.coefficients.beta, sim_panel.frontier_ln_distance,
                               atol=1e-12)
