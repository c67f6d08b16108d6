import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_observation
from teifrontier.errors import RankDeficientRestrictions
from teifrontier.panel import TransformedObservation
from teifrontier.translog import (
    LinearRestriction,
    ModelSpec,
    RestrictionSet,
    TermIndex,
    build_restrictions,
    expand_row,
    reparameterize,
)

SPEC = ModelSpec(include_dummies=False)
NAMES = SPEC.input_names


def at(ln_inputs=None, ln_y=0.0, t=0.0, dummies=(), brexit=0, covid=0):
    ln_inputs = {j: 0.0 for j in NAMES} | (ln_inputs or {})
    return TransformedObservation("x", 2012, 0.0, True, ln_y, ln_inputs, t, tuple(dummies), brexit, covid)


def direct_ln_distance(c: dict, obs, names=NAMES, trend_squared=False):
    """Literal evaluation of the translog sum, with the double sum over all
    ordered input pairs and a symmetric coefficient matrix."""
    lx, ly, t = obs.ln_inputs, obs.ln_output, obs.trend

    def b(j, k):
        return c.get(f"{j}*{k}", c.get(f"{k}*{j}", 0.0))

    v = c["const"] + sum(c[j] * lx[j] for j in names) + c["y"] * ly + c["t"] * t
    v += 0.5 * sum(b(j, k) * lx[j] * lx[k] for j in names for k in names)
    v += sum(c[f"{j}*y"] * lx[j] * ly for j in names)
    v += sum(c[f"{j}*t"] * lx[j] * t for j in names)
    v += 0.5 * c["y*y"] * ly**2 + c["t*y"] * t * ly
    if trend_squared:
        v += 0.5 * c["t*t"] * t**2
    v += sum(c.get(f"z:F{i + 1}", 0.0) * d for i, d in enumerate(obs.firm_dummies, start=1))
    v += c.get("brexit", 0.0) * obs.brexit_dummy + c.get("covid", 0.0) * obs.covid_dummy
    return v


def test_term_index_layout():
    terms = TermIndex.build(ModelSpec(), ["F1", "F2", "F3"])
    assert terms.keys[:6] == ("const", "K", "L", "E", "y", "t")
    assert terms.keys[6:12] == ("K*K", "K*L", "K*E", "L*L", "L*E", "E*E")
    assert terms.keys[-4:] == ("z:F2", "z:F3", "brexit", "covid")
    assert terms.label("K*K") == ".5 (ln K)²"
    assert terms.label("K*L") == "ln K ln L"
    assert terms.label("z:F3") == "z2"
    assert terms.pair_key("E", "K") == "K*E"
    assert len(set(terms.keys)) == len(terms)
    assert "t*t" not in terms
    assert "t*t" in TermIndex.build(ModelSpec(include_trend_squared=True))


def test_mean_point_row():
    row = expand_row(at(), SPEC)
    assert row[0] == 1.0
    assert np.all(row[1:] == 0.0)


def test_single_active_input():
    terms = TermIndex.build(SPEC)
    row = expand_row(at({"K": 1.0}), SPEC)
    expected = np.zeros(len(terms))
    expected[terms.index("const")] = 1.0
    expected[terms.index("K")] = 1.0
    expected[terms.index("K*K")] = 0.5
    np.testing.assert_array_equal(row, expected)


def test_folded_cross_term_matches_direct_sum(rng):
    terms = TermIndex.build(SPEC)
    row = expand_row(at({"K": 1.0, "L": 2.0}), SPEC)
    assert row[terms.index("K*L")] == 2.0
    beta = rng.normal(size=len(terms))
    c = dict(zip(terms.keys, beta))
    assert row @ beta == pytest.approx(direct_ln_distance(c, at({"K": 1.0, "L": 2.0})), abs=1e-12)


@pytest.mark.parametrize("trend_squared", [False, True])
def test_expand_row_matches_direct_evaluation(rng, trend_squared):
    spec = ModelSpec(include_trend_squared=trend_squared)
    firms = ["F1", "F2", "F3", "F4"]
    terms = TermIndex.build(spec, firms)
    for _ in range(200):
        obs = random_observation(rng, n_dummies=3)
        beta = rng.normal(size=len(terms))
        c = dict(zip(terms.keys, beta))
        direct = direct_ln_distance(c, obs, trend_squared=trend_squared)
        assert expand_row(obs, spec) @ beta == pytest.approx(direct, abs=1e-12)


def test_homogeneity_row_count_and_rank():
    terms = TermIndex.build(ModelSpec(), ["a", "b"])
    rs = build_restrictions(ModelSpec(), terms)
    assert rs.rank == 6
    assert np.linalg.matrix_rank(rs.R) == 6
    assert rs.r.tolist() == [1.0, 0, 0, 0, 0, 0]


def test_duplicate_extra_restriction_rejected():
    spec = ModelSpec(extra_restrictions=(LinearRestriction.fix("y", -1.0),) * 2)
    with pytest.raises(RankDeficientRestrictions):
        build_restrictions(spec, TermIndex.build(spec))


def test_implied_extra_restriction_rejected():
    # already implied by homogeneity
    spec = ModelSpec(extra_restrictions=(LinearRestriction.of({"K": 1, "L": 1, "E": 1}, 1.0),))
    with pytest.raises(RankDeficientRestrictions):
        build_restrictions(spec, TermIndex.build(spec))


def test_crs_extra_row():
    spec = ModelSpec(extra_restrictions=(LinearRestriction.fix("y", -1.0),))
    terms = TermIndex.build(spec)
    rs = build_restrictions(spec, terms)
    assert rs.rank == 7
    assert rs.r[-1] == -1.0
    assert rs.R[-1, terms.index("y")] == 1.0


def test_reparameterize_pins_one_coordinate():
    R = np.zeros((1, 4))
    R[0, 2] = 1.0
    b0, N = reparameterize(RestrictionSet(R, [0.0]), 4)
    np.testing.assert_array_equal(b0, np.zeros(4))
    assert N.shape == (4, 3)
    np.testing.assert_allclose(N[2], 0.0, atol=1e-15)
    np.testing.assert_allclose(N.T @ N, np.eye(3), atol=1e-12)


def test_reparameterize_empty():
    b0, N = reparameterize(RestrictionSet.empty(5), 5)
    np.testing.assert_array_equal(b0, np.zeros(5))
    np.testing.assert_array_equal(N, np.eye(5))


def test_reparameterize_homogeneity(rng):
    terms = TermIndex.build(ModelSpec(), ["a", "b", "c"])
    rs = build_restrictions(ModelSpec(), terms)
    b0, N = reparameterize(rs, len(terms))
    assert N.shape == (len(terms), len(terms) - 6)
    np.testing.assert_allclose(N.T @ N, np.eye(N.shape[1]), atol=1e-12)
    for _ in range(100):
        beta = b0 + N @ rng.normal(scale=3.0, size=N.shape[1])
        assert np.max(np.abs(rs.R @ beta - rs.r)) < 1e-12
        assert sum(beta[terms.index(j)] for j in "KLE") == pytest.approx(1.0, abs=1e-12)


def test_extended_drops_implied_rows_and_rejects_contradictions():
    terms = TermIndex.build(SPEC)
    rs = build_restrictions(SPEC, terms)
    rows = np.zeros((3, len(terms)))
    for i, k in enumerate(["K*y", "L*y", "E*y"]):
        rows[i, terms.index(k)] = 1.0
    ext = rs.extended(rows, np.zeros(3))
    assert ext.rank == rs.rank + 2
    with pytest.raises(RankDeficientRestrictions):
        rs.extended(rows, [0.0, 0.0, 1.0])
    assert ext.contains(rs) and not rs.contains(ext)


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    theta_seed=st.integers(0, 2**32 - 1),
    lx=st.tuples(finite, finite, finite),
    ly=finite,
    t=st.integers(0, 9),
    lam=st.sampled_from([0.5, 2.0, 10.0]),
)
def test_homogeneity_degree_one(theta_seed, lx, ly, t, lam):
    terms = TermIndex.build(SPEC)
    b0, N = reparameterize(build_restrictions(SPEC, terms), len(terms))
    beta = b0 + N @ np.random.default_rng(theta_seed).normal(size=N.shape[1])
    base = at(dict(zip(NAMES, lx)), ly, float(t))
    scaled = at({j: v + np.log(lam) for j, v in zip(NAMES, lx)}, ly, float(t))
    diff = expand_row(scaled, SPEC) @ beta - expand_row(base, SPEC) @ beta
    assert diff == pytest.approx(np.log(lam), abs=1e-10)
