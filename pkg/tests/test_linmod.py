import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from segsca import linmod
from segsca.errors import RankDeficiencyError, UndefinedCorrelationError, ValidationError
from segsca.linmod import (
    DesignMatrix, SampleMoments, correlation, fit, fit_fixed_effects, fit_pooled,
    fit_random_intercept,
)

from oracles import balanced_design, balanced_ml, dummy_ols, pooled_ols, zscore


def design(y, X, countries, names=None):
    X = np.asarray(X, float).reshape(len(y), -1)
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    return DesignMatrix(tuple(range(len(y))), np.asarray(countries), y, X, names)


def random_design(seed, n=40, g=4, k=3):
    rng = np.random.default_rng(seed)
    c = np.arange(n) % g
    X = rng.normal(size=(n, k)) + rng.normal(size=(g, k))[c]
    y = X @ rng.normal(size=k) + rng.normal(size=g)[c] + rng.normal(size=n)
    return y, X, c


def coefs(res, names):
    return np.array([res[n] for n in names])


# fixed effects


def test_exact_recovery():
    x = np.arange(12, dtype=float) ** 1.5
    c = np.repeat(["a", "b", "c"], 4)
    y = 2 * x + np.array([5.0, -1.0, 3.0])[np.repeat([0, 1, 2], 4)]
    res = fit_fixed_effects(design(y, x, c), standardize=False)
    assert res["x0"] == pytest.approx(2.0, abs=1e-12)
    assert res.rss == pytest.approx(0, abs=1e-18)


def test_matches_dummy_oracle():
    y, X, c = random_design(0)
    res = fit_fixed_effects(design(y, X, c), standardize=False)
    assert np.allclose(coefs(res, ("x0", "x1", "x2")), dummy_ols(y, X, c), rtol=0, atol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_matches_dummy_oracle_random(seed):
    rng = np.random.default_rng(seed)
    g, k = int(rng.integers(2, 7)), int(rng.integers(1, 5))
    y, X, c = random_design(seed, n=int(rng.integers(g + k + 3, 80)), g=g, k=k)
    names = tuple(f"x{j}" for j in range(k))
    raw = fit_fixed_effects(design(y, X, c), standardize=False)
    assert np.allclose(coefs(raw, names), dummy_ols(y, X, c), atol=1e-8)
    std = fit_fixed_effects(design(y, X, c))
    assert np.allclose(coefs(std, names), dummy_ols(y, zscore(X), c), atol=1e-8)


def test_no_within_variation_names_column():
    c = np.repeat([0, 1, 2], 5)
    y = np.random.default_rng(1).normal(size=15)
    X = np.column_stack([np.arange(15.0), np.array([1.0, 2.0, 3.0])[c]])
    with pytest.raises(RankDeficiencyError) as exc:
        fit_fixed_effects(design(y, X, c, ("ok", "country_mean")))
    assert exc.value.column == "country_mean"


def test_collinear_columns():
    rng = np.random.default_rng(2)
    c = np.arange(20) % 2
    a = rng.normal(size=20)
    X = np.column_stack([a, 2 * a])
    with pytest.raises(RankDeficiencyError, match="collinear"):
        fit_fixed_effects(design(rng.normal(size=20), X, c))


def test_constant_column_rejected_when_standardizing():
    with pytest.raises(RankDeficiencyError):
        fit_pooled(design(np.arange(5.0), np.ones(5), [0, 0, 1, 1, 1]))


def test_too_few_rows():
    with pytest.raises(RankDeficiencyError):
        fit_fixed_effects(design(np.arange(4.0), np.random.default_rng(0).normal(size=(4, 3)), [0, 0, 1, 1]))


def test_invalid_design():
    with pytest.raises(ValidationError):
        design(np.array([1.0, np.nan]), [1.0, 2.0], [0, 1])
    with pytest.raises(ValidationError):
        fit_fixed_effects(design(np.arange(4.0), np.arange(4.0), [0, 0, 0, 0]))
    with pytest.raises(ValidationError):
        fit(design(np.arange(4.0), np.arange(4.0), [0, 0, 1, 1]), "ridge")


def test_pooled_matches_lstsq():
    y, X, c = random_design(3)
    res = fit_pooled(design(y, X, c), standardize=False)
    assert np.allclose(coefs(res, ("x0", "x1", "x2")), pooled_ols(y, X), atol=1e-10)


def test_from_frame():
    frame = pd.DataFrame({"fua_id": ["a", "b", "c", "d"], "country": ["X", "X", "Y", "Y"],
                          "y": [1.0, 2.0, 3.0, 5.0], "v": [0.0, 1.0, 0.0, 2.0]})
    d = DesignMatrix.from_frame(frame, "y", ["v"])
    assert d.row_ids == ("a", "b", "c", "d")
    assert d.column("v").tolist() == [0.0, 1.0, 0.0, 2.0]
    assert d.take([2, 3]).n == 2


# random intercept


def test_zero_intercept_variance_equals_pooled():
    # country means of y lie exactly on a line in the country means of x, so the
    # between regression has no residual and s2u clamps to 0
    rng = np.random.default_rng(4)
    c = np.repeat([0, 1, 2, 3, 4], 6)
    x = rng.normal(size=30) + rng.normal(size=5)[c]
    y = 0.7 * x + rng.normal(size=30)
    xbar, ybar = np.bincount(c, x)[c] / 6, np.bincount(c, y)[c] / 6
    y += 0.7 * xbar - ybar
    d = design(y, x, c)
    ri = fit_random_intercept(d)
    assert ri.sigma2_u == 0.0 and not ri.warnings
    assert ri["x0"] == pytest.approx(fit_pooled(d)["x0"], abs=1e-12)


def test_collinear_country_means_fall_back():
    rng = np.random.default_rng(4)
    c = np.repeat([0, 1, 2, 3, 4], 6)
    x = rng.normal(size=30)
    x -= np.bincount(c, x)[c] / 6
    y = 0.7 * x + rng.normal(size=30)
    d = design(y, x, c)
    ri = fit_random_intercept(d)
    assert ri.warnings
    assert ri["x0"] == pytest.approx(fit_pooled(d)["x0"], abs=1e-12)
    moments = SampleMoments(d.X, y, c, "random_intercept")
    assert moments.coef([0], 0) == pytest.approx(ri["x0"], abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_theta_limits(seed):
    y, X, c = random_design(seed, n=60, g=6, k=2)
    d = design(y, X, c)
    names = ("x0", "x1")
    assert np.allclose(coefs(fit_random_intercept(d, theta=0.0), names),
                       coefs(fit_pooled(d), names), atol=1e-8)
    within = fit_random_intercept(d, theta=1.0)
    assert within.intercept is None
    assert np.allclose(coefs(within, names), coefs(fit_fixed_effects(d), names), atol=1e-8)


def test_theta_mapping_hook():
    y, X, c = random_design(7, n=30, g=3, k=1)
    d = design(y, X, c)
    a = fit_random_intercept(d, theta={0: 0.3, 1: 0.3, 2: 0.3})
    b = fit_random_intercept(d, theta=0.3)
    assert a["x0"] == b["x0"]


def test_variance_components_recovered():
    y, X, c = balanced_design(11, 40, 25, 2, sigma_u=1.0, sigma_e=0.5)
    res = fit_random_intercept(design(y, X, c))
    assert res.sigma2_e == pytest.approx(0.25, rel=0.15)
    assert res.sigma2_u == pytest.approx(1.0, rel=0.5)


def test_fallback_to_pooled_with_warning():
    # three countries and two covariates leave no between degrees of freedom
    y, X, c = balanced_design(0, 3, 10, 2)
    d = design(y, X, c)
    res = fit_random_intercept(d)
    assert res.warnings and "pooled" in res.warnings[0]
    assert np.allclose(coefs(res, ("x0", "x1")), coefs(fit_pooled(d), ("x0", "x1")), atol=1e-12)


def test_gls_step_matches_ml_oracle_at_ml_components():
    y, X, c = balanced_design(5, 3, 10, 1)
    beta_ml, lam = balanced_ml(y, zscore(X), c, 10)
    theta = 1 - np.sqrt(1 / (1 + 10 * lam))
    res = fit_random_intercept(design(y, X, c), theta=theta)
    assert res["x0"] == pytest.approx(beta_ml[0], abs=1e-8)


@pytest.mark.xfail(strict=True, reason="moment-based variance components differ from ML with three "
                                        "countries; gap recorded in the decisions ledger")
def test_fgls_close_to_ml_three_countries():
    worst = 0.0
    for seed in range(10):
        y, X, c = balanced_design(seed, 3, 10, 1)
        beta_ml, _ = balanced_ml(y, zscore(X), c, 10)
        got = fit_random_intercept(design(y, X, c))["x0"]
        worst = max(worst, abs(got - beta_ml[0]) / abs(beta_ml[0]))
    assert worst <= 1e-3


# correlation


def test_correlation_examples():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    assert correlation(x, x) == pytest.approx(1.0)
    assert correlation(x, -x) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelationError):
        correlation(x, np.ones(4))


def test_partial_correlation_matches_residuals():
    x = np.array([1.0, 2.0, 3.0, 4.0, 6.0])
    y = np.array([2.0, 1.0, 4.0, 3.0, 7.0])
    z = np.array([0.5, 1.0, 0.0, 2.0, 1.5])
    Z = np.column_stack([np.ones(5), z])
    rx = x - Z @ np.linalg.lstsq(Z, x, rcond=None)[0]
    ry = y - Z @ np.linalg.lstsq(Z, y, rcond=None)[0]
    assert correlation(x, y, partial_on=z) == pytest.approx(np.corrcoef(rx, ry)[0, 1], abs=1e-12)


# Gram path


@pytest.mark.parametrize("estimator", ["fixed_effects", "random_intercept", "pooled"])
@pytest.mark.parametrize("standardize", [True, False])
def test_gram_path_matches_qr(estimator, standardize):
    rng = np.random.default_rng(9)
    y, X, c = random_design(9, n=120, g=12, k=5)
    moments = SampleMoments(X, y, c, estimator, standardize)
    for cols in ([0], [0, 2], [1, 3, 4], [0, 1, 2, 3, 4]):
        sub = design(y, X[:, cols], c)
        ref = fit(sub, estimator, standardize)
        for pos, j in enumerate(cols):
            assert moments.coef(cols, j) == pytest.approx(ref[f"x{pos}"], abs=1e-10)
        # adjusted outcome: y - a * x_j in raw units
        j = cols[0]
        a = float(rng.normal())
        ref_adj = fit(sub.with_outcome(y - a * X[:, j]), estimator, standardize)
        assert moments.coef(cols, j, adjust=(j, a)) == pytest.approx(ref_adj["x0"], abs=1e-10)


def test_gram_path_not_estimable_is_nan():
    c = np.repeat([0, 1, 2], 4)
    X = np.column_stack([np.arange(12.0), np.array([1.0, 2.0, 3.0])[c], np.ones(12)])
    moments = SampleMoments(X, np.arange(12.0) ** 2, c, "fixed_effects")
    assert np.isnan(moments.coef([0, 1], 0))
    assert np.isnan(moments.coef([0, 2], 0))


@pytest.mark.parametrize("estimator", ["fixed_effects", "random_intercept"])
def test_counterfactual_refit_is_zero(estimator):
    y, X, c = random_design(12, n=90, g=9, k=3)
    d = design(y, X, c)
    b = fit(d, estimator, standardize=True)["x1"]
    a_raw = b / X[:, 1].std()
    cf = fit(d.with_outcome(y - a_raw * X[:, 1]), estimator, standardize=True)
    assert abs(cf["x1"]) < 1e-10
    moments = SampleMoments(X, y, c, estimator)
    assert abs(moments.coef([0, 1, 2], 1, adjust=(1, a_raw))) < 1e-10


def test_within_tolerance_constant():
    assert linmod.WITHIN_TOL > 0
