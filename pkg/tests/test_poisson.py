import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from climlag.core_data import CASE_LAG_COLUMN
from climlag.errors import ColumnMismatch, Diverged, RankDeficient, SchemaError
from climlag.models.poisson import fit_irls, from_coefficients, poisson_loglik, predict


def _design(rng, n=40, k=2):
    X = rng.normal(size=(n, k))
    mu = np.exp(1.5 + X @ np.linspace(0.4, -0.3, k))
    return X, rng.poisson(mu).astype(float)


def test_intercept_only_is_log_mean():
    y = np.array([3, 0, 5, 2, 7, 1, 4.0])
    fit = fit_irls(np.zeros((7, 0)), y)
    assert fit.beta0 == pytest.approx(math.log(y.mean()), abs=1e-10)
    assert fit.converged


def test_binary_covariate_closed_form():
    x = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1.0])
    y = np.array([2, 3, 1, 4, 9, 7, 8, 6, 10.0])
    fit = fit_irls(x[:, None], y)
    expected = math.log(y[x == 1].mean()) - math.log(y[x == 0].mean())
    assert fit.betas[0] == pytest.approx(expected, abs=1e-8)
    assert fit.beta0 == pytest.approx(math.log(y[x == 0].mean()), abs=1e-8)


def test_two_predictor_fit_matches_likelihood_grid():
    rng = np.random.default_rng(21)
    n = 12
    X = rng.uniform(0, 1, size=(n, 2))
    y = rng.poisson(np.exp(1.0 + 0.8 * X[:, 0] - 0.6 * X[:, 1])).astype(float)
    fit = fit_irls(X, y)

    def best_on_grid(centre, half, step):
        axes = [np.arange(c - half, c + half + step / 2, step) for c in centre]
        b0, b1, b2 = np.meshgrid(*axes, indexing="ij")
        eta = b0[..., None] + b1[..., None] * X[:, 0] + b2[..., None] * X[:, 1]
        ll = np.sum(y * eta - np.exp(eta), axis=-1)
        i = np.unravel_index(np.argmax(ll), ll.shape)
        return np.array([b0[i], b1[i], b2[i]])

    coarse = best_on_grid(np.zeros(3), 4.0, 0.05)
    fine = best_on_grid(coarse, 0.1, 1e-3)
    est = np.array([fit.beta0, *fit.betas])
    np.testing.assert_allclose(est, fine, atol=2e-3)


def test_score_equation_at_optimum(rng):
    X, y = _design(rng)
    fit = fit_irls(X, y)
    mu = predict(fit, X)
    assert abs(np.sum(y - mu)) <= 1e-6 * y.sum()


def test_loglik_nondecreasing(rng):
    X, y = _design(rng, n=30, k=3)
    fit = fit_irls(X, y)
    path = np.array(fit.loglik_path)
    assert len(path) >= 2
    assert np.all(np.diff(path) >= -1e-12 * np.maximum(1.0, np.abs(path[:-1])))
    assert fit.loglik == pytest.approx(poisson_loglik(y, predict(fit, X)), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.01, 100.0), j=st.integers(0, 1), seed=st.integers(0, 10_000))
def test_column_rescaling(a, j, seed):
    X, y = _design(np.random.default_rng(seed), n=30)
    base = fit_irls(X, y)
    Xs = X.copy()
    Xs[:, j] *= a
    scaled = fit_irls(Xs, y)
    assert scaled.betas[j] == pytest.approx(base.betas[j] / a, rel=1e-8, abs=1e-12)
    np.testing.assert_allclose(predict(scaled, Xs), predict(base, X), rtol=1e-8)


def test_standardized_and_raw_coefficients_agree(rng):
    X, y = _design(rng)
    fit = fit_irls(X, y)
    eta_raw = fit.beta0 + X @ fit.betas
    np.testing.assert_allclose(np.exp(eta_raw), predict(fit, X), rtol=1e-10)
    rows = fit.coefficient_rows()
    assert [r[0] for r in rows] == ["intercept", "x0", "x1"]


def test_mpr2_with_zero_case_lag_reproduces_mpr1(rng):
    X, y = _design(rng)
    lag = np.concatenate([[y[0]], y[:-1]])
    X2 = np.column_stack([X, lag])
    cols = ("a", "b", CASE_LAG_COLUMN)
    m1 = fit_irls(X, y, "MPR1", columns=("a", "b"))
    m2 = fit_irls(X2, y, "MPR2", columns=cols, case_lag_coef=0.0)
    np.testing.assert_array_equal(m2.beta_std[:-1], m1.beta_std)
    assert m2.c == 0.0
    assert m2.n_params == m1.n_params + 1


def test_mpr1_drops_case_lag_column(rng):
    X, y = _design(rng)
    X2 = np.column_stack([X, y])
    fit = fit_irls(X2, y, "MPR1", columns=("a", "b", CASE_LAG_COLUMN))
    assert fit.columns == ("a", "b")


def test_mpr2_requires_case_lag_column(rng):
    X, y = _design(rng)
    with pytest.raises(SchemaError):
        fit_irls(X, y, "MPR2", columns=("a", "b"))


def test_recursive_prediction_feeds_back(rng):
    X, y = _design(rng)
    lag = np.concatenate([[y[0]], y[:-1]])
    X2 = np.column_stack([X, lag])
    fit = fit_irls(X2, y, "MPR2", columns=("a", "b", CASE_LAG_COLUMN))
    rec = predict(fit, X2[:5], recursive=True)
    assert rec[0] == pytest.approx(predict(fit, X2[:1])[0])
    row = X2[1].copy()
    row[-1] = rec[0]
    assert rec[1] == pytest.approx(predict(fit, row[None, :])[0])


def test_rank_deficient():
    X = np.column_stack([np.arange(10.0), 2 * np.arange(10.0)])
    with pytest.raises(RankDeficient):
        fit_irls(X, np.arange(10.0))
    with pytest.raises(RankDeficient):
        fit_irls(np.ones((10, 1)), np.arange(10.0))


def test_rejects_non_count_targets():
    with pytest.raises(SchemaError):
        fit_irls(np.arange(5.0)[:, None], [1, 2, 3, 4, -1])
    with pytest.raises(SchemaError):
        fit_irls(np.arange(5.0)[:, None], [1, 2, 3, 4, 1.5])


def test_separation_diverges():
    # a group with all-zero counts pushes its linear predictor to -infinity
    x = np.r_[np.zeros(5), np.ones(5)]
    y = np.r_[np.zeros(5), np.full(5, 3.0)]
    with pytest.raises(Diverged):
        fit_irls(x[:, None], y)


def test_predict_examples():
    zero = from_coefficients(0.0, [0.0, 0.0])
    np.testing.assert_array_equal(predict(zero, np.ones((3, 2))), np.ones(3))
    assert predict(from_coefficients(math.log(100.0)), np.zeros((2, 0)))[0] == pytest.approx(100.0)
    hand = from_coefficients(0.302585, [1.0])
    assert predict(hand, [[2.0]])[0] == pytest.approx(10.0, abs=1e-4)
    assert math.exp(2.302585) == pytest.approx(10.0, abs=1e-5)


def test_predict_column_mismatch():
    with pytest.raises(ColumnMismatch):
        predict(from_coefficients(0.0, [1.0, 2.0]), np.ones((3, 3)))
