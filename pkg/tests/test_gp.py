import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbo.domain import BoxDomain
from ctxbo.errors import NumericalError
from ctxbo.gp import (Dataset, GPRegressor, TrainConfig, chol_with_jitter,
                      gp_fit, gp_predict, log_marginal_likelihood)
from ctxbo.kernels import kernel_matrix, matern32, squared_exponential

from conftest import gauss_logdet, gauss_solve


def _direct_model(X, y, spec, noise):
    """GP without input/output transforms: raw posterior formulas apply."""
    return GPRegressor(spec, noise, Dataset(X, y))


# -- prediction ---------------------------------------------------------------


def test_exact_interpolation_single_point():
    m = _direct_model(np.array([[0.0]]), np.array([1.0]),
                      matern32(np.array([1.0]), 1.0), 0.0)
    mean, var = m.predict([0.0])
    assert mean == pytest.approx(1.0, abs=1e-9)
    assert abs(var) <= 1e-9


def test_prior_recovery_far_from_data():
    m = _direct_model(np.array([[0.0]]), np.array([1.0]),
                      matern32(np.array([1.0]), 1.0), 0.0)
    mean, var = m.predict([1e6])
    assert mean == pytest.approx(0.0, abs=1e-12)
    assert var == pytest.approx(1.0, abs=1e-12)


def test_predict_matches_dense_oracle(rng):
    for _ in range(10):
        n, d = 3, 2
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        spec = squared_exponential(np.full(d, 0.9), 1.4)
        noise = 0.07
        m = _direct_model(X, y, spec, noise)
        xq = rng.normal(size=d)
        mean, var = m.predict(xq)

        K = kernel_matrix(spec, X) + noise * np.eye(n)
        ks = kernel_matrix(spec, xq[None, :], X)[0]
        mean_o = ks @ gauss_solve(K, y)
        var_o = spec.signal_variance - ks @ gauss_solve(K, ks)
        assert mean == pytest.approx(mean_o, abs=1e-8)
        assert var == pytest.approx(var_o, abs=1e-8)


def test_predict_dimension_mismatch():
    m = _direct_model(np.array([[0.0, 0.0]]), np.array([1.0]),
                      matern32(np.array([1.0, 1.0])), 0.1)
    with pytest.raises(ValueError):
        m.predict([0.0])


def test_variance_clamped_nonnegative(rng):
    X = rng.normal(size=(8, 1))
    y = rng.normal(size=8)
    m = _direct_model(X, y, matern32(np.array([0.5]), 2.0), 1e-9)
    _, var = m.predict_batch(X)
    assert np.all(var >= 0.0)
    _, raw = m.predict_batch(X, clamp=False)
    assert np.all(raw >= -1e-10)


# -- log marginal likelihood ---------------------------------------------------


def test_lml_scalar_case():
    # unit covariance, single zero observation: -log(2 pi) / 2
    m = _direct_model(np.array([[0.0]]), np.array([0.0]),
                      matern32(np.array([1.0]), 1.0), 0.0)
    assert m.log_marginal_likelihood() == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_lml_two_point_diagonal():
    # two far-apart points, unit signal: covariance is the identity
    m = _direct_model(np.array([[0.0], [1e8]]), np.array([0.0, 0.0]),
                      matern32(np.array([1.0]), 1.0), 0.0)
    assert m.log_marginal_likelihood() == pytest.approx(-math.log(2 * math.pi))


def test_lml_matches_dense_oracle(rng):
    n, d = 4, 2
    X = rng.normal(size=(n, d))
    y = rng.normal(size=n)
    spec = matern32(np.full(d, 0.8), 1.6)
    noise = 0.05
    m = _direct_model(X, y, spec, noise)
    A = kernel_matrix(spec, X) + noise * np.eye(n)
    expected = (-0.5 * y @ gauss_solve(A, y) - 0.5 * gauss_logdet(A)
                - 0.5 * n * math.log(2 * math.pi))
    assert m.log_marginal_likelihood() == pytest.approx(expected, abs=1e-8)
    assert log_marginal_likelihood(m) == m.log_marginal_likelihood()


# -- fitting -------------------------------------------------------------------


def test_fit_improves_on_initial_likelihood(rng):
    X = np.linspace(0, 4, 5)[:, None]
    true = GPRegressor(matern32(np.array([0.7]), 1.0), 1e-6,
                       Dataset(np.array([[0.0]]), np.array([0.0])))
    y = rng.normal(size=5) * 0.8 + np.sin(X[:, 0])
    spec0 = matern32(np.array([0.3]), 1.0)
    cfg = TrainConfig(restarts=4, seed=1)
    fit = gp_fit(Dataset(X, y), spec0, cfg)

    dom = fit.input_domain
    init = GPRegressor(spec0, 1e-2, Dataset(X, y), input_domain=dom,
                       y_mean=fit.y_mean, y_std=fit.y_std)
    assert fit.log_marginal_likelihood() >= init.log_marginal_likelihood() - 1e-9


def test_fit_single_point_predicts_its_mean():
    fit = gp_fit(Dataset(np.array([[0.0]]), np.array([0.0])),
                 matern32(np.array([0.5])), TrainConfig(restarts=2))
    for x in (-3.0, 0.0, 7.0):
        mean, _ = fit.predict([x])
        assert mean == pytest.approx(0.0, abs=1e-9)
    cfg = TrainConfig()
    tol = 1e-12  # log-space bounds round-trip through exp
    assert cfg.lengthscale_bounds[0] * (1 - tol) <= fit.kernel.lengthscales[0] \
        <= cfg.lengthscale_bounds[1] * (1 + tol)
    assert cfg.noise_variance_bounds[0] * (1 - tol) <= fit.noise_variance \
        <= cfg.noise_variance_bounds[1] * (1 + tol)


def test_fit_recovers_noise_bracket(rng):
    # grid-search oracle over noise: the fitted value must sit in the
    # bracket where the gridded likelihood peaks
    X = np.linspace(0, 6, 20)[:, None]
    y = np.sin(X[:, 0]) + rng.normal(0, 0.1, 20)
    fit = gp_fit(Dataset(X, y), matern32(np.array([0.3])), TrainConfig(restarts=3))
    assert 1e-4 <= fit.noise_variance <= 1e-1

    grid = np.logspace(-6, 0, 25)
    lmls = []
    for nv in grid:
        m = GPRegressor(fit.kernel, nv, fit.data, input_domain=fit.input_domain,
                        y_mean=fit.y_mean, y_std=fit.y_std)
        lmls.append(m.log_marginal_likelihood())
    best = grid[int(np.argmax(lmls))]
    assert 1e-4 <= best <= 1e-1


def test_fit_empty_dataset_rejected():
    with pytest.raises(ValueError):
        gp_fit(Dataset(np.empty((0, 1)), np.empty(0)), matern32(np.array([1.0])))


def test_interpolation_invariant_zero_noise(rng):
    X = rng.uniform(0, 1, size=(6, 2))
    y = rng.normal(size=6)
    m = _direct_model(X, y, matern32(np.array([0.6, 0.6]), 1.2), 0.0)
    means, _ = m.predict_batch(X)
    np.testing.assert_allclose(means, y, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10 ** 6))
def test_variance_never_increases_with_data(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n + 1, 2))
    y = rng.normal(size=n + 1)
    spec = matern32(np.array([0.9, 0.9]), 1.1)
    small = _direct_model(X[:n], y[:n], spec, 0.01)
    big = _direct_model(X, y, spec, 0.01)
    queries = rng.uniform(-2, 2, size=(5, 2))
    _, v_small = small.predict_batch(queries)
    _, v_big = big.predict_batch(queries)
    assert np.all(v_big <= v_small + 1e-8)


def test_factorization_reproduces_covariance(rng):
    X = rng.normal(size=(12, 2))
    y = rng.normal(size=12)
    m = _direct_model(X, y, matern32(np.array([0.7, 1.3]), 2.2), 0.03)
    assert m.covariance_residual() <= 1e-8


def test_jitter_limits():
    # an exactly singular matrix gets rescued by jitter
    A = np.ones((3, 3))
    L, jitter = chol_with_jitter(A, 1.0)
    assert jitter > 0
    np.testing.assert_allclose(L @ L.T, A + jitter * np.eye(3), atol=1e-12)
    # an indefinite matrix cannot be rescued within the jitter budget
    B = np.array([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(NumericalError):
        chol_with_jitter(B, 1.0)


def test_normalized_fit_predicts_well(rng):
    dom = BoxDomain(np.array([0.0]), np.array([10.0]))
    X = rng.uniform(0, 10, size=(25, 1))
    y = np.cos(X[:, 0]) + rng.normal(0, 0.05, 25)
    fit = gp_fit(Dataset(X, y), matern32(np.array([0.2])),
                 TrainConfig(restarts=3), input_domain=dom)
    xq = np.linspace(0.5, 9.5, 15)[:, None]
    means, _ = fit.predict_batch(xq)
    assert np.sqrt(np.mean((means - np.cos(xq[:, 0])) ** 2)) < 0.15


def test_gp_predict_alias():
    m = _direct_model(np.array([[0.0]]), np.array([2.0]),
                      matern32(np.array([1.0]), 1.0), 0.0)
    assert gp_predict(m, [0.0]) == m.predict([0.0])
