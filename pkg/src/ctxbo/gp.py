"""Single-output Gaussian process regression with exact inference.

The posterior at a query x* is the usual Gaussian

    mean = k*^T (K + sn I)^-1 y
    var  = k** - k*^T (K + sn I)^-1 k*

computed through a Cholesky factor of K + sn I.  Hyperparameters are
fitted by multi-start maximization of the log marginal likelihood with
analytic gradients, in log-space.  Inputs can be normalized to the unit
box over a declared domain and outputs are standardized during fitting;
a directly constructed regressor applies no transforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .domain import BoxDomain
from .errors import NumericalError
from .kernels import (KernelSpec, kernel_matrix, kernel_matrix_with_grads,
                      n_params, pack_params, unpack_params)

JITTER_START_FRACTION = 1e-8
JITTER_MAX_FRACTION = 1e-4


@dataclass
class Dataset:
    """Training inputs X (N, D) and outputs Y (N,) or (N, Q)."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.outputs, dtype=float)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("inputs and outputs must have the same number of rows")
        if X.size and not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        if Y.size and not np.all(np.isfinite(Y)):
            raise ValueError("outputs must be finite")
        self.inputs = X
        self.outputs = Y

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass
class TrainConfig:
    """Bounds and restart budget for likelihood maximization.

    Bounds are in normalized-input / standardized-output units (the
    lengthscale bounds are relative to an input range of one).
    """

    lengthscale_bounds: tuple[float, float] = (1e-2, 1e2)
    signal_variance_bounds: tuple[float, float] = (1e-4, 1e4)
    noise_variance_bounds: tuple[float, float] = (1e-8, 1.0)
    restarts: int = 2
    maxiter: int = 40
    seed: int = 0


def chol_with_jitter(A: np.ndarray, signal_variance: float):
    """Lower Cholesky factor of A, adding diagonal jitter on failure.

    Jitter starts at 1e-8 * signal_variance and doubles; beyond
    1e-4 * signal_variance a NumericalError is raised.
    """
    try:
        return cholesky(A, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START_FRACTION * signal_variance
    limit = JITTER_MAX_FRACTION * signal_variance
    eye = np.eye(A.shape[0])
    while jitter <= limit:
        try:
            return cholesky(A + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise NumericalError(
        f"covariance not positive definite after jitter {limit:.3e}")


class GPRegressor:
    """Immutable zero-mean GP posterior over a fixed dataset.

    Construct directly with hyperparameters in raw data units (no
    transforms), or via :func:`gp_fit` which normalizes inputs and
    standardizes outputs before fitting.
    """

    def __init__(self, kernel: KernelSpec, noise_variance: float, data: Dataset,
                 input_domain: BoxDomain | None = None,
                 y_mean: float = 0.0, y_std: float = 1.0):
        if noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if data.n < 1:
            raise ValueError("GPRegressor needs at least one observation")
        if data.outputs.ndim != 1:
            raise ValueError("single-output GP expects a 1-D output vector")
        self.kernel = kernel
        self.noise_variance = float(noise_variance)
        self.data = data
        self.input_domain = input_domain
        self.y_mean = float(y_mean)
        self.y_std = float(y_std)

        self._Xn = self._transform_inputs(data.inputs)
        self._yn = (data.outputs - self.y_mean) / self.y_std
        K = kernel_matrix(kernel, self._Xn)
        A = K + self.noise_variance * np.eye(data.n)
        self._L, self.jitter = chol_with_jitter(A, kernel.effective_signal_variance)
        self._alpha = cho_solve((self._L, True), self._yn)

    # -- transforms ---------------------------------------------------------

    def _transform_inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.input_domain is None:
            return X
        return self.input_domain.normalize(X)

    # -- prediction ---------------------------------------------------------

    def predict_batch(self, X, clamp: bool = True):
        """Posterior means and variances at the rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.data.dim:
            raise ValueError("query dimension does not match training inputs")
        Xq = self._transform_inputs(X)
        Ks = kernel_matrix(self.kernel, Xq, self._Xn)          # (n, N)
        mean = Ks @ self._alpha
        v = solve_triangular(self._L, Ks.T, lower=True)        # (N, n)
        var = self.kernel.effective_signal_variance - np.sum(v * v, axis=0)
        if clamp:
            var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mean, (self.y_std ** 2) * var

    def predict(self, x, clamp: bool = True):
        """Posterior (mean, variance) at a single point."""
        mean, var = self.predict_batch(np.atleast_1d(np.asarray(x, float))[None, :],
                                       clamp=clamp)
        return float(mean[0]), float(var[0])

    def log_marginal_likelihood(self) -> float:
        """Gaussian log evidence of the (standardized) training outputs."""
        n = self.data.n
        return float(-0.5 * self._yn @ self._alpha
                     - np.log(np.diag(self._L)).sum()
                     - 0.5 * n * math.log(2.0 * math.pi))

    def covariance_residual(self) -> float:
        """Relative Frobenius error of L L^T against K + sn I (pre-jitter)."""
        A = kernel_matrix(self.kernel, self._Xn) + self.noise_variance * np.eye(self.data.n)
        return float(np.linalg.norm(self._L @ self._L.T - A) / max(np.linalg.norm(A), 1e-300))


# ---------------------------------------------------------------------------
# likelihood and fitting
# ---------------------------------------------------------------------------


def _lml_and_grad(params: np.ndarray, spec_template: KernelSpec, X: np.ndarray,
                  y: np.ndarray):
    """Log marginal likelihood and gradient in packed log-parameters.

    The packed vector is the kernel parameters followed by log noise
    variance.  Returns (-inf, zeros) when the covariance cannot be
    factored, which the maximizer treats as a rejected step.
    """
    kp = params[:-1]
    noise = float(np.exp(params[-1]))
    spec = unpack_params(spec_template, kp)
    n = X.shape[0]
    K, grads = kernel_matrix_with_grads(spec, X)
    A = K + noise * np.eye(n)
    try:
        L = cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf, np.zeros_like(params)
    alpha = cho_solve((L, True), y)
    lml = (-0.5 * y @ alpha - np.log(np.diag(L)).sum()
           - 0.5 * n * math.log(2.0 * math.pi))
    # d lml / d p = 0.5 tr((alpha alpha^T - A^-1) dA/dp)
    Ainv = cho_solve((L, True), np.eye(n))
    M = np.outer(alpha, alpha) - Ainv
    g = np.empty_like(params)
    for i, dK in enumerate(grads):
        g[i] = 0.5 * np.sum(M * dK)
    g[-1] = 0.5 * noise * np.trace(M)
    return float(lml), g


def _param_bounds(spec: KernelSpec, cfg: TrainConfig):
    k = n_params(spec)
    lo_ls, hi_ls = np.log(cfg.lengthscale_bounds[0]), np.log(cfg.lengthscale_bounds[1])
    lo_sv, hi_sv = np.log(cfg.signal_variance_bounds[0]), np.log(cfg.signal_variance_bounds[1])
    lo_nv, hi_nv = np.log(cfg.noise_variance_bounds[0]), np.log(cfg.noise_variance_bounds[1])
    bounds = [(lo_ls, hi_ls)] * (k - 1) + [(lo_sv, hi_sv)] + [(lo_nv, hi_nv)]
    return bounds


def gp_fit(data: Dataset, spec: KernelSpec, train_cfg: TrainConfig | None = None,
           input_domain: BoxDomain | None = None,
           initial_noise_variance: float = 1e-2) -> GPRegressor:
    """Fit hyperparameters by multi-start likelihood maximization.

    The passed spec provides the kernel family/structure and the initial
    hyperparameters (interpreted in normalized-input units).  The returned
    model never has a lower log marginal likelihood than the best restart's
    starting point.
    """
    cfg = train_cfg or TrainConfig()
    if data.n < 1:
        raise ValueError("cannot fit a GP to an empty dataset")

    domain = input_domain
    if domain is None:
        lo = data.inputs.min(axis=0)
        hi = data.inputs.max(axis=0)
        width = np.where(hi - lo < 1e-12, 1.0, hi - lo)
        domain = BoxDomain(lo, lo + width)
    Xn = domain.normalize(data.inputs)

    y = data.outputs
    y_mean = float(y.mean())
    y_std = float(y.std())
    if not np.isfinite(y_std) or y_std < 1e-12:
        y_std = 1.0
    yn = (y - y_mean) / y_std

    bounds = _param_bounds(spec, cfg)
    lo_b = np.array([b[0] for b in bounds])
    hi_b = np.array([b[1] for b in bounds])

    p0 = np.concatenate([pack_params(spec), [np.log(initial_noise_variance)]])
    p0 = np.clip(p0, lo_b, hi_b)

    rng = np.random.default_rng(cfg.seed)
    starts = [p0]
    for _ in range(max(cfg.restarts - 1, 0)):
        starts.append(rng.uniform(lo_b, hi_b))

    def neg(params):
        lml, g = _lml_and_grad(params, spec, Xn, yn)
        if not np.isfinite(lml):
            return 1e12, np.zeros_like(params)
        return -lml, -g

    best_p, best_lml = p0, _lml_and_grad(p0, spec, Xn, yn)[0]
    for s in starts:
        start_lml = _lml_and_grad(s, spec, Xn, yn)[0]
        if start_lml > best_lml:
            best_p, best_lml = s, start_lml
        res = minimize(neg, s, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": cfg.maxiter})
        cand_lml = _lml_and_grad(res.x, spec, Xn, yn)[0]
        if np.isfinite(cand_lml) and cand_lml > best_lml:
            best_p, best_lml = res.x, cand_lml

    fitted = unpack_params(spec, best_p[:-1])
    noise = float(np.exp(best_p[-1]))
    return GPRegressor(fitted, noise, data, input_domain=domain,
                       y_mean=y_mean, y_std=y_std)


def gp_predict(model: GPRegressor, x_star):
    """Functional alias for :meth:`GPRegressor.predict`."""
    return model.predict(x_star)


def log_marginal_likelihood(model: GPRegressor) -> float:
    return model.log_marginal_likelihood()
