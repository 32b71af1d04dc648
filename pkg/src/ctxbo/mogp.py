"""Multi-output GP regression with an intrinsic coregionalization model.

The covariance between outputs q, q' at inputs x_i, x_j is
B[q, q'] * k(x_i, x_j) for a shared base kernel k and a symmetric PSD
output-correlation matrix B = A A^T + diag(d).

Stacking convention: the joint observation vector places all Q outputs of
observation i contiguously, i.e. stacked index (i, q) -> i*Q + q.  Under
this layout the joint covariance assembled with np.kron(K, B) has entries
kron(K, B)[(i,q), (j,q')] = B[q,q'] * k(x_i, x_j), which is the usual
Kronecker-structured model up to the standard permutation between the
two stacking orders.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize

from .domain import BoxDomain
from .errors import NumericalError
from .gp import Dataset, TrainConfig, chol_with_jitter, gp_fit
from .kernels import KernelSpec, kernel_matrix, pack_params, unpack_params


@dataclass
class CoregionalizationMatrix:
    """Low-rank-plus-diagonal output correlation B = A A^T + diag(d)."""

    A: np.ndarray  # (Q, R)
    d: np.ndarray  # (Q,), nonnegative

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if self.A.shape[0] != self.d.size:
            raise ValueError("A rows and d length must both equal Q")
        if self.A.shape[1] > self.A.shape[0]:
            raise ValueError("rank R must not exceed Q")
        if np.any(self.d < 0):
            raise ValueError("diagonal boost d must be nonnegative")

    @property
    def q(self) -> int:
        return self.A.shape[0]

    @property
    def B(self) -> np.ndarray:
        return self.A @ self.A.T + np.diag(self.d)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.B).min())


def assemble_covariance(B: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Joint (NQ, NQ) covariance under the observation-major stacking."""
    return np.kron(K, B)


class MOGPRegressor:
    """ICM multi-output GP posterior over a fixed dataset."""

    def __init__(self, base_kernel: KernelSpec, coregionalization: CoregionalizationMatrix,
                 noise_variance: float, data: Dataset,
                 input_domain: BoxDomain | None = None,
                 y_mean: np.ndarray | None = None, y_std: np.ndarray | None = None):
        if noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if data.n < 1:
            raise ValueError("MOGPRegressor needs at least one observation")
        Y = data.outputs
        if Y.ndim == 1:
            Y = Y[:, None]
        q = coregionalization.q
        if Y.shape[1] != q:
            raise ValueError("output columns must match coregionalization size Q")
        self.base_kernel = base_kernel
        self.coregionalization = coregionalization
        self.noise_variance = float(noise_variance)
        self.data = data
        self.input_domain = input_domain
        self.q = q
        self.y_mean = np.zeros(q) if y_mean is None else np.asarray(y_mean, dtype=float)
        self.y_std = np.ones(q) if y_std is None else np.asarray(y_std, dtype=float)

        self._Xn = self._transform_inputs(data.inputs)
        self._Yn = (Y - self.y_mean) / self.y_std
        self._yvec = self._Yn.ravel()  # outputs of observation i contiguous
        K = kernel_matrix(base_kernel, self._Xn)
        B = coregionalization.B
        cov = assemble_covariance(B, K) + self.noise_variance * np.eye(data.n * q)
        self._L, self.jitter = chol_with_jitter(
            cov, base_kernel.effective_signal_variance * max(np.trace(B) / q, 1e-12))
        self._alpha = cho_solve((self._L, True), self._yvec)

    def _transform_inputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.input_domain is None:
            return X
        return self.input_domain.normalize(X)

    def predict(self, x, clamp: bool = True):
        """Posterior mean (Q,) and covariance (Q, Q) at a single input."""
        mean, cov = self.predict_batch(np.atleast_1d(np.asarray(x, float))[None, :],
                                       clamp=clamp)
        return mean[0], cov[0]

    def predict_batch(self, X, clamp: bool = True):
        """Posterior means (n, Q) and covariances (n, Q, Q) at rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.data.dim:
            raise ValueError("query dimension does not match training inputs")
        Xq = self._transform_inputs(X)
        B = self.coregionalization.B
        Ks = kernel_matrix(self.base_kernel, Xq, self._Xn)        # (n, N)
        kss = self.base_kernel.effective_signal_variance
        n, N = Ks.shape
        # cross-covariance rows for query i: kron(Ks[i], B), shape (Q, NQ)
        cross = np.kron(Ks, B).reshape(n, self.q, N * self.q)
        mean = cross @ self._alpha                                 # (n, Q)
        flat = cross.reshape(n * self.q, N * self.q)
        V = cho_solve((self._L, True), flat.T)                     # (NQ, nQ)
        Vr = V.reshape(N * self.q, n, self.q)
        quad = np.einsum("iqm,mip->iqp", cross, Vr)                # (n, Q, Q)
        cov = kss * B[None, :, :] - quad
        cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
        mean = self.y_mean + self.y_std * mean
        scale = np.outer(self.y_std, self.y_std)
        cov = cov * scale
        if clamp:
            for i in range(n):
                w, U = np.linalg.eigh(cov[i])
                cov[i] = (U * np.maximum(w, 0.0)) @ U.T
        return mean, cov

    def log_marginal_likelihood(self) -> float:
        m = self._yvec.size
        return float(-0.5 * self._yvec @ self._alpha
                     - np.log(np.diag(self._L)).sum()
                     - 0.5 * m * math.log(2.0 * math.pi))


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _mogp_neg_lml(params, spec_template, n_kernel, q, rank, Xn, yvec):
    kern = unpack_params(spec_template, params[:n_kernel])
    i = n_kernel
    A = params[i:i + q * rank].reshape(q, rank)
    i += q * rank
    d = np.exp(params[i:i + q])
    i += q
    noise = float(np.exp(params[i]))
    K = kernel_matrix(kern, Xn)
    B = A @ A.T + np.diag(d)
    m = yvec.size
    cov = assemble_covariance(B, K) + noise * np.eye(m)
    try:
        L = cholesky(cov, lower=True)
    except np.linalg.LinAlgError:
        return 1e12
    alpha = cho_solve((L, True), yvec)
    lml = (-0.5 * yvec @ alpha - np.log(np.diag(L)).sum()
           - 0.5 * m * math.log(2.0 * math.pi))
    return -float(lml)


def mogp_fit(data: Dataset, base_spec: KernelSpec, q: int,
             train_cfg: TrainConfig | None = None,
             input_domain: BoxDomain | None = None,
             rank: int | None = None) -> MOGPRegressor:
    """Jointly fit base-kernel hyperparameters and coregionalization factors.

    For q == 1 the coregionalization scalar is redundant with the signal
    variance, so the fit reduces to the single-output path and B is pinned
    to one.
    """
    cfg = train_cfg or TrainConfig()
    if data.n < 1:
        raise ValueError("cannot fit a MOGP to an empty dataset")
    Y = data.outputs
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] != q:
        raise ValueError(f"every output must be a {q}-vector")

    if q == 1:
        single = gp_fit(Dataset(data.inputs, Y[:, 0]), base_spec, cfg,
                        input_domain=input_domain)
        coreg = CoregionalizationMatrix(A=np.ones((1, 1)), d=np.zeros(1))
        return MOGPRegressor(single.kernel, coreg, single.noise_variance,
                             Dataset(data.inputs, Y),
                             input_domain=single.input_domain,
                             y_mean=np.array([single.y_mean]),
                             y_std=np.array([single.y_std]))

    rank = q if rank is None else rank
    domain = input_domain
    if domain is None:
        lo = data.inputs.min(axis=0)
        hi = data.inputs.max(axis=0)
        width = np.where(hi - lo < 1e-12, 1.0, hi - lo)
        domain = BoxDomain(lo, lo + width)
    Xn = domain.normalize(data.inputs)

    y_mean = Y.mean(axis=0)
    y_std = Y.std(axis=0)
    y_std = np.where(~np.isfinite(y_std) | (y_std < 1e-12), 1.0, y_std)
    Yn = (Y - y_mean) / y_std
    yvec = Yn.ravel()

    # base-kernel signal variance is pinned: B carries the output scales
    template = unpack_params(base_spec, pack_params(base_spec))
    kp0 = pack_params(template)
    kp0[-1] = 0.0  # log signal variance = 0
    n_kernel = kp0.size

    lo_ls, hi_ls = np.log(cfg.lengthscale_bounds)
    lo_nv, hi_nv = np.log(cfg.noise_variance_bounds)
    bounds = ([(lo_ls, hi_ls)] * (n_kernel - 1) + [(0.0, 0.0)]
              + [(-10.0, 10.0)] * (q * rank)
              + [(np.log(1e-6), np.log(1e4))] * q
              + [(lo_nv, hi_nv)])
    lo_b = np.array([b[0] for b in bounds])
    hi_b = np.array([b[1] for b in bounds])

    A0 = 0.7 * np.eye(q, rank)
    d0 = 0.3 * np.ones(q)
    p0 = np.concatenate([np.clip(kp0, lo_b[:n_kernel], hi_b[:n_kernel]),
                         A0.ravel(), np.log(d0), [np.log(1e-2)]])

    rng = np.random.default_rng(cfg.seed)
    starts = [p0]
    for _ in range(max(cfg.restarts - 1, 0)):
        s = rng.uniform(np.where(np.isfinite(lo_b), lo_b, -1.0),
                        np.where(np.isfinite(hi_b), hi_b, 1.0))
        s[n_kernel:n_kernel + q * rank] = rng.normal(scale=0.7, size=q * rank)
        starts.append(np.clip(s, lo_b, hi_b))

    args = (template, n_kernel, q, rank, Xn, yvec)
    best_p, best_neg = p0, _mogp_neg_lml(p0, *args)
    for s in starts:
        s_neg = _mogp_neg_lml(s, *args)
        if s_neg < best_neg:
            best_p, best_neg = s, s_neg
        res = minimize(_mogp_neg_lml, s, args=args, method="L-BFGS-B",
                       bounds=bounds, options={"maxiter": cfg.maxiter})
        cand = _mogp_neg_lml(res.x, *args)
        if cand < best_neg:
            best_p, best_neg = res.x, cand

    kern = unpack_params(template, best_p[:n_kernel])
    i = n_kernel
    A = best_p[i:i + q * rank].reshape(q, rank)
    i += q * rank
    d = np.exp(best_p[i:i + q])
    i += q
    noise = float(np.exp(best_p[i]))
    coreg = CoregionalizationMatrix(A=A, d=d)
    return MOGPRegressor(kern, coreg, noise, Dataset(data.inputs, Y),
                         input_domain=domain, y_mean=y_mean, y_std=y_std)


def mogp_predict(model: MOGPRegressor, x_star):
    """Functional alias for :meth:`MOGPRegressor.predict`."""
    return model.predict(x_star)
