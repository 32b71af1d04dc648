"""Stationary covariance kernels and their composition.

Two stationary families are provided,

    squared exponential   k(r) = s * exp(-r^2 / 2)
    Matern 3/2            k(r) = s * (1 + sqrt(3) r) * exp(-sqrt(3) r)

with r the anisotropically scaled distance r^2 = sum_d (dx_d / l_d)^2,
plus a product composition that multiplies factor kernels acting on
disjoint slices of the input dimensions.  All hyperparameters are kept in
natural units; log-space reparameterization happens in the fitting code.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQUARED_EXPONENTIAL = "squared_exponential"
MATERN32 = "matern32"
PRODUCT = "product"

_STATIONARY = (SQUARED_EXPONENTIAL, MATERN32)
_SQRT3 = np.sqrt(3.0)


@dataclass
class KernelFactor:
    """A factor kernel together with the input dimensions it acts on."""

    spec: "KernelSpec"
    dims: tuple[int, ...]


@dataclass
class KernelSpec:
    """Kernel family plus hyperparameters.

    For stationary families `lengthscales` holds one positive scale per
    active input dimension.  For the product family the parameters live in
    the factors; `signal_variance` acts as an overall multiplier and the
    factor dimension slices must not overlap.
    """

    family: str
    lengthscales: np.ndarray | None = None
    signal_variance: float = 1.0
    factors: tuple[KernelFactor, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.lengthscales is not None:
            self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        self.signal_variance = float(self.signal_variance)
        self.validate()

    def validate(self):
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if self.family in _STATIONARY:
            if self.lengthscales is None or self.lengthscales.size == 0:
                raise ValueError("stationary kernel needs lengthscales")
            if not np.all(self.lengthscales > 0):
                raise ValueError("lengthscales must be positive")
        elif self.family == PRODUCT:
            if len(self.factors) < 2:
                raise ValueError("product kernel needs at least two factors")
            seen: set[int] = set()
            for f in self.factors:
                if f.spec.family not in _STATIONARY:
                    raise ValueError("product factors must be stationary kernels")
                if len(f.dims) != f.spec.lengthscales.size:
                    raise ValueError("factor lengthscale count must match its dims")
                if seen.intersection(f.dims):
                    raise ValueError("product factor dims overlap")
                seen.update(f.dims)
        else:
            raise ValueError(f"unknown kernel family {self.family!r}")

    @property
    def input_dim(self) -> int:
        if self.family in _STATIONARY:
            return self.lengthscales.size
        return max(max(f.dims) for f in self.factors) + 1

    @property
    def effective_signal_variance(self) -> float:
        """Value of k(x, x): the product of all signal variances involved."""
        if self.family in _STATIONARY:
            return self.signal_variance
        out = self.signal_variance
        for f in self.factors:
            out *= f.spec.signal_variance
        return out


def matern32(z_domain_dim_or_ls, signal_variance: float = 1.0) -> KernelSpec:
    """Convenience constructor: Matern 3/2 with given lengthscales (or dim)."""
    ls = _ls_from(z_domain_dim_or_ls)
    return KernelSpec(MATERN32, lengthscales=ls, signal_variance=signal_variance)


def squared_exponential(ls_or_dim, signal_variance: float = 1.0) -> KernelSpec:
    return KernelSpec(SQUARED_EXPONENTIAL, lengthscales=_ls_from(ls_or_dim),
                      signal_variance=signal_variance)


def product_kernel(first: KernelSpec, first_dims, second: KernelSpec, second_dims,
                   signal_variance: float = 1.0) -> KernelSpec:
    return KernelSpec(
        PRODUCT,
        signal_variance=signal_variance,
        factors=(KernelFactor(first, tuple(first_dims)),
                 KernelFactor(second, tuple(second_dims))),
    )


def _ls_from(ls_or_dim):
    if isinstance(ls_or_dim, (int, np.integer)):
        return np.ones(int(ls_or_dim))
    return np.atleast_1d(np.asarray(ls_or_dim, dtype=float))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _scaled_sq_dists(X, X2, lengthscales):
    """Per-dimension squared scaled differences, shape (D, N, M)."""
    diff = (X[:, None, :] - X2[None, :, :]) / lengthscales
    return np.moveaxis(diff * diff, -1, 0)


def _unit_corr(family: str, sq: np.ndarray) -> np.ndarray:
    """Correlation matrix (signal variance one) from summed scaled sq-dists."""
    if family == SQUARED_EXPONENTIAL:
        return np.exp(-0.5 * sq)
    if family == MATERN32:
        r = np.sqrt(np.maximum(sq, 0.0))
        return (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
    raise ValueError(f"not a stationary family: {family}")


def kernel_matrix(spec: KernelSpec, X, X2=None) -> np.ndarray:
    """Cross-covariance matrix k(X, X2), shape (N, M)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
    if X.shape[1] != X2.shape[1]:
        raise ValueError("input dimension mismatch between X and X2")
    if spec.family in _STATIONARY:
        if X.shape[1] != spec.lengthscales.size:
            raise ValueError("input dimension does not match kernel lengthscales")
        sq = _scaled_sq_dists(X, X2, spec.lengthscales).sum(axis=0)
        return spec.signal_variance * _unit_corr(spec.family, sq)
    # product: multiply factor correlations over their dimension slices
    if X.shape[1] < spec.input_dim:
        raise ValueError("input dimension does not cover product kernel dims")
    out = np.full((X.shape[0], X2.shape[0]), spec.signal_variance)
    for f in spec.factors:
        dims = list(f.dims)
        out *= kernel_matrix(f.spec, X[:, dims], X2[:, dims])
    return out


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    """Scalar kernel evaluation k(x, x2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape:
        raise ValueError("x and x2 must have the same dimension")
    return float(kernel_matrix(spec, x[None, :], x2[None, :])[0, 0])


# ---------------------------------------------------------------------------
# log-space parameter vector <-> spec, and gradients for likelihood fitting
# ---------------------------------------------------------------------------
#
# Parameter layout (all entries are logs of positive quantities):
#   stationary:  [log l_1 .. log l_D, log s]
#   product:     [log l (factor 1 dims...), log l (factor 2 dims...), log s]
# where s is the overall signal variance (factor signal variances are pinned
# to one during fitting so the product is not over-parameterized).


def pack_params(spec: KernelSpec) -> np.ndarray:
    if spec.family in _STATIONARY:
        return np.concatenate([np.log(spec.lengthscales),
                               [np.log(spec.signal_variance)]])
    parts = [np.log(f.spec.lengthscales) for f in spec.factors]
    parts.append(np.asarray([np.log(spec.effective_signal_variance)]))
    return np.concatenate(parts)


def unpack_params(spec: KernelSpec, params: np.ndarray) -> KernelSpec:
    params = np.asarray(params, dtype=float)
    if spec.family in _STATIONARY:
        d = spec.lengthscales.size
        return KernelSpec(spec.family, lengthscales=np.exp(params[:d]),
                          signal_variance=float(np.exp(params[d])))
    factors = []
    i = 0
    for f in spec.factors:
        d = len(f.dims)
        factors.append(KernelFactor(
            KernelSpec(f.spec.family, lengthscales=np.exp(params[i:i + d]),
                       signal_variance=1.0),
            f.dims))
        i += d
    return KernelSpec(PRODUCT, signal_variance=float(np.exp(params[i])),
                      factors=tuple(factors))


def n_params(spec: KernelSpec) -> int:
    return pack_params(spec).size


def kernel_matrix_with_grads(spec: KernelSpec, X):
    """Gram matrix K(X, X) and dK/d(log p) for each packed kernel parameter.

    Gradients are exact; the last parameter is always the overall log signal
    variance, whose gradient is K itself.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.family in _STATIONARY:
        per_dim = _scaled_sq_dists(X, X, spec.lengthscales)
        sq = per_dim.sum(axis=0)
        corr = _unit_corr(spec.family, sq)
        K = spec.signal_variance * corr
        grads = []
        if spec.family == SQUARED_EXPONENTIAL:
            for d in range(per_dim.shape[0]):
                grads.append(K * per_dim[d])
        else:  # matern32: dk/d log l_d = 3 s exp(-sqrt3 r) (dx_d/l_d)^2
            r = np.sqrt(np.maximum(sq, 0.0))
            base = 3.0 * spec.signal_variance * np.exp(-_SQRT3 * r)
            for d in range(per_dim.shape[0]):
                grads.append(base * per_dim[d])
        grads.append(K.copy())
        return K, grads

    # product: K = s * prod_f C_f ; dK/d(log l of factor f) uses the factor's
    # unit-correlation gradient times the remaining factors
    corrs = []
    factor_grads = []
    for f in spec.factors:
        dims = list(f.dims)
        sub = KernelSpec(f.spec.family, lengthscales=f.spec.lengthscales,
                         signal_variance=1.0)
        C, g = kernel_matrix_with_grads(sub, X[:, dims])
        corrs.append(C)
        factor_grads.append(g[:-1])  # drop the factor's signal-variance grad
    total = np.full((X.shape[0], X.shape[0]), spec.effective_signal_variance)
    for C in corrs:
        total = total * C
    grads = []
    for i, g_list in enumerate(factor_grads):
        rest = np.full_like(total, spec.effective_signal_variance)
        for j, C in enumerate(corrs):
            if j != i:
                rest = rest * C
        for g in g_list:
            grads.append(rest * g)
    grads.append(total.copy())
    return total, grads
