"""Inner-loop Bayesian optimization over controller parameters.

A surrogate GP models the black-box performance J over joint
(variable, context) inputs with a product kernel, one stationary factor
per slice.  Each iteration maximizes an upper confidence bound

    ucb(z) = mean(z, theta) + sqrt(beta) * std(z, theta)

at the fixed context, evaluates the objective there, appends the
observation (with FIFO eviction once the dataset cap is reached), and
refreshes the surrogate.  The returned solution is the maximizer of the
final posterior mean over the variable domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import BoxDomain
from .errors import EvaluationError, NotFittedError
from .gp import Dataset, GPRegressor, TrainConfig, gp_fit
from .kernels import KernelSpec, PRODUCT, matern32, product_kernel
from .optim import maximize_box


@dataclass
class AcquisitionConfig:
    """UCB exploration weight and acquisition-optimizer budget."""

    beta: float = 100.0
    restarts: int = 10
    maxiter: int = 60

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


class ObjectiveEvaluator:
    """Interface for noisy black-box objectives: evaluate(z, theta) -> float."""

    def evaluate(self, z, theta) -> float:  # pragma: no cover - interface
        raise NotImplementedError


class SurrogateModel:
    """GP surrogate of J over concatenated (z, theta) with a product kernel.

    Mutable container: it accumulates observations (capped at `max_data`
    with FIFO eviction) and holds the current immutable GP fit.
    """

    def __init__(self, z_domain: BoxDomain, theta_domain: BoxDomain,
                 kernel: KernelSpec | None = None, max_data: int = 300,
                 train_cfg: TrainConfig | None = None):
        self.z_domain = z_domain
        self.theta_domain = theta_domain
        self.max_data = int(max_data)
        if self.max_data < 1:
            raise ValueError("max_data must be positive")
        dz, dt = z_domain.dim, theta_domain.dim
        if kernel is None:
            kernel = product_kernel(matern32(np.full(dz, 0.3)), tuple(range(dz)),
                                    matern32(np.full(dt, 0.3)), tuple(range(dz, dz + dt)))
        if kernel.family != PRODUCT or len(kernel.factors) != 2:
            raise ValueError("surrogate kernel must be a product of two factors")
        if set(kernel.factors[0].dims) != set(range(dz)) \
                or set(kernel.factors[1].dims) != set(range(dz, dz + dt)):
            raise ValueError("kernel factor dims must split the (z, theta) slices")
        self.kernel = kernel
        self.train_cfg = train_cfg or TrainConfig()
        self._X: list[np.ndarray] = []
        self._y: list[float] = []
        self.gp: GPRegressor | None = None

    # -- data management ----------------------------------------------------

    @property
    def n_data(self) -> int:
        return len(self._y)

    def add_observation(self, z, theta, value: float):
        """Append an observation, evicting the oldest at the size cap."""
        x = np.concatenate([np.atleast_1d(np.asarray(z, float)),
                            np.atleast_1d(np.asarray(theta, float))])
        if len(self._y) >= self.max_data:
            self._X.pop(0)
            self._y.pop(0)
        self._X.append(x)
        self._y.append(float(value))

    def dataset(self) -> Dataset:
        return Dataset(np.array(self._X), np.array(self._y))

    # -- fitting ------------------------------------------------------------

    def refit(self, optimize_hyperparameters: bool = True):
        """Refresh the GP on the current data.

        With `optimize_hyperparameters` False only the factorization is
        rebuilt, warm-keeping the previous kernel and noise.
        """
        if not self._y:
            raise NotFittedError("surrogate has no data")
        data = self.dataset()
        joint = self.z_domain.concat(self.theta_domain)
        if optimize_hyperparameters or self.gp is None:
            init = self.gp.kernel if self.gp is not None else self.kernel
            init_noise = self.gp.noise_variance if self.gp is not None else 1e-2
            self.gp = gp_fit(data, init, self.train_cfg, input_domain=joint,
                             initial_noise_variance=init_noise)
        else:
            prev = self.gp
            y = data.outputs
            y_mean = float(y.mean())
            y_std = float(y.std())
            if not np.isfinite(y_std) or y_std < 1e-12:
                y_std = 1.0
            self.gp = GPRegressor(prev.kernel, prev.noise_variance, data,
                                  input_domain=joint, y_mean=y_mean, y_std=y_std)

    # -- prediction ---------------------------------------------------------

    def _require_fit(self) -> GPRegressor:
        if self.gp is None:
            raise NotFittedError("surrogate model is not fitted")
        return self.gp

    def predict_batch(self, Z, theta):
        gp = self._require_fit()
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        T = np.broadcast_to(np.atleast_1d(np.asarray(theta, float)),
                            (Z.shape[0], self.theta_domain.dim))
        return gp.predict_batch(np.concatenate([Z, T], axis=1))

    def predict(self, z, theta):
        mean, var = self.predict_batch(np.atleast_1d(np.asarray(z, float))[None, :], theta)
        return float(mean[0]), float(var[0])


def manage_dataset(surrogate: SurrogateModel, new_point) -> SurrogateModel:
    """FIFO insertion of (z, theta, value) subject to the dataset cap."""
    z, theta, value = new_point
    surrogate.add_observation(z, theta, value)
    return surrogate


def ucb(model: SurrogateModel, z, theta, beta: float) -> float:
    """Upper confidence bound mean + sqrt(beta) * std at (z, theta)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not model.z_domain.contains(z):
        raise ValueError("z outside the variable domain")
    if not model.theta_domain.contains(theta):
        raise ValueError("theta outside the context domain")
    mean, var = model.predict(z, theta)
    return float(mean + np.sqrt(beta) * np.sqrt(max(var, 0.0)))


def _ucb_batch(model: SurrogateModel, theta, beta: float):
    if beta == 0.0:
        def f(Z):
            mean, _ = model.predict_batch(Z, theta)
            return mean
        return f

    def f(Z):
        mean, var = model.predict_batch(Z, theta)
        return mean + np.sqrt(beta) * np.sqrt(np.maximum(var, 0.0))
    return f


def optimize_acquisition(model: SurrogateModel, theta, cfg: AcquisitionConfig,
                         seed: int = 0) -> np.ndarray:
    """Maximize the UCB over the variable domain at a fixed context."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not model.theta_domain.contains(theta):
        raise ValueError("theta outside the context domain")
    if model.gp is None or model.n_data == 0:
        return model.z_domain.center
    dz = model.z_domain.dim
    warm = [x[:dz] for x in model._X]
    if warm:
        best = int(np.argmax(model._y))
        warm = [model._X[best][:dz]] + warm[-5:]
    x, _ = maximize_box(_ucb_batch(model, theta, cfg.beta), model.z_domain,
                        restarts=cfg.restarts, seed=seed, warm_starts=warm,
                        maxiter=cfg.maxiter)
    return x


def posterior_mean_argmax(model: SurrogateModel, theta, cfg: AcquisitionConfig,
                          seed: int = 0) -> np.ndarray:
    """Maximizer of the posterior mean over z at the fixed context."""
    zero_beta = AcquisitionConfig(beta=0.0, restarts=cfg.restarts, maxiter=cfg.maxiter)
    return optimize_acquisition(model, theta, zero_beta, seed=seed)


# hyperparameter re-optimization cadence: every step early on, then sparser,
# since fitting dominates runtime once the surrogate is warm
REFIT_EVERY_UNTIL = 10
REFIT_PERIOD_AFTER = 5


@dataclass
class InnerIterationRecord:
    k: int
    z: np.ndarray
    theta: np.ndarray
    value: float
    incumbent: np.ndarray


def inner_bo(theta, surrogate: SurrogateModel, evaluator: ObjectiveEvaluator,
             k_max: int, acq_cfg: AcquisitionConfig | None = None, seed: int = 0,
             log_hook=None):
    """Run k_max rounds of UCB-driven sampling at a fixed context.

    Returns (z_star, surrogate) where z_star maximizes the final posterior
    mean over the variable domain.  Evaluator failures propagate as
    EvaluationError; observations gathered before the failure stay in the
    surrogate.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if not surrogate.theta_domain.contains(theta):
        raise ValueError("theta outside the context domain")
    cfg = acq_cfg or AcquisitionConfig()
    seq = np.random.SeedSequence(entropy=seed)
    sub_seeds = seq.generate_state(k_max + 1)

    incumbent = surrogate.z_domain.center
    best_val = -np.inf
    for k in range(1, k_max + 1):
        z_k = optimize_acquisition(surrogate, theta, cfg, seed=int(sub_seeds[k - 1]))
        try:
            value = float(evaluator.evaluate(z_k, theta))
        except Exception as exc:
            raise EvaluationError(
                f"objective evaluation failed at iteration {k}", cause=exc) from exc
        surrogate.add_observation(z_k, theta, value)
        surrogate.refit(optimize_hyperparameters=(
            k <= REFIT_EVERY_UNTIL or k % REFIT_PERIOD_AFTER == 0))
        if value > best_val:
            best_val, incumbent = value, z_k
        if log_hook is not None:
            log_hook(InnerIterationRecord(k=k, z=z_k, theta=theta, value=value,
                                          incumbent=incumbent))
    z_star = posterior_mean_argmax(surrogate, theta, cfg, seed=int(sub_seeds[k_max]))
    return z_star, surrogate
