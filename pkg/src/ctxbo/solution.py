"""Learning the context-to-solution map and choosing contexts to sample.

The solution model is a GP (multi-output when the variable is a vector)
over pairs (theta, z_star) produced by the inner optimization loop.  New
contexts are chosen greedily where the model is most uncertain, by
maximizing the log determinant of the noise-free predictive covariance.
Once trained, `adapt` returns the posterior mean at a query context in a
single GP prediction, clamped into the variable domain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bo import (AcquisitionConfig, InnerIterationRecord, ObjectiveEvaluator,
                 SurrogateModel, inner_bo)
from .domain import BoxDomain
from .errors import EvaluationError, NotFittedError
from .gp import Dataset, GPRegressor, TrainConfig, gp_fit
from .kernels import matern32
from .mogp import MOGPRegressor, mogp_fit
from .optim import maximize_box

LOG_DET_EIGENVALUE_FLOOR = 1e-12


class SolutionModel:
    """GP map from contexts to per-context optimal variables.

    Holds the (theta, z_star) pairs gathered so far and the current fit:
    a single-output GP when dim(z) == 1, a coregionalized multi-output GP
    otherwise, both with a Matern 3/2 kernel over the context domain.
    """

    def __init__(self, theta_domain: BoxDomain, z_domain: BoxDomain,
                 train_cfg: TrainConfig | None = None):
        self.theta_domain = theta_domain
        self.z_domain = z_domain
        self.train_cfg = train_cfg or TrainConfig()
        self.thetas: list[np.ndarray] = []
        self.z_stars: list[np.ndarray] = []
        self.model: GPRegressor | MOGPRegressor | None = None

    @property
    def n_data(self) -> int:
        return len(self.thetas)

    @property
    def z_dim(self) -> int:
        return self.z_domain.dim

    def add_pair(self, theta, z_star):
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        z_star = np.atleast_1d(np.asarray(z_star, dtype=float))
        if not self.theta_domain.contains(theta):
            raise ValueError("theta outside the context domain")
        if not self.z_domain.contains(z_star):
            raise ValueError("z_star outside the variable domain")
        self.thetas.append(theta)
        self.z_stars.append(z_star)

    def refit(self):
        if not self.thetas:
            raise NotFittedError("solution model has no data")
        X = np.array(self.thetas)
        Z = np.array(self.z_stars)
        kernel = matern32(np.full(self.theta_domain.dim, 0.3))
        if self.z_dim == 1:
            self.model = gp_fit(Dataset(X, Z[:, 0]), kernel, self.train_cfg,
                                input_domain=self.theta_domain)
        else:
            self.model = mogp_fit(Dataset(X, Z), kernel, self.z_dim,
                                  self.train_cfg, input_domain=self.theta_domain)

    # -- prediction ---------------------------------------------------------

    def _require_fit(self):
        if self.model is None:
            raise NotFittedError("solution model is not fitted")
        return self.model

    def adapt(self, theta) -> np.ndarray:
        """Posterior-mean solution for a context, clamped to the z domain."""
        model = self._require_fit()
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if not self.theta_domain.contains(theta):
            warnings.warn("context outside the trained domain; clamping",
                          stacklevel=2)
            theta = self.theta_domain.clip(theta)
        if isinstance(model, MOGPRegressor):
            mean, _ = model.predict(theta)
        else:
            m, _ = model.predict(theta)
            mean = np.array([m])
        return self.z_domain.clip(mean)

    def predictive_covariance_batch(self, T) -> np.ndarray:
        """Noise-free latent predictive covariances, shape (n, zdim, zdim)."""
        model = self._require_fit()
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if isinstance(model, MOGPRegressor):
            _, covs = model.predict_batch(T, clamp=False)
            return covs
        _, var = model.predict_batch(T, clamp=False)
        return var.reshape(-1, 1, 1)

    def log_det_covariance_batch(self, T) -> np.ndarray:
        """log det of predictive covariance with an eigenvalue floor."""
        covs = self.predictive_covariance_batch(T)
        out = np.empty(covs.shape[0])
        for i, c in enumerate(covs):
            w = np.linalg.eigvalsh(0.5 * (c + c.T))
            out[i] = float(np.sum(np.log(np.maximum(w, LOG_DET_EIGENVALUE_FLOOR))))
        return out


@dataclass
class OuterLoopConfig:
    """Budgets for the context-sampling loop and its inner optimizer."""

    j_max: int = 30
    k_max: int = 30
    beta: float = 100.0
    sampler_restarts: int = 10
    max_data: int = 300

    def __post_init__(self):
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


def next_context(solution_model: SolutionModel, cfg: OuterLoopConfig,
                 seed: int = 0) -> np.ndarray:
    """Most informative context: argmax of the predictive log determinant."""
    if solution_model.model is None:
        return solution_model.theta_domain.center
    theta, _ = maximize_box(solution_model.log_det_covariance_batch,
                            solution_model.theta_domain,
                            restarts=cfg.sampler_restarts, seed=seed)
    return theta


@dataclass
class OuterIterationRecord:
    j: int
    theta: np.ndarray
    z_star: np.ndarray
    probe_mean_log_det: float


@dataclass
class OuterLoopResult:
    solution_model: SolutionModel
    surrogate: SurrogateModel
    history: list[OuterIterationRecord] = field(default_factory=list)
    error: str | None = None


def outer_loop(evaluator: ObjectiveEvaluator, z_domain: BoxDomain,
               theta_domain: BoxDomain, cfg: OuterLoopConfig,
               train_cfg: TrainConfig | None = None, seed: int = 0,
               inner_log_hook=None, checkpoint_hook=None,
               surrogate: SurrogateModel | None = None,
               solution: SolutionModel | None = None,
               start_iteration: int = 1) -> OuterLoopResult:
    """Adaptive context sampling wrapped around the inner optimizer.

    Each iteration picks the next context, runs the inner loop against the
    evaluator (the surrogate threads through and keeps accumulating data),
    stores the returned solution pair, and refits the solution model.  On
    an inner failure the loop aborts and returns the last consistent
    solution model together with a diagnostic.

    Passing `surrogate`/`solution` with a `start_iteration` resumes a run
    from checkpointed state; the per-iteration seed table depends only on
    the master seed, so a resumed run continues the same trajectory.
    """
    tc = train_cfg or TrainConfig()
    if surrogate is None:
        surrogate = SurrogateModel(z_domain, theta_domain, max_data=cfg.max_data,
                                   train_cfg=tc)
    if solution is None:
        solution = SolutionModel(theta_domain, z_domain, train_cfg=tc)
    acq = AcquisitionConfig(beta=cfg.beta, restarts=cfg.sampler_restarts)
    seq = np.random.SeedSequence(entropy=seed)
    seeds = seq.generate_state(2 * cfg.j_max)
    probe = theta_domain.grid(7) if theta_domain.dim <= 2 else \
        theta_domain.sample(np.random.default_rng(seed), 49)
    result = OuterLoopResult(solution_model=solution, surrogate=surrogate)

    for j in range(start_iteration, cfg.j_max + 1):
        theta_j = next_context(solution, cfg, seed=int(seeds[2 * (j - 1)]))
        hook = None
        if inner_log_hook is not None:
            hook = lambda rec, _j=j: inner_log_hook(_j, rec)
        try:
            z_j, surrogate = inner_bo(theta_j, surrogate, evaluator, cfg.k_max,
                                      acq_cfg=acq, seed=int(seeds[2 * (j - 1) + 1]),
                                      log_hook=hook)
        except EvaluationError as exc:
            result.error = f"inner loop failed at outer iteration {j}: {exc}"
            return result
        solution.add_pair(theta_j, z_domain.clip(np.atleast_1d(z_j)))
        solution.refit()
        probe_ld = float(solution.log_det_covariance_batch(probe).mean())
        record = OuterIterationRecord(
            j=j, theta=theta_j, z_star=np.asarray(z_j, dtype=float),
            probe_mean_log_det=probe_ld)
        result.history.append(record)
        if checkpoint_hook is not None:
            checkpoint_hook(j, surrogate, solution, record)
    return result


def adapt(solution_model: SolutionModel, theta) -> np.ndarray:
    """Functional alias for :meth:`SolutionModel.adapt`."""
    return solution_model.adapt(theta)
