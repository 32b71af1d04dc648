"""Analytic test objectives with known solution maps.

Each benchmark provides the objective J(z, theta), its true solution map
gamma(theta), and the domains, so pipelines can be validated end to end
against closed-form answers.  `kink1d` has a non-smooth solution map to
exercise learning of maps with sharp bends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bo import ObjectiveEvaluator
from .domain import BoxDomain

LINEAR2D_MAP = np.array([[0.5, 0.3],
                         [0.2, 0.6]])


@dataclass(frozen=True)
class AnalyticBenchmark:
    id: str
    z_domain: BoxDomain
    theta_domain: BoxDomain
    objective: Callable[[np.ndarray, np.ndarray], float]
    gamma: Callable[[np.ndarray], np.ndarray]


def _quad1d_obj(z, theta):
    return -float((z[0] - theta[0]) ** 2)


def _linear2d_obj(z, theta):
    return -float(np.sum((z - LINEAR2D_MAP @ theta) ** 2))


def _kink1d_gamma(theta):
    return np.array([abs(theta[0] - 0.5)])


def _kink1d_obj(z, theta):
    return -float((z[0] - _kink1d_gamma(theta)[0]) ** 2)


_UNIT = BoxDomain(np.zeros(1), np.ones(1))
_UNIT2 = BoxDomain(np.zeros(2), np.ones(2))

REGISTRY: dict[str, AnalyticBenchmark] = {
    "quad1d": AnalyticBenchmark(
        id="quad1d", z_domain=_UNIT, theta_domain=_UNIT,
        objective=_quad1d_obj, gamma=lambda th: np.array([th[0]])),
    "linear2d": AnalyticBenchmark(
        id="linear2d", z_domain=_UNIT2, theta_domain=_UNIT2,
        objective=_linear2d_obj, gamma=lambda th: LINEAR2D_MAP @ th),
    "kink1d": AnalyticBenchmark(
        id="kink1d", z_domain=_UNIT, theta_domain=_UNIT,
        objective=_kink1d_obj, gamma=_kink1d_gamma),
}


def get_benchmark(benchmark_id: str) -> AnalyticBenchmark:
    try:
        return REGISTRY[benchmark_id]
    except KeyError:
        raise ValueError(f"unknown benchmark {benchmark_id!r}; "
                         f"available: {sorted(REGISTRY)}") from None


class AnalyticEvaluator(ObjectiveEvaluator):
    """Noisy observations of an analytic benchmark objective."""

    def __init__(self, benchmark: AnalyticBenchmark | str, noise_std: float = 0.01,
                 seed: int = 0):
        if isinstance(benchmark, str):
            benchmark = get_benchmark(benchmark)
        self.benchmark = benchmark
        self.noise_std = float(noise_std)
        self._rng = np.random.default_rng(seed)
        self.n_calls = 0

    @property
    def z_domain(self) -> BoxDomain:
        return self.benchmark.z_domain

    @property
    def theta_domain(self) -> BoxDomain:
        return self.benchmark.theta_domain

    def evaluate(self, z, theta) -> float:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        self.n_calls += 1
        value = self.benchmark.objective(z, theta)
        if self.noise_std > 0:
            value += self._rng.normal(0.0, self.noise_std)
        return float(value)

    def advance(self, n_calls: int) -> None:
        """Fast-forward the noise stream, e.g. when resuming a run."""
        if self.noise_std > 0:
            self._rng.normal(0.0, self.noise_std, size=n_calls)
        self.n_calls += n_calls
