"""Run configuration documents (JSON) and their validation.

A learn run needs domains, loop budgets, an evaluator choice, a master
seed, and an output directory.  A comparison run lists controllers, an
episode count, and the context distribution.  Everything is plain JSON so
configs diff cleanly and artifacts can embed the config that made them.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import BoxDomain
from .errors import ConfigError
from .sim.episode import MetricConfig, ScenarioConfig, weight_log_domain
from .sim.mpc import MPCConfig

OUTPUT_DIR_ENV = "CTXBO_OUTPUT_DIR"


@dataclass
class EvaluatorChoice:
    """Either an analytic benchmark or the intersection simulator."""

    kind: str  # "analytic" | "cavsim"
    benchmark_id: str = "quad1d"
    noise_std: float = 0.01
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in ("analytic", "cavsim"):
            raise ConfigError(f"unknown evaluator kind {self.kind!r}")


@dataclass
class RunConfig:
    evaluator: EvaluatorChoice
    z_domain: BoxDomain
    theta_domain: BoxDomain
    j_max: int = 30
    k_max: int = 30
    beta: float = 100.0
    max_data: int = 300
    sampler_restarts: int = 10
    seed: int = 0
    output_dir: str = "runs/learn"

    def validate(self):
        if self.j_max < 1:
            raise ConfigError("j_max must be at least 1")
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if self.max_data < 1:
            raise ConfigError("max_data must be positive")
        if self.seed is None:
            raise ConfigError("a master seed is required (no wall-clock seeding)")
        return self


@dataclass
class ControllerSpec:
    kind: str  # "adaptive" | "fixed"
    model_path: str | None = None
    omega1: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind == "adaptive":
            if not self.model_path:
                raise ConfigError("adaptive controller needs a model file")
        elif self.kind == "fixed":
            self.omega1 = np.atleast_1d(np.asarray(self.omega1, dtype=float))
            if self.omega1.shape != (2,) or np.any(self.omega1 <= 0):
                raise ConfigError("fixed controller needs a positive omega1 2-vector")
        else:
            raise ConfigError(f"unknown controller kind {self.kind!r}")
        if not self.label:
            self.label = (f"adaptive:{Path(self.model_path).stem}" if self.kind == "adaptive"
                          else "fixed:" + ",".join(f"{w:g}" for w in self.omega1))


@dataclass
class ComparisonSpec:
    controllers: list[ControllerSpec]
    episodes: int = 200
    context_domain: BoxDomain = field(default_factory=weight_log_domain)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    seed: int = 0
    output_dir: str = "runs/compare"

    def validate(self):
        if len(self.controllers) < 2:
            raise ConfigError("comparison needs at least two controllers")
        if self.episodes < 1:
            raise ConfigError("episode count must be at least 1")
        return self


# ---------------------------------------------------------------------------
# JSON parsing
# ---------------------------------------------------------------------------


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing {key!r} in {where}")
    return d[key]


def _parse_domain(d, where: str) -> BoxDomain:
    try:
        return BoxDomain(np.asarray(d["lower"], dtype=float),
                         np.asarray(d["upper"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain in {where}: {exc}") from exc


def _parse_dataclass(cls, d: dict, where: str):
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {where}: {exc}") from exc


def _parse_evaluator(d: dict) -> EvaluatorChoice:
    kind = _require(d, "kind", "evaluator")
    if kind == "analytic":
        return EvaluatorChoice(kind="analytic",
                               benchmark_id=d.get("benchmark", "quad1d"),
                               noise_std=float(d.get("noise_std", 0.01)))
    if kind == "cavsim":
        scenario_d = dict(d.get("scenario", {}))
        mpc_d = scenario_d.pop("mpc", {})
        scenario = _parse_dataclass(
            ScenarioConfig, {**scenario_d, "mpc": _parse_dataclass(MPCConfig, mpc_d, "mpc")},
            "scenario")
        metric = _parse_dataclass(MetricConfig, d.get("metric", {}), "metric")
        return EvaluatorChoice(kind="cavsim", scenario=scenario, metric=metric,
                               n_jobs=int(d.get("n_jobs", 1)))
    raise ConfigError(f"unknown evaluator kind {kind!r}")


def _output_dir(d: dict, default: str) -> str:
    env = os.environ.get(OUTPUT_DIR_ENV)
    return env if env else d.get("output_dir", default)


def run_config_from_dict(d: dict) -> RunConfig:
    evaluator = _parse_evaluator(_require(d, "evaluator", "run config"))
    if evaluator.kind == "cavsim":
        z_dom = weight_log_domain()
        th_dom = weight_log_domain()
    else:
        from .benchmarks import get_benchmark
        bench = get_benchmark(evaluator.benchmark_id)
        z_dom, th_dom = bench.z_domain, bench.theta_domain
    if "z_domain" in d:
        z_dom = _parse_domain(d["z_domain"], "z_domain")
    if "theta_domain" in d:
        th_dom = _parse_domain(d["theta_domain"], "theta_domain")
    if "seed" not in d:
        raise ConfigError("a master seed is required (no wall-clock seeding)")
    cfg = RunConfig(
        evaluator=evaluator, z_domain=z_dom, theta_domain=th_dom,
        j_max=int(d.get("j_max", 30)), k_max=int(d.get("k_max", 30)),
        beta=float(d.get("beta", 100.0)), max_data=int(d.get("max_data", 300)),
        sampler_restarts=int(d.get("sampler_restarts", 10)),
        seed=int(d["seed"]), output_dir=_output_dir(d, "runs/learn"))
    return cfg.validate()


def comparison_from_dict(d: dict) -> ComparisonSpec:
    raw = _require(d, "controllers", "comparison spec")
    controllers = []
    for c in raw:
        kind = _require(c, "kind", "controller")
        controllers.append(ControllerSpec(kind=kind, model_path=c.get("model"),
                                          omega1=c.get("omega1"),
                                          label=c.get("label", "")))
    ctx = d.get("context_domain")
    spec = ComparisonSpec(
        controllers=controllers,
        episodes=int(d.get("episodes", 200)),
        context_domain=_parse_domain(ctx, "context_domain") if ctx else weight_log_domain(),
        scenario=_parse_evaluator({"kind": "cavsim", **d}).scenario,
        metric=_parse_dataclass(MetricConfig, d.get("metric", {}), "metric"),
        seed=int(d.get("seed", 0)), output_dir=_output_dir(d, "runs/compare"))
    return spec.validate()


def load_run_config(path) -> RunConfig:
    return run_config_from_dict(_load_json(path))


def load_comparison_spec(path) -> ComparisonSpec:
    return comparison_from_dict(_load_json(path))


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def run_config_to_dict(cfg: RunConfig) -> dict:
    """Round-trippable plain-dict view, embedded into artifacts."""
    ev = cfg.evaluator
    ev_d: dict = {"kind": ev.kind}
    if ev.kind == "analytic":
        ev_d.update(benchmark=ev.benchmark_id, noise_std=ev.noise_std)
    else:
        scenario = asdict(ev.scenario)
        ev_d.update(scenario=scenario, metric=asdict(ev.metric), n_jobs=ev.n_jobs)
    return {
        "evaluator": ev_d,
        "z_domain": {"lower": cfg.z_domain.lower.tolist(),
                     "upper": cfg.z_domain.upper.tolist()},
        "theta_domain": {"lower": cfg.theta_domain.lower.tolist(),
                         "upper": cfg.theta_domain.upper.tolist()},
        "j_max": cfg.j_max, "k_max": cfg.k_max, "beta": cfg.beta,
        "max_data": cfg.max_data, "sampler_restarts": cfg.sampler_restarts,
        "seed": cfg.seed, "output_dir": cfg.output_dir,
    }
