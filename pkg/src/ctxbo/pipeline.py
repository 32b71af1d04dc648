"""End-to-end runs: learning, paired comparison, and grid exports.

All outputs are CSV/JSON under the run's output directory.  Every float
is written with shortest-repr formatting, so a rerun with the same master
seed reproduces each file byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .benchmarks import AnalyticEvaluator, get_benchmark
from .bo import SurrogateModel
from .config import (ComparisonSpec, RunConfig, run_config_to_dict)
from .domain import BoxDomain
from .errors import ConfigError
from .gp import TrainConfig
from .serialize import (gp_from_dict, gp_to_dict, load_model, mogp_to_dict,
                        save_model, solution_from_dict, solution_to_dict, to_dict)
from .sim.episode import (CavSimEvaluator, draw_initial_conditions,
                          episode_metric, simulate_episode)
from .solution import OuterLoopConfig, SolutionModel, outer_loop


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _vector_columns(prefix: str, dim: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(dim)]


def make_evaluator(cfg: RunConfig):
    ev = cfg.evaluator
    if ev.kind == "analytic":
        return AnalyticEvaluator(get_benchmark(ev.benchmark_id),
                                 noise_std=ev.noise_std, seed=cfg.seed)
    return CavSimEvaluator(ev.scenario, ev.metric, seed=cfg.seed, n_jobs=ev.n_jobs)


def _surrogate_from_checkpoint(cfg: RunConfig, gp_doc, train_cfg) -> SurrogateModel:
    gp = gp_from_dict(gp_doc)
    sur = SurrogateModel(cfg.z_domain, cfg.theta_domain, kernel=gp.kernel,
                         max_data=cfg.max_data, train_cfg=train_cfg)
    for row, y in zip(gp.data.inputs, gp.data.outputs):
        sur._X.append(np.asarray(row, dtype=float))
        sur._y.append(float(y))
    sur.gp = gp
    return sur


def _latest_checkpoint(ckpt_dir: Path, j_max: int):
    best = None
    for path in sorted(ckpt_dir.glob("ckpt_*.json")):
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError:
            continue  # interrupted write; ignore
        if doc.get("kind") == "checkpoint" and doc.get("iteration", 0) <= j_max:
            if best is None or doc["iteration"] > best["iteration"]:
                best = doc
    return best


def run_learn(cfg: RunConfig) -> dict:
    """Execute the full learning pipeline and write its artifacts.

    Checkpoints are written after every outer iteration; rerunning with
    the same configuration and output directory resumes from the latest
    checkpoint and the finished artifacts are identical to those of an
    uninterrupted run.  Returns a summary dict with the paths written.
    """
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    evaluator = make_evaluator(cfg)
    train_cfg = TrainConfig(seed=cfg.seed)
    loop_cfg = OuterLoopConfig(j_max=cfg.j_max, k_max=cfg.k_max, beta=cfg.beta,
                               sampler_restarts=cfg.sampler_restarts,
                               max_data=cfg.max_data)
    cfg_dict = run_config_to_dict(cfg)
    dz, dt = cfg.z_domain.dim, cfg.theta_domain.dim

    surrogate = solution = None
    start_j = 1
    inner_rows: list[list] = []
    outer_rows: list[list] = []
    resume = _latest_checkpoint(ckpt_dir, cfg.j_max)
    if resume is not None and resume.get("surrogate") is not None:
        start_j = int(resume["iteration"]) + 1
        surrogate = _surrogate_from_checkpoint(cfg, resume["surrogate"], train_cfg)
        solution = solution_from_dict(resume["solution"])
        solution.train_cfg = train_cfg
        inner_rows = [list(r) for r in resume.get("inner_rows", [])]
        outer_rows = [list(r) for r in resume.get("outer_rows", [])]
        n_done = (start_j - 1) * cfg.k_max
        if hasattr(evaluator, "advance"):
            evaluator.advance(n_done)
        elif hasattr(evaluator, "n_calls"):
            evaluator.n_calls = n_done

    def inner_hook(j, rec):
        inner_rows.append([j, rec.k, *rec.z, *rec.theta, rec.value, *rec.incumbent])

    def checkpoint_hook(j, sur: SurrogateModel, sol: SolutionModel, record):
        outer_rows.append([record.j, *record.theta, *record.z_star,
                           record.probe_mean_log_det])
        doc = {
            "kind": "checkpoint",
            "iteration": j,
            "surrogate": gp_to_dict(sur.gp) if sur.gp is not None else None,
            "solution": solution_to_dict(sol, run_config=cfg_dict),
            "inner_rows": inner_rows,
            "outer_rows": outer_rows,
        }
        (ckpt_dir / f"ckpt_{j:03d}.json").write_text(json.dumps(doc, indent=1))

    try:
        result = outer_loop(evaluator, cfg.z_domain, cfg.theta_domain, loop_cfg,
                            train_cfg=train_cfg, seed=cfg.seed,
                            inner_log_hook=inner_hook,
                            checkpoint_hook=checkpoint_hook,
                            surrogate=surrogate, solution=solution,
                            start_iteration=start_j)
    finally:
        if hasattr(evaluator, "close"):
            evaluator.close()

    run_log = out_dir / "run_log.csv"
    _write_csv(run_log,
               ["j", "k", *_vector_columns("z", dz), *_vector_columns("theta", dt),
                "J", *_vector_columns("incumbent_z", dz)],
               inner_rows)
    outer_log = out_dir / "outer_log.csv"
    _write_csv(outer_log,
               ["j", *_vector_columns("theta", dt), *_vector_columns("z_star", dz),
                "probe_mean_log_det"],
               outer_rows)

    model_path = out_dir / "solution_model.json"
    save_model(model_path, result.solution_model, run_config=cfg_dict)
    surrogate_path = out_dir / "surrogate_model.json"
    if result.surrogate.gp is not None:
        save_model(surrogate_path, result.surrogate.gp, run_config=cfg_dict)

    summary = {
        "model": str(model_path),
        "surrogate": str(surrogate_path),
        "run_log": str(run_log),
        "outer_log": str(outer_log),
        "iterations": start_j - 1 + len(result.history),
        "error": result.error,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    return summary


# ---------------------------------------------------------------------------
# paired controller comparison
# ---------------------------------------------------------------------------


class _FixedController:
    def __init__(self, omega1: np.ndarray, label: str):
        self.z = np.log10(np.asarray(omega1, dtype=float))
        self.label = label

    def choose(self, theta) -> np.ndarray:
        return self.z


class _AdaptiveController:
    def __init__(self, model: SolutionModel, label: str):
        self.model = model
        self.label = label

    def choose(self, theta) -> np.ndarray:
        return self.model.adapt(theta)


def _build_controllers(spec: ComparisonSpec):
    out = []
    for c in spec.controllers:
        if c.kind == "fixed":
            out.append(_FixedController(c.omega1, c.label))
        else:
            model = load_model(c.model_path)
            if not isinstance(model, SolutionModel):
                raise ConfigError(f"{c.model_path} is not a solution-model file")
            out.append(_AdaptiveController(model, c.label))
    return out


def run_compare(spec: ComparisonSpec) -> dict:
    """Paired evaluation of controllers over shared episode draws.

    Every controller sees the identical (seed, context, initial-condition)
    triples.  Writes a per-episode manifest and a summary table with the
    safe-episode count, mean travel time, and mean acceleration rate
    (integral of squared acceleration divided by travel time).
    """
    spec.validate()
    out_dir = Path(spec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    controllers = _build_controllers(spec)

    rng = np.random.default_rng(spec.seed)
    episodes = []
    for i in range(spec.episodes):
        theta = rng.uniform(spec.context_domain.lower, spec.context_domain.upper)
        init = draw_initial_conditions(rng, spec.scenario)
        ep_seed = int(rng.integers(0, 2 ** 31 - 1))
        episodes.append((i, theta, init, ep_seed))

    manifest_rows = []
    table_rows = []
    per_controller = {}
    for ctrl in controllers:
        safes, times, accel_rates, metrics = [], [], [], []
        for i, theta, init, ep_seed in episodes:
            z = np.asarray(ctrl.choose(theta), dtype=float)
            out = simulate_episode(init, z, theta, spec.scenario, seed=ep_seed)
            safe = out.coll_margin < 0
            safes.append(safe)
            times.append(out.exit_time)
            accel_rates.append(out.accel_integral / max(out.exit_time, 1e-9))
            metrics.append(episode_metric(out, spec.metric))
            manifest_rows.append([ctrl.label, i, ep_seed, *theta,
                                  init[0].p, init[0].v, init[1].p, init[1].v,
                                  *z, out.exit_time, out.coll_margin,
                                  out.accel_integral, int(safe)])
        row = {
            "controller": ctrl.label,
            "episodes": len(episodes),
            "safe_count": int(np.sum(safes)),
            "safe_fraction": float(np.mean(safes)),
            "mean_travel_time": float(np.mean(times)),
            "mean_accel_rate": float(np.mean(accel_rates)),
            "mean_metric": float(np.mean(metrics)),
        }
        per_controller[ctrl.label] = row
        table_rows.append([row["controller"], row["episodes"], row["safe_count"],
                           row["safe_fraction"], row["mean_travel_time"],
                           row["mean_accel_rate"], row["mean_metric"]])

    dt_dim = spec.context_domain.dim
    _write_csv(out_dir / "episodes_manifest.csv",
               ["controller", "episode", "seed", *_vector_columns("theta", dt_dim),
                "p1_0", "v1_0", "p2_0", "v2_0", *_vector_columns("z", 2),
                "exit_time", "coll_margin", "accel_integral", "safe"],
               manifest_rows)
    _write_csv(out_dir / "comparison.csv",
               ["controller", "episodes", "safe_count", "safe_fraction",
                "mean_travel_time", "mean_accel_rate", "mean_metric"],
               table_rows)
    return {
        "table": str(out_dir / "comparison.csv"),
        "manifest": str(out_dir / "episodes_manifest.csv"),
        "results": per_controller,
    }


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------


def export_heatmap(model_path, out_dir, grid: int = 51) -> dict:
    """Write adapt() posterior-mean grids, one CSV per output dimension."""
    if grid < 2:
        raise ConfigError("grid resolution must be at least 2")
    model = load_model(model_path)
    if not isinstance(model, SolutionModel):
        raise ConfigError(f"{model_path} is not a solution-model file")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    T = model.theta_domain.grid(grid)
    Z = np.array([model.adapt(t) for t in T])
    dt_dim = model.theta_domain.dim
    paths = []
    for q in range(Z.shape[1]):
        path = out_dir / f"heatmap_z{q}.csv"
        _write_csv(path, [*_vector_columns("theta", dt_dim), f"z{q}_mean"],
                   [[*T[i], Z[i, q]] for i in range(T.shape[0])])
        paths.append(str(path))
    ctx_path = out_dir / "sampled_contexts.csv"
    _write_csv(ctx_path, _vector_columns("theta", dt_dim),
               [[*t] for t in model.thetas])
    return {"grids": paths, "contexts": str(ctx_path)}


def run_simulate(scenario, z, theta, seed: int, out_path) -> dict:
    """Single-episode trajectory dump for plotting."""
    rng = np.random.default_rng(seed)
    init = draw_initial_conditions(rng, scenario)
    out = simulate_episode(init, z, theta, scenario, seed=seed)
    rows = []
    for k in range(len(out.times)):
        a1 = out.a1[k] if k < len(out.a1) else 0.0
        a2 = out.a2[k] if k < len(out.a2) else 0.0
        rows.append([out.times[k], out.p1[k], out.v1[k], a1,
                     out.p2[k], out.v2[k], a2])
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(path, ["t", "p1", "v1", "a1", "p2", "v2", "a2"], rows)
    return {
        "trajectory": str(path),
        "exit_time": out.exit_time,
        "coll_margin": out.coll_margin,
        "accel_integral": out.accel_integral,
        "exited": out.exited,
    }
