"""Closed-loop intersection episodes and the scalar performance metric.

An episode advances the controlled vehicle through receding-horizon
replanning while the human-driven vehicle follows its own policy; it ends
when the controlled vehicle passes the exit position or a time cap hits.
The metric combines travel time, accumulated squared acceleration, and a
sigmoid-saturated collision penalty on the worst realized safety margin

    g_coll = max_k [ r^2 - (p1_k^2 + p2_k^2) ]

(negative means the margin held everywhere).  `performance` averages the
metric over a batch of episodes with i.i.d. initial conditions and
returns its negative, so bigger is better for the tuning loops.

Tuned quantities live in log10 space: z = log10 of the controlled
vehicle's weights, theta = log10 of the human-driven vehicle's weights,
both restricted to the span [-2, 2] per coordinate; the shared coupling
weight is fixed to one.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass, field, replace

import numpy as np

from ..bo import ObjectiveEvaluator
from ..domain import BoxDomain
from .dynamics import VehicleState, step_dynamics
from .mpc import MPCConfig, MPCWeights, hdv_action, solve_mpc

WEIGHT_LOG_LOWER = -2.0
WEIGHT_LOG_UPPER = 2.0


def weight_log_domain(dim: int = 2) -> BoxDomain:
    return BoxDomain(np.full(dim, WEIGHT_LOG_LOWER), np.full(dim, WEIGHT_LOG_UPPER))


def hdv_desired_speed(theta, v_max: float) -> float:
    """Style-dependent cruise speed of the modeled human driver.

    Aggressiveness is read off the (scale-invariant) ratio of the speed
    weight to the smoothness weight; drivers range from 40 percent of the
    speed limit up to the limit itself.  Both the driver policy and the
    planner's game model use this value, so the prediction is consistent
    with the simulated behavior.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    alpha = np.clip((theta[1] - theta[0]) / 4.0, -1.0, 1.0)
    return float(v_max * (0.7 + 0.3 * alpha))


@dataclass
class ScenarioConfig:
    """Episode geometry and sampling distribution of initial conditions."""

    mpc: MPCConfig = field(default_factory=MPCConfig)
    hdv_horizon: int = 6
    exit_position: float = 15.0
    time_cap: float = 30.0
    p_init_range: tuple[float, float] = (-30.0, -20.0)
    v_init_range: tuple[float, float] = (3.0, 7.0)

    def __post_init__(self):
        if self.hdv_horizon < 1:
            raise ValueError("hdv_horizon must be at least 1")
        if self.time_cap <= 0:
            raise ValueError("time_cap must be positive")
        if self.exit_position <= 0:
            raise ValueError("exit_position must be past the conflict point")


@dataclass
class MetricConfig:
    lambda_time: float = 1.0
    lambda_acce: float = 5.0
    lambda_coll: float = 1e4
    sigmoid_scale: float = 1.0
    n_s: int = 20

    def __post_init__(self):
        if min(self.lambda_time, self.lambda_acce, self.lambda_coll) < 0:
            raise ValueError("metric weights must be nonnegative")
        if self.sigmoid_scale <= 0:
            raise ValueError("sigmoid_scale must be positive")
        if self.n_s < 1:
            raise ValueError("n_s must be at least 1")


@dataclass
class ScenarioOutcome:
    """Realized trajectories plus the summary quantities the metric needs."""

    times: np.ndarray
    p1: np.ndarray
    v1: np.ndarray
    a1: np.ndarray
    p2: np.ndarray
    v2: np.ndarray
    a2: np.ndarray
    exit_time: float
    coll_margin: float
    accel_integral: float
    exited: bool
    fallback_steps: int
    seed: int


def draw_initial_conditions(rng: np.random.Generator, cfg: ScenarioConfig):
    p_lo, p_hi = cfg.p_init_range
    v_lo, v_hi = cfg.v_init_range
    cav = VehicleState(p=rng.uniform(p_lo, p_hi), v=rng.uniform(v_lo, v_hi))
    hdv = VehicleState(p=rng.uniform(p_lo, p_hi), v=rng.uniform(v_lo, v_hi))
    return cav, hdv


def _clamped_step(state: VehicleState, a: float, cfg: MPCConfig) -> tuple[VehicleState, float]:
    """Apply acceleration with exact input bounds and speed clamping."""
    a = float(np.clip(a, cfg.u_min, cfg.u_max))
    a = float(np.clip(a, (cfg.v_min - state.v) / cfg.dt, (cfg.v_max - state.v) / cfg.dt))
    return step_dynamics(state, a, cfg.dt), a


def _exit_crossing_time(t0: float, state: VehicleState, a: float, dt: float,
                        exit_position: float) -> float:
    """Exact crossing time within a constant-acceleration step."""
    # solve p + v tau + a tau^2 / 2 = exit_position for the first tau in (0, dt]
    c = state.p - exit_position
    if abs(a) < 1e-12:
        tau = -c / state.v if state.v > 0 else dt
    else:
        disc = state.v ** 2 - 2.0 * a * c
        if disc < 0:
            tau = dt
        else:
            tau = (-state.v + np.sqrt(disc)) / a
            if not (0.0 < tau <= dt + 1e-12):
                tau = dt
    return t0 + float(np.clip(tau, 0.0, dt))


def simulate_episode(init: tuple[VehicleState, VehicleState], z, theta,
                     cfg: ScenarioConfig, seed: int = 0) -> ScenarioOutcome:
    """Run one closed-loop episode for weights 10**z against context 10**theta.

    Deterministic given its arguments; the seed is recorded in the outcome
    for audit manifests.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    dom = weight_log_domain()
    if not dom.contains(z):
        raise ValueError("z outside the log-weight domain")
    if not dom.contains(theta):
        raise ValueError("theta outside the log-weight domain")

    weights = MPCWeights(omega1=10.0 ** z, omega2=10.0 ** theta, omega12=1.0)
    mpc_cfg = cfg.mpc
    hdv_cfg = replace(mpc_cfg, horizon=cfg.hdv_horizon)
    v_des = hdv_desired_speed(theta, mpc_cfg.v_max)
    v_refs = (mpc_cfg.v_max, v_des)

    cav, hdv = init
    times = [0.0]
    p1, v1, a1 = [cav.p], [cav.v], []
    p2, v2, a2 = [hdv.p], [hdv.v], []
    warm_cav: np.ndarray | None = None
    warm_hdv: np.ndarray | None = None
    prev_mode: str | None = None
    fallback_steps = 0
    exited = False
    exit_time = cfg.time_cap
    t = 0.0
    n_steps = int(np.ceil(cfg.time_cap / mpc_cfg.dt))

    for step in range(n_steps):
        # re-evaluate the alternate terminal mode on a cadence; sticking to
        # the previous mode in between keeps replanning cheap and smooth
        sol = solve_mpc(cav, hdv, weights, mpc_cfg, warm_start=warm_cav,
                        v_ref=v_refs, preferred_mode=prev_mode,
                        explore_alternative=(prev_mode is None or step % 3 == 0))
        prev_mode = sol.mode if sol.mode in ("yield", "proceed") else None
        if not sol.feasible or sol.fallback:
            fallback_steps += 1
        a_cav = float(sol.u1[0])
        a_h = hdv_action(cav, hdv, weights.omega2, weights.omega12, hdv_cfg,
                         warm_start=warm_hdv, v_ref=v_des)
        warm_cav = np.concatenate([np.concatenate([sol.u1[1:], sol.u1[-1:]]),
                                   np.concatenate([sol.u2[1:], sol.u2[-1:]])])
        warm_hdv = np.full(cfg.hdv_horizon, a_h)

        prev_cav = cav
        cav, a_cav = _clamped_step(cav, a_cav, mpc_cfg)
        hdv, a_h = _clamped_step(hdv, a_h, mpc_cfg)
        a1.append(a_cav)
        a2.append(a_h)
        t += mpc_cfg.dt
        times.append(t)
        p1.append(cav.p)
        v1.append(cav.v)
        p2.append(hdv.p)
        v2.append(hdv.v)
        if cav.p >= cfg.exit_position:
            exited = True
            exit_time = _exit_crossing_time(t - mpc_cfg.dt, prev_cav, a_cav,
                                            mpc_cfg.dt, cfg.exit_position)
            break

    times = np.asarray(times)
    p1 = np.asarray(p1)
    p2 = np.asarray(p2)
    a1 = np.asarray(a1)
    coll = float(np.max(cfg.mpc.safety_radius ** 2 - (p1 ** 2 + p2 ** 2)))
    # squared-acceleration integral up to the exit time (fractional last step)
    step_starts = times[:-1]
    dt_eff = np.minimum(np.maximum(exit_time - step_starts, 0.0), mpc_cfg.dt)
    accel_integral = float(np.sum(a1 ** 2 * dt_eff))
    return ScenarioOutcome(times=times, p1=p1, v1=np.asarray(v1), a1=a1,
                           p2=p2, v2=np.asarray(v2), a2=np.asarray(a2),
                           exit_time=float(min(exit_time, cfg.time_cap)),
                           coll_margin=coll, accel_integral=accel_integral,
                           exited=exited, fallback_steps=fallback_steps,
                           seed=int(seed))


def _sigmoid(x: float) -> float:
    return float(1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0))))


def episode_metric(out: ScenarioOutcome, m: MetricConfig) -> float:
    """Time-energy cost with a saturating collision penalty (lower is better)."""
    return (m.lambda_time * out.exit_time
            + m.lambda_acce * out.accel_integral
            + m.lambda_coll * _sigmoid(out.coll_margin / m.sigmoid_scale))


def worst_case_metric(cfg: ScenarioConfig, m: MetricConfig) -> float:
    """Pessimistic stand-in for episodes that failed outright."""
    u_sq = max(cfg.mpc.u_min ** 2, cfg.mpc.u_max ** 2)
    return (m.lambda_time * cfg.time_cap
            + m.lambda_acce * u_sq * cfg.time_cap
            + m.lambda_coll)


def _run_episode_metric(args) -> float:
    init, z, theta, cfg, m, ep_seed = args
    try:
        return episode_metric(simulate_episode(init, z, theta, cfg, seed=ep_seed), m)
    except ValueError:
        raise
    except Exception:
        return worst_case_metric(cfg, m)


def performance(z, theta, cfg: ScenarioConfig, m: MetricConfig, seed: int,
                n_jobs: int = 1, pool=None) -> float:
    """Negative average metric over n_s episodes with i.i.d. initial states.

    Episodes are independent given their seeds, so the batch may run in
    parallel (pass `pool` to reuse workers across calls); results are
    averaged in draw order either way.
    """
    rng = np.random.default_rng(seed)
    jobs = []
    for _ in range(m.n_s):
        init = draw_initial_conditions(rng, cfg)
        ep_seed = int(rng.integers(0, 2 ** 31 - 1))
        jobs.append((init, np.asarray(z, float), np.asarray(theta, float),
                     cfg, m, ep_seed))
    if pool is not None and m.n_s > 1:
        metrics = pool.map(_run_episode_metric, jobs, chunksize=1)
    elif n_jobs > 1 and m.n_s > 1:
        with mp.Pool(processes=min(n_jobs, m.n_s)) as ephemeral:
            metrics = ephemeral.map(_run_episode_metric, jobs, chunksize=1)
    else:
        metrics = [_run_episode_metric(j) for j in jobs]
    return float(-np.mean(metrics))


class CavSimEvaluator(ObjectiveEvaluator):
    """Black-box objective backed by batches of simulated episodes.

    Each evaluate() call uses a fresh seed derived from the master seed
    and the call counter, so a rerun of the whole pipeline sees the same
    sequence of initial conditions.
    """

    def __init__(self, cfg: ScenarioConfig, metric: MetricConfig, seed: int = 0,
                 n_jobs: int = 1):
        self.cfg = cfg
        self.metric = metric
        self.seed = int(seed)
        self.n_jobs = int(n_jobs)
        self.n_calls = 0
        self._pool = None

    @property
    def z_domain(self) -> BoxDomain:
        return weight_log_domain()

    @property
    def theta_domain(self) -> BoxDomain:
        return weight_log_domain()

    def _ensure_pool(self):
        if self.n_jobs > 1 and self._pool is None:
            self._pool = mp.Pool(processes=self.n_jobs)
        return self._pool

    def close(self):
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def evaluate(self, z, theta) -> float:
        call_seed = int(np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.n_calls,)).generate_state(1)[0])
        self.n_calls += 1
        return performance(z, theta, self.cfg, self.metric, seed=call_seed,
                           pool=self._ensure_pool())
