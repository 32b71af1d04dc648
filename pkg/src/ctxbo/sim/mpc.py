"""Joint-planner MPC for the intersection crossing scenario.

The automated vehicle plans accelerations for itself and the human-driven
vehicle over a shared horizon, minimizing a summed stage cost

    sum_k [ w_i1 a_i^2 + w_i2 (v_i - v_ref)^2 ]  -  w12 log(p1^2 + p2^2 + eps)

subject to acceleration bounds for both vehicles, speed bounds for the
controlled vehicle, and a hard safety margin r^2 <= p1^2 + p2^2 at every
predicted step.  Positions and speeds are affine in the acceleration
sequence, so objective and constraint gradients are exact and the problem
is solved with SLSQP over the stacked 2H accelerations, warm-started from
the previous shifted solution.  Weights are normalized by their mean
before solving (the minimizer is invariant to positive scaling), and a
maximum-braking sequence serves as the fallback when no feasible point is
found.

The human driver is modeled with the same machinery: it optimizes only
its own smoothness/speed terms plus the shared log-distance penalty over
a shorter horizon, assuming the other vehicle keeps constant speed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .dynamics import VehicleState, control_to_state_maps

MAX_SPEED = "max_speed"
CAR_FOLLOWING = "car_following"

SPEED_TOLERANCE = 1e-4
SAFETY_TOLERANCE = 1e-3


@dataclass
class MPCWeights:
    """Objective weights: own terms per vehicle plus the shared coupling."""

    omega1: np.ndarray  # (accel, speed-tracking) weights of the controlled vehicle
    omega2: np.ndarray  # same for the human-driven vehicle
    omega12: float = 1.0

    def __post_init__(self):
        self.omega1 = np.atleast_1d(np.asarray(self.omega1, dtype=float))
        self.omega2 = np.atleast_1d(np.asarray(self.omega2, dtype=float))
        if self.omega1.shape != (2,) or self.omega2.shape != (2,):
            raise ValueError("omega1 and omega2 must be 2-vectors")
        self.omega12 = float(self.omega12)
        if np.any(self.omega1 <= 0) or np.any(self.omega2 <= 0) or self.omega12 <= 0:
            raise ValueError("all weights must be strictly positive")

    def scaled(self, factor: float) -> "MPCWeights":
        return MPCWeights(self.omega1 * factor, self.omega2 * factor,
                          self.omega12 * factor)

    def mean_magnitude(self) -> float:
        return float((self.omega1.sum() + self.omega2.sum() + self.omega12) / 5.0)

    def normalized(self) -> "MPCWeights":
        """Unit-mean weights, rounded so that w and c*w (c > 0) map to the
        bit-identical problem and the solver path cannot diverge on ulps."""
        scale = self.mean_magnitude()

        def q(x):
            return np.round(np.asarray(x, dtype=float) / scale, 12)

        return MPCWeights(q(self.omega1), q(self.omega2), float(q(self.omega12)))


@dataclass
class MPCConfig:
    """Horizon, discretization, bounds, and safety geometry.

    `safety_margin` tightens the radius used while planning, covering the
    one-step prediction mismatch of the other vehicle (at most
    u-range * dt^2 / 2 in position) and keeping realized near-boundary
    passes clear of the collision-penalty transition band; the hard
    requirement stays `safety_radius`.
    """

    horizon: int = 12
    dt: float = 0.25
    u_min: float = -5.0
    u_max: float = 3.0
    v_min: float = 0.0
    v_max: float = 10.0
    safety_radius: float = 5.0
    safety_margin: float = 0.5
    robust_steps: int = 4
    eps: float = 1e-3
    v_ref_policy: str = MAX_SPEED

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (self.u_min < 0 < self.u_max):
            raise ValueError("acceleration bounds must straddle zero")
        if not (0 <= self.v_min < self.v_max):
            raise ValueError("require 0 <= v_min < v_max")
        if self.safety_radius <= 0 or self.eps <= 0:
            raise ValueError("safety_radius and eps must be positive")
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be nonnegative")
        if self.robust_steps < 0:
            raise ValueError("robust_steps must be nonnegative")
        if self.v_ref_policy not in (MAX_SPEED, CAR_FOLLOWING):
            raise ValueError(f"unknown v_ref_policy {self.v_ref_policy!r}")

    @property
    def planning_radius(self) -> float:
        return self.safety_radius + self.safety_margin


def car_following_reference(own: VehicleState, lead: VehicleState, cfg: MPCConfig,
                            time_headway: float = 1.5, standstill_gap: float = 5.0) -> float:
    """Constant-time-headway speed reference behind a leading vehicle."""
    gap = lead.p - own.p - standstill_gap
    return float(np.clip(gap / time_headway, 0.0, cfg.v_max))


def resolve_v_ref(cfg: MPCConfig, lead: VehicleState | None = None,
                  own: VehicleState | None = None) -> float:
    if cfg.v_ref_policy == CAR_FOLLOWING and lead is not None and own is not None:
        return car_following_reference(own, lead, cfg)
    return cfg.v_max


def mpc_objective(x1, u1, x2, u2, w: MPCWeights, cfg: MPCConfig,
                  v_ref: tuple[float, float] | None = None) -> float:
    """Stage-cost sum over a predicted trajectory.

    x_i are (H+1, 2) arrays of [position, speed] rows including the current
    state; u_i are the H accelerations.  Passing x2/u2 as None drops the
    second vehicle's terms and the shared coupling.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    u1 = np.atleast_1d(np.asarray(u1, dtype=float))
    H = u1.size
    if x1.shape != (H + 1, 2):
        raise ValueError("x1 must have H+1 states for H inputs")
    vr1 = cfg.v_max if v_ref is None else v_ref[0]
    total = float(w.omega1[0] * (u1 @ u1)
                  + w.omega1[1] * np.sum((x1[1:, 1] - vr1) ** 2))
    if x2 is None:
        return total
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    u2 = np.atleast_1d(np.asarray(u2, dtype=float))
    if x2.shape != (H + 1, 2) or u2.size != H:
        raise ValueError("x2/u2 must match the horizon of x1/u1")
    vr2 = cfg.v_max if v_ref is None else v_ref[1]
    total += float(w.omega2[0] * (u2 @ u2)
                   + w.omega2[1] * np.sum((x2[1:, 1] - vr2) ** 2))
    dist_sq = x1[1:, 0] ** 2 + x2[1:, 0] ** 2
    total -= float(w.omega12 * np.sum(np.log(dist_sq + cfg.eps)))
    return total


def braking_sequence(state: VehicleState, cfg: MPCConfig, horizon: int | None = None
                     ) -> np.ndarray:
    """Maximum braking that respects the speed floor exactly."""
    H = cfg.horizon if horizon is None else horizon
    u = np.empty(H)
    v = state.v
    for k in range(H):
        a = max(cfg.u_min, (cfg.v_min - v) / cfg.dt)
        a = min(a, cfg.u_max)
        u[k] = a
        v = v + cfg.dt * a
    return u


@dataclass
class MPCSolution:
    u1: np.ndarray
    u2: np.ndarray | None
    objective: float
    feasible: bool
    fallback: bool
    mode: str = "free"


# terminal-safety modes: every plan must end in a posture that stays safe
# no matter what the other vehicle does afterwards (recursive feasibility
# with a horizon shorter than the approach); the free mode applies when the
# other vehicle provably cannot make the conflict zone relevant in time
MODE_YIELD = "yield"      # terminal state can still stop short of the conflict
MODE_PROCEED = "proceed"  # terminal state has fully cleared the conflict
MODE_FREE = "free"
BRAKE_EFFICIENCY = 0.98   # discretization slack in the stop-distance bound


class JointPlanningProblem:
    """Cached rollouts, objective/constraint values and exact gradients."""

    def __init__(self, x1: VehicleState, x2: VehicleState, w: MPCWeights,
                 cfg: MPCConfig, v_ref: tuple[float, float], mode: str = MODE_YIELD):
        self.x1, self.x2, self.w, self.cfg = x1, x2, w, cfg
        self.vr1, self.vr2 = v_ref
        self.mode = mode
        H = cfg.horizon
        self.H = H
        self.Mv, self.Mp, self.steps = control_to_state_maps(H, cfg.dt)
        # course-holding other-vehicle rollout: the plan may choose u2, but
        # near-term clearance is additionally required against the other
        # vehicle simply keeping its current speed (it owes us nothing
        # within the next few replanning cycles)
        self.hold_steps = min(cfg.robust_steps, H)
        self.P2_hold = (x2.p + self.steps * cfg.dt * x2.v)[:self.hold_steps]
        self._u_key = None
        self._cache = None

    def _roll(self, u):
        key = u.tobytes()
        if key != self._u_key:
            H = self.H
            u1, u2 = u[:H], u[H:]
            V1 = self.x1.v + self.Mv @ u1
            P1 = self.x1.p + self.steps * self.cfg.dt * self.x1.v + self.Mp @ u1
            V2 = self.x2.v + self.Mv @ u2
            P2 = self.x2.p + self.steps * self.cfg.dt * self.x2.v + self.Mp @ u2
            self._u_key = key
            self._cache = (u1.copy(), u2.copy(), P1, V1, P2, V2)
        return self._cache

    def objective(self, u):
        u1, u2, P1, V1, P2, V2 = self._roll(u)
        w, cfg = self.w, self.cfg
        dist_sq = P1 ** 2 + P2 ** 2
        return float(w.omega1[0] * (u1 @ u1) + w.omega1[1] * np.sum((V1 - self.vr1) ** 2)
                     + w.omega2[0] * (u2 @ u2) + w.omega2[1] * np.sum((V2 - self.vr2) ** 2)
                     - w.omega12 * np.sum(np.log(dist_sq + cfg.eps)))

    def gradient(self, u):
        u1, u2, P1, V1, P2, V2 = self._roll(u)
        w = self.w
        denom = P1 ** 2 + P2 ** 2 + self.cfg.eps
        g1 = (2.0 * w.omega1[0] * u1 + 2.0 * w.omega1[1] * (self.Mv.T @ (V1 - self.vr1))
              - w.omega12 * (self.Mp.T @ (2.0 * P1 / denom)))
        g2 = (2.0 * w.omega2[0] * u2 + 2.0 * w.omega2[1] * (self.Mv.T @ (V2 - self.vr2))
              - w.omega12 * (self.Mp.T @ (2.0 * P2 / denom)))
        return np.concatenate([g1, g2])

    # inequality vector g(u) >= 0:
    #   [V1 - v_min, v_max - V1, P1^2 + P2^2 - r_plan^2,
    #    P1^2 + P2_hold^2 - r_plan^2, terminal-safety]
    def constraints(self, u):
        _, _, P1, V1, P2, _ = self._roll(u)
        cfg = self.cfg
        r_sq = cfg.planning_radius ** 2
        base = np.concatenate([V1 - cfg.v_min, cfg.v_max - V1,
                               P1 ** 2 + P2 ** 2 - r_sq,
                               P1[:self.hold_steps] ** 2 + self.P2_hold ** 2 - r_sq])
        if self.mode == MODE_FREE:
            return base
        if self.mode == MODE_YIELD:
            brake = BRAKE_EFFICIENCY * abs(cfg.u_min)
            term = -cfg.planning_radius - (P1[-1] + V1[-1] ** 2 / (2.0 * brake))
        else:  # MODE_PROCEED
            term = P1[-1] - cfg.planning_radius
        return np.concatenate([base, [term]])

    def constraints_jac(self, u):
        _, _, P1, V1, P2, _ = self._roll(u)
        H = self.H
        cfg = self.cfg
        Z = np.zeros((H, H))
        top = np.block([[self.Mv, Z], [-self.Mv, Z]])
        safety = np.hstack([2.0 * P1[:, None] * self.Mp, 2.0 * P2[:, None] * self.Mp])
        hs = self.hold_steps
        hold = np.hstack([2.0 * P1[:hs, None] * self.Mp[:hs], Z[:hs]])
        if self.mode == MODE_FREE:
            return np.vstack([top, safety, hold])
        if self.mode == MODE_YIELD:
            brake = BRAKE_EFFICIENCY * abs(cfg.u_min)
            term1 = -(self.Mp[-1] + (V1[-1] / brake) * self.Mv[-1])
        else:
            term1 = self.Mp[-1].copy()
        term = np.concatenate([term1, np.zeros(H)])[None, :]
        return np.vstack([top, safety, hold, term])

    def violation(self, u, planning: bool = True) -> tuple[float, float]:
        """(speed violation, safety+terminal violation) magnitudes at u.

        With planning=False the check relaxes to the bare requirements:
        true safety radius, no terminal condition.
        """
        _, _, P1, V1, P2, _ = self._roll(u)
        cfg = self.cfg
        speed = float(max(np.maximum(cfg.v_min - V1, 0.0).max(initial=0.0),
                          np.maximum(V1 - cfg.v_max, 0.0).max(initial=0.0)))
        radius = cfg.planning_radius if planning else cfg.safety_radius
        margin = radius ** 2 - (P1 ** 2 + P2 ** 2)
        safety = float(np.maximum(margin, 0.0).max(initial=0.0))
        if planning:
            hold = radius ** 2 - (P1[:self.hold_steps] ** 2 + self.P2_hold ** 2)
            safety = max(safety, float(np.maximum(hold, 0.0).max(initial=0.0)))
            if self.mode != MODE_FREE:
                term = float(self.constraints(u)[-1])
                safety = max(safety, max(-term, 0.0))
        return speed, safety


def _max_progress_position(state: VehicleState, cfg: MPCConfig) -> float:
    """Terminal position under full throttle with the speed cap."""
    v, p = state.v, state.p
    for _ in range(cfg.horizon):
        a = min(cfg.u_max, (cfg.v_max - v) / cfg.dt)
        a = max(a, cfg.u_min)
        p += cfg.dt * v + 0.5 * cfg.dt * cfg.dt * a
        v += cfg.dt * a
    return p


def _stop_short_position(state: VehicleState, cfg: MPCConfig) -> float:
    """Resting position under immediate maximum braking."""
    u = braking_sequence(state, cfg, horizon=max(
        cfg.horizon, int(np.ceil(state.v / (abs(cfg.u_min) * cfg.dt))) + 1))
    p, v = state.p, state.v
    for a in u:
        p += cfg.dt * v + 0.5 * cfg.dt * cfg.dt * a
        v += cfg.dt * a
    return p


def emergency_action(x1: VehicleState, cfg: MPCConfig) -> np.ndarray:
    """Dilemma-zone rule: stop short if still possible, otherwise clear out."""
    if _stop_short_position(x1, cfg) <= -cfg.planning_radius:
        return braking_sequence(x1, cfg)
    u = np.empty(cfg.horizon)
    v = x1.v
    for k in range(cfg.horizon):
        a = min(cfg.u_max, (cfg.v_max - v) / cfg.dt)
        a = max(a, cfg.u_min)
        u[k] = a
        v += cfg.dt * a
    return u


def _min_time_to_position(state: VehicleState, target: float, cfg: MPCConfig,
                          horizon_cap: float) -> float:
    """Earliest arrival at `target` under full throttle, capped."""
    if state.p >= target:
        return 0.0
    p, v, t = state.p, state.v, 0.0
    while t < horizon_cap:
        a = min(cfg.u_max, (cfg.v_max - v) / cfg.dt)
        a = max(a, cfg.u_min)
        p += cfg.dt * v + 0.5 * cfg.dt * cfg.dt * a
        v += cfg.dt * a
        t += cfg.dt
        if p >= target:
            return t
    return horizon_cap


def _conflict_is_live(x1: VehicleState, x2: VehicleState, cfg: MPCConfig) -> bool:
    """Whether terminal-safety discipline is needed against this vehicle.

    The conflict is ignorable when the other vehicle has fully cleared the
    zone, or cannot reach it (even at full throttle) before the controlled
    vehicle could clear out at full throttle from wherever it is.
    """
    r = cfg.planning_radius
    if x2.p >= r:
        return False  # cleared, and positions never move backwards
    window = cfg.horizon * cfg.dt + cfg.v_max / abs(cfg.u_min) + 2.0
    hdv_arrival = _min_time_to_position(x2, -r, cfg, horizon_cap=window)
    cav_clear = _min_time_to_position(x1, r, cfg, horizon_cap=window)
    return hdv_arrival < min(cav_clear + 1.0, window)


def solve_mpc(x1: VehicleState, x2: VehicleState | None, w: MPCWeights,
              cfg: MPCConfig, warm_start: np.ndarray | None = None,
              v_ref: tuple[float, float] | None = None,
              preferred_mode: str | None = None,
              explore_alternative: bool = True) -> MPCSolution:
    """Plan accelerations for both vehicles from the current states.

    Solves the reachable terminal-safety variants (yield / proceed) and
    returns the best feasible plan, also never worse than the braking
    fallback when that is feasible.  With x2 None the interaction terms
    are dropped and only the controlled vehicle is planned.  When nothing
    satisfies the planning constraints an emergency sequence is returned,
    flagged infeasible if it violates the true safety radius.

    `preferred_mode` orders the variants; with `explore_alternative`
    False the other variant is skipped whenever the preferred one is
    feasible (receding-horizon callers re-evaluate on a cadence).
    """
    if x2 is None:
        return _solve_single(x1, w, cfg, warm_start=warm_start, v_ref=v_ref)
    H = cfg.horizon
    vr = (resolve_v_ref(cfg), resolve_v_ref(cfg)) if v_ref is None else v_ref
    ws = w.normalized()  # minimizer invariant to positive scaling

    if not _conflict_is_live(x1, x2, cfg):
        modes = [MODE_FREE]
    else:
        modes = []
        if _stop_short_position(x1, cfg) <= -cfg.planning_radius + 0.5:
            modes.append(MODE_YIELD)
        if _max_progress_position(x1, cfg) >= cfg.planning_radius - 0.5:
            modes.append(MODE_PROCEED)
        if not modes:
            modes = [MODE_YIELD, MODE_PROCEED]
        if preferred_mode in modes and modes[0] != preferred_mode:
            modes = [preferred_mode] + [m for m in modes if m != preferred_mode]

    brake = np.concatenate([braking_sequence(x1, cfg), braking_sequence(x2, cfg)])
    bounds = [(cfg.u_min, cfg.u_max)] * (2 * H)

    best: tuple[np.ndarray, float, str] | None = None
    ref_mode = MODE_FREE if modes == [MODE_FREE] else MODE_YIELD
    ref_prob = JointPlanningProblem(x1, x2, ws, cfg, vr, mode=ref_mode)
    for mode in modes:
        if best is not None and not explore_alternative:
            break
        prob = JointPlanningProblem(x1, x2, ws, cfg, vr, mode=mode)
        starts = []
        if warm_start is not None and np.asarray(warm_start).size == 2 * H:
            starts.append(np.clip(np.asarray(warm_start, dtype=float),
                                  cfg.u_min, cfg.u_max))
        starts.append(np.zeros(2 * H))
        starts.append(brake)
        cons = [{"type": "ineq", "fun": prob.constraints, "jac": prob.constraints_jac}]
        for u0 in starts:
            res = minimize(prob.objective, u0, jac=prob.gradient, bounds=bounds,
                           constraints=cons, method="SLSQP",
                           options={"maxiter": 45, "ftol": 1e-10})
            u = np.clip(res.x, cfg.u_min, cfg.u_max)
            speed_v, safety_v = prob.violation(u)
            if speed_v <= SPEED_TOLERANCE and safety_v <= SAFETY_TOLERANCE:
                obj = prob.objective(u)
                if best is None or obj < best[1]:
                    best = (u, obj, mode)
                break  # starts are ordered by preference within a mode

    # never return something worse than feasible braking (yield posture)
    brake_speed, brake_safety = ref_prob.violation(brake)
    used_fallback = False
    if brake_speed <= SPEED_TOLERANCE and brake_safety <= SAFETY_TOLERANCE:
        obj = ref_prob.objective(brake)
        if best is None or obj < best[1]:
            best = (brake, obj, MODE_YIELD)
            used_fallback = True

    if best is None:
        emerg = np.concatenate([emergency_action(x1, cfg),
                                braking_sequence(x2, cfg)])
        speed_v, safety_v = ref_prob.violation(emerg, planning=False)
        ok = speed_v <= SPEED_TOLERANCE and safety_v <= SAFETY_TOLERANCE
        return MPCSolution(u1=emerg[:H], u2=emerg[H:],
                           objective=_true_objective(x1, x2, emerg, w, cfg, vr),
                           feasible=bool(ok), fallback=True, mode="emergency")
    u_best, _, mode = best
    return MPCSolution(u1=u_best[:H], u2=u_best[H:],
                       objective=_true_objective(x1, x2, u_best, w, cfg, vr),
                       feasible=True, fallback=used_fallback, mode=mode)


def _true_objective(x1, x2, u, w, cfg, vr) -> float:
    prob = JointPlanningProblem(x1, x2, w, cfg, vr)
    return prob.objective(u)


class _SingleProblem:
    """Tracking-only problem for the controlled vehicle (no interaction)."""

    def __init__(self, x1: VehicleState, w: MPCWeights, cfg: MPCConfig, vr1: float):
        self.x1, self.w, self.cfg, self.vr1 = x1, w, cfg, vr1
        self.Mv, self.Mp, self.steps = control_to_state_maps(cfg.horizon, cfg.dt)

    def objective(self, u):
        V1 = self.x1.v + self.Mv @ u
        return float(self.w.omega1[0] * (u @ u)
                     + self.w.omega1[1] * np.sum((V1 - self.vr1) ** 2))

    def gradient(self, u):
        V1 = self.x1.v + self.Mv @ u
        return 2.0 * self.w.omega1[0] * u + 2.0 * self.w.omega1[1] * (self.Mv.T @ (V1 - self.vr1))

    def constraints(self, u):
        V1 = self.x1.v + self.Mv @ u
        return np.concatenate([V1 - self.cfg.v_min, self.cfg.v_max - V1])

    def constraints_jac(self, u):
        return np.vstack([self.Mv, -self.Mv])


def _solve_single(x1: VehicleState, w: MPCWeights, cfg: MPCConfig,
                  warm_start: np.ndarray | None = None,
                  v_ref: tuple[float, float] | None = None) -> MPCSolution:
    H = cfg.horizon
    vr1 = resolve_v_ref(cfg) if v_ref is None else v_ref[0]
    ws = w.normalized()
    prob = _SingleProblem(x1, ws, cfg, vr1)
    u0 = np.zeros(H)
    if warm_start is not None and np.asarray(warm_start).size >= H:
        u0 = np.clip(np.asarray(warm_start, dtype=float)[:H], cfg.u_min, cfg.u_max)
    res = minimize(prob.objective, u0, jac=prob.gradient,
                   bounds=[(cfg.u_min, cfg.u_max)] * H,
                   constraints=[{"type": "ineq", "fun": prob.constraints,
                                 "jac": prob.constraints_jac}],
                   method="SLSQP", options={"maxiter": 60, "ftol": 1e-10})
    u = np.clip(res.x, cfg.u_min, cfg.u_max)
    if np.min(prob.constraints(u)) < -SPEED_TOLERANCE:
        u = braking_sequence(x1, cfg)
        return MPCSolution(u1=u, u2=None, objective=prob.objective(u),
                           feasible=False, fallback=True)
    return MPCSolution(u1=u, u2=None, objective=prob.objective(u),
                       feasible=True, fallback=False)


def hdv_action(x1: VehicleState, x2: VehicleState, omega2, omega12: float,
               cfg: MPCConfig, warm_start: np.ndarray | None = None,
               v_ref: float | None = None) -> float:
    """First acceleration of the modeled human driver's own plan.

    The driver optimizes its smoothness and speed-tracking terms plus the
    shared log-distance penalty over cfg.horizon steps, predicting the
    other vehicle at constant speed, subject to its own acceleration and
    speed bounds.  Falls back to braking if the solver fails.
    """
    omega2 = np.atleast_1d(np.asarray(omega2, dtype=float))
    if omega2.shape != (2,) or np.any(omega2 <= 0) or omega12 <= 0:
        raise ValueError("omega2 must be a positive 2-vector and omega12 positive")
    H = cfg.horizon
    Mv, Mp, steps = control_to_state_maps(H, cfg.dt)
    vr2 = cfg.v_max if v_ref is None else float(v_ref)
    scale = (omega2.sum() + omega12) / 3.0
    w21, w22 = np.round(omega2 / scale, 12)
    w12 = round(omega12 / scale, 12)
    P1 = x1.p + steps * cfg.dt * x1.v  # constant-speed prediction

    def objective(u):
        V2 = x2.v + Mv @ u
        P2 = x2.p + steps * cfg.dt * x2.v + Mp @ u
        return float(w21 * (u @ u) + w22 * np.sum((V2 - vr2) ** 2)
                     - w12 * np.sum(np.log(P1 ** 2 + P2 ** 2 + cfg.eps)))

    def gradient(u):
        V2 = x2.v + Mv @ u
        P2 = x2.p + steps * cfg.dt * x2.v + Mp @ u
        denom = P1 ** 2 + P2 ** 2 + cfg.eps
        return (2.0 * w21 * u + 2.0 * w22 * (Mv.T @ (V2 - vr2))
                - w12 * (Mp.T @ (2.0 * P2 / denom)))

    def speed_cons(u):
        V2 = x2.v + Mv @ u
        return np.concatenate([V2 - cfg.v_min, cfg.v_max - V2])

    def speed_jac(u):
        return np.vstack([Mv, -Mv])

    u0 = np.zeros(H)
    if warm_start is not None and np.asarray(warm_start).size >= H:
        u0 = np.clip(np.asarray(warm_start, dtype=float)[:H], cfg.u_min, cfg.u_max)
    res = minimize(objective, u0, jac=gradient, bounds=[(cfg.u_min, cfg.u_max)] * H,
                   constraints=[{"type": "ineq", "fun": speed_cons, "jac": speed_jac}],
                   method="SLSQP", options={"maxiter": 40, "ftol": 1e-10})
    if not np.all(np.isfinite(res.x)) or np.min(speed_cons(np.clip(
            res.x, cfg.u_min, cfg.u_max))) < -SPEED_TOLERANCE:
        return float(braking_sequence(x2, cfg)[0])
    return float(np.clip(res.x[0], cfg.u_min, cfg.u_max))


def select_active_hdv(cav: VehicleState, hdvs) -> int | None:
    """Index of the first human vehicle that has not yet crossed.

    Among vehicles still upstream (p < 0) returns the one closest to the
    conflict point; None when all have crossed.
    """
    if not hdvs:
        raise ValueError("need at least one human-driven vehicle")
    best_idx, best_p = None, -np.inf
    for i, s in enumerate(hdvs):
        if s.p < 0 and s.p > best_p:
            best_idx, best_p = i, s.p
    return best_idx
