import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxbo.sim.dynamics import (VehicleState, control_to_state_maps, rollout,
                                step_dynamics)

finite = st.floats(min_value=-100.0, max_value=100.0,
                   allow_nan=False, allow_infinity=False)


def test_constant_velocity_step():
    s = step_dynamics(VehicleState(0.0, 1.0), 0.0, 0.25)
    assert s.p == pytest.approx(0.25)
    assert s.v == pytest.approx(1.0)


def test_pure_acceleration_step():
    s = step_dynamics(VehicleState(0.0, 0.0), 2.0, 1.0)
    assert s.p == pytest.approx(1.0)
    assert s.v == pytest.approx(2.0)


@settings(max_examples=100, deadline=None)
@given(finite, finite, st.floats(min_value=-5.0, max_value=5.0),
       st.floats(min_value=1e-3, max_value=2.0))
def test_step_matches_closed_form_oracle(p, v, a, dt):
    s = step_dynamics(VehicleState(p, v), a, dt)
    assert abs(s.p - (p + dt * v + 0.5 * dt * dt * a)) <= 1e-12
    assert abs(s.v - (v + dt * a)) <= 1e-12


def test_nonfinite_state_rejected():
    with pytest.raises(ValueError):
        VehicleState(np.nan, 0.0)
    with pytest.raises(ValueError):
        VehicleState(0.0, np.inf)


def test_affine_maps_match_stepping(rng):
    H, dt = 9, 0.25
    u = rng.uniform(-4, 3, size=H)
    state = VehicleState(-12.0, 4.0)
    p_map, v_map = rollout(state, u, dt)
    s = state
    for k in range(H):
        s = step_dynamics(s, u[k], dt)
        assert p_map[k] == pytest.approx(s.p, abs=1e-10)
        assert v_map[k] == pytest.approx(s.v, abs=1e-10)


def test_map_shapes_and_structure():
    Mv, Mp, steps = control_to_state_maps(5, 0.5)
    assert Mv.shape == (5, 5) and Mp.shape == (5, 5)
    assert np.all(np.triu(Mv, 1) == 0.0)
    assert np.all(np.triu(Mp, 1) == 0.0)
    np.testing.assert_allclose(np.diag(Mp), 0.5 ** 2 * 0.5)
    np.testing.assert_allclose(steps, np.arange(1, 6))
