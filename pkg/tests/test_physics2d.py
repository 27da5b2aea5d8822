import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pushlab.physics2d import (
    BodyState,
    PhysParams,
    PusherState,
    ShapeSpec,
    SimulationInstabilityError,
    WorldConfig,
    advance,
    apply_friction,
    pusher_servo,
    resolve_contact,
    signed_distance,
    step_substeps,
)

G = 9.81
WORLD = WorldConfig()
DISC = ShapeSpec.disc(0.05)
BOX = ShapeSpec.rectangle(0.10, 0.06)


def speed(state):
    return math.hypot(state.vel[0], state.vel[1])


# -- servo -------------------------------------------------------------------
def test_servo_at_target_is_zero():
    assert np.array_equal(pusher_servo(PusherState((0.0, 0.0)), (0.0, 0.0)), [0.0, 0.0])


def test_servo_saturates():
    cmd = pusher_servo(PusherState((0.0, 0.0), servo_gain=10.0, max_speed=0.3), (1.0, 0.0))
    assert cmd == pytest.approx([0.3, 0.0], abs=1e-15)


def test_servo_proportional_below_limit():
    cmd = pusher_servo(PusherState((0.0, 0.0), servo_gain=10.0, max_speed=0.3), (0.01, 0.0))
    assert cmd == pytest.approx([0.1, 0.0], abs=1e-15)


def test_servo_rejects_non_finite_target():
    with pytest.raises(ValueError):
        pusher_servo(PusherState(), (math.nan, 0.0))


@given(
    st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
    st.floats(0.1, 50), st.floats(0.01, 1),
)
def test_servo_never_exceeds_max_speed(px, py, tx, ty, gain, vmax):
    cmd = pusher_servo(PusherState((px, py), servo_gain=gain, max_speed=vmax), (tx, ty))
    assert np.hypot(*cmd) <= vmax * (1 + 1e-12)
    # points at the target
    assert cmd[0] * (tx - px) >= -1e-15 and cmd[1] * (ty - py) >= -1e-15


# -- friction ----------------------------------------------------------------
def test_rest_stays_at_rest():
    out = apply_friction(BodyState((0.0, 0.0, 0.0)), PhysParams(0.5, 0.4, 0.005), 0.001, 0.05)
    assert out.vel == (0.0, 0.0, 0.0)


def test_friction_decrement_hand_value():
    out = apply_friction(BodyState(vel=(1.0, 0.0, 0.0)), PhysParams(0.5, 0.4, 0.0), 0.001, 0.05)
    assert out.vel[0] == pytest.approx(0.996076, abs=1e-12)


def test_friction_clamps_to_zero():
    out = apply_friction(BodyState(vel=(0.001, 0.0, 0.0)), PhysParams(0.5, 1.0, 0.0), 0.001, 0.05)
    assert out.vel[:2] == (0.0, 0.0)


def test_torsional_deceleration():
    out = apply_friction(BodyState(vel=(0.0, 0.0, 2.0)), PhysParams(1.0, 0.4, 0.01), 0.001, 0.05)
    assert out.vel[2] == pytest.approx(2.0 - 0.01 * G * 0.001 / 0.05, rel=1e-12)
    out = apply_friction(BodyState(vel=(0.0, 0.0, -1e-5)), PhysParams(1.0, 0.4, 0.01), 0.001, 0.05)
    assert out.vel[2] == 0.0


def test_friction_rejects_bad_dt():
    with pytest.raises(ValueError):
        apply_friction(BodyState(), PhysParams(1.0, 0.4, 0.01), 0.0, 0.05)


@given(
    st.floats(1e-4, 3.0), st.floats(0.0, 1.0), st.floats(-5, 5), st.floats(-5, 5), st.floats(-50, 50),
)
def test_friction_never_reverses(mass, mu, vx, vy, w):
    before = BodyState(vel=(vx, vy, w))
    after = apply_friction(before, PhysParams(mass, mu, 0.005), 0.001, 0.04)
    assert vx * after.vel[0] + vy * after.vel[1] >= 0.0
    assert w * after.vel[2] >= 0.0
    assert speed(after) <= speed(before)
    assert abs(after.vel[2]) <= abs(w)


@settings(max_examples=200)
@given(st.floats(1e-4, 3.0), st.floats(0.2, 1.0), st.floats(0.05, 3.0), st.floats(-math.pi, math.pi))
def test_friction_decrement_independent_of_mass(mass, mu, v, angle):
    before = BodyState(vel=(v * math.cos(angle), v * math.sin(angle), 0.0))
    after = apply_friction(before, PhysParams(mass, mu, 0.0), 0.001, 0.05)
    assert speed(before) - speed(after) == pytest.approx(mu * G * 0.001, rel=1e-9)


# -- contact -----------------------------------------------------------------
def test_no_contact_far_away():
    c = resolve_contact(BodyState(), DISC, 0.5, PusherState((1.0, 0.0)), WORLD)
    assert np.array_equal(c.force, [0.0, 0.0]) and c.torque == 0.0


def test_head_on_disc_contact_is_central():
    delta = 1e-4
    pusher = PusherState((-(0.05 + 0.005 - delta), 0.0))
    c = resolve_contact(BodyState(), DISC, 0.5, pusher, WORLD)
    assert c.force[0] > 0
    assert c.force[1] == 0.0
    assert c.torque == pytest.approx(0.0, abs=1e-15)
    assert c.penetration == pytest.approx(delta, rel=1e-9)
    k, _, _ = WORLD.contact_coefficients(0.5)
    assert c.force[0] == pytest.approx(k * delta, rel=1e-9)


def test_contact_is_never_attractive():
    # pusher moving away from the object: damping must not pull it along
    pusher = PusherState((-(0.05 + 0.005 - 1e-5), 0.0))
    c = resolve_contact(BodyState(), DISC, 0.5, pusher, WORLD, pusher_vel=(-5.0, 0.0))
    assert c.force[0] >= 0.0


def test_penetration_limit_raises():
    pusher = PusherState((-(0.05 + 0.005 - 0.0006), 0.0))
    with pytest.raises(SimulationInstabilityError):
        resolve_contact(BodyState(), DISC, 0.5, pusher, WORLD)


@pytest.mark.parametrize("offset", [0.02, -0.02])
def test_off_center_rectangle_torque_sign(offset):
    # pusher pressing on the -x face at height ``offset``
    pusher = PusherState((-(0.05 + 0.005 - 1e-4), offset))
    obj = BodyState()
    c = resolve_contact(obj, BOX, 0.5, pusher, WORLD)
    r = c.point - obj.position
    cross = r[0] * c.force[1] - r[1] * c.force[0]
    assert np.sign(c.torque) == np.sign(cross) != 0
    # brute force: let the contact act without friction and watch the angle
    after, _ = advance(obj, BOX, PhysParams(0.5, 0.0, 0.0, damping=0.0), pusher, pusher.pos, 1, WORLD)
    assert np.sign(after.pose[2]) == np.sign(c.torque)


def test_signed_distance():
    assert signed_distance(BodyState(), DISC, (0.07, 0.0)) == pytest.approx(0.02)
    assert signed_distance(BodyState(), DISC, (0.0, 0.0)) == pytest.approx(-0.05)
    assert signed_distance(BodyState((0, 0, math.pi / 2)), BOX, (0.0, 0.06)) == pytest.approx(0.01)
    assert signed_distance(BodyState(), BOX, (0.0, 0.0)) == pytest.approx(-0.03)


# -- stepping ----------------------------------------------------------------
def test_far_pusher_leaves_object_unchanged():
    obj = BodyState((0.05, -0.02, 0.3))
    after, pusher = step_substeps(obj, DISC, PhysParams(0.5, 0.4, 0.005), PusherState((-0.18, 0.18)),
                                  (-0.17, 0.18), 10, WORLD)
    assert after == obj
    assert pusher.pos[0] > -0.18


def _push(mu_k, shape=DISC):
    obj = BodyState((0.0, 0.0, 0.0))
    pusher = PusherState((-0.07, 0.0))
    after, _ = step_substeps(obj, shape, PhysParams(0.5, mu_k, 0.005), pusher, (0.05, 0.0), 600, WORLD)
    return after


def test_push_displaces_along_push_direction():
    after = _push(0.4)
    assert after.pose[0] > 0.01
    assert abs(after.pose[1]) < 1e-9


def test_lower_friction_slides_farther():
    assert _push(0.2).pose[0] > _push(1.0).pose[0]


def test_substep_count_validated():
    for n in (9, 601, 10.5):
        with pytest.raises(ValueError):
            step_substeps(BodyState(), DISC, PhysParams(0.5, 0.4, 0.005), PusherState((0.1, 0.1)), (0.1, 0.1), n, WORLD)


def test_deterministic():
    runs = [_push(0.3, BOX) for _ in range(2)]
    assert runs[0] == runs[1]


def test_object_stays_on_table():
    obj = BodyState((0.19, 0.0, 0.0), vel=(2.0, 0.5, 0.0))
    after, _ = advance(obj, DISC, PhysParams(0.5, 0.2, 0.005), PusherState((-0.19, -0.19)), (-0.19, -0.19), 200, WORLD)
    x0, y0, x1, y1 = WORLD.table_bounds
    assert x0 <= after.pose[0] <= x1 and y0 <= after.pose[1] <= y1
    assert after.pose[0] == x1


def test_pusher_does_not_sink_into_object():
    obj = BodyState((0.0, 0.0, 0.0))
    after, pusher = step_substeps(obj, BOX, PhysParams(2.5, 1.0, 0.01), PusherState((-0.08, 0.01)), (0.1, 0.01), 600, WORLD)
    assert -signed_distance(after, BOX, pusher.pos) + 0.0 <= 0.005 + 0.1 * 0.005


def test_theta_wrapped():
    obj = BodyState((0.0, 0.0, math.pi - 1e-4), vel=(0.0, 0.0, 5.0))
    after, _ = advance(obj, DISC, PhysParams(0.5, 0.4, 0.0, damping=0.0), PusherState((0.19, 0.19)), (0.19, 0.19), 20, WORLD)
    assert -math.pi < after.pose[2] <= math.pi
    assert after.pose[2] < 0


def test_invalid_parameters():
    with pytest.raises(ValueError):
        ShapeSpec.disc(-0.01)
    with pytest.raises(ValueError):
        PhysParams(0.0, 0.4, 0.005)
    with pytest.raises(ValueError):
        WorldConfig(dt_substep=0.002)
