import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aeroforce.core import ValidationError, quat_to_matrix
from aeroforce.dynamics import (
    ContactSurface,
    DisturbanceProfile,
    DisturbanceWindow,
    Plant,
    PlantConfig,
    RigidBodyParams,
    SimState,
    SimulationFault,
    contact_wrench,
    coriolis_matrix,
    gravity_wrench,
    mass_matrix,
    step,
)
from aeroforce.geometry import Plane


def floor(k_w=1000.0, c_w=0.0, mu=0.0):
    return ContactSurface(Plane([0, 0, 0], [0, 0, 1]), k_w=k_w, c_w=c_w, mu=mu)


def test_unit_mass_matrix_is_identity():
    assert np.array_equal(mass_matrix(RigidBodyParams(mass=1.0, inertia=np.eye(3))), np.eye(6))


def test_coriolis_vanishes_at_rest_and_matches_cross_products():
    P = RigidBodyParams()
    assert np.array_equal(coriolis_matrix(P, np.r_[1.0, 2.0, 3.0, 0, 0, 0]), np.zeros((6, 6)))
    nu = np.array([0.3, -0.2, 0.1, 0.5, -1.0, 2.0])
    v, w = nu[:3], nu[3:]
    expected = np.r_[P.mass * np.cross(w, v), np.cross(w, P.inertia @ w)]
    np.testing.assert_allclose(coriolis_matrix(P, nu) @ nu, expected, atol=1e-12)


def test_gravity_wrench_level_attitude():
    g = gravity_wrench(RigidBodyParams(mass=4.2), np.eye(3))
    np.testing.assert_allclose(g, [0, 0, -41.202, 0, 0, 0], atol=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 1e-2))
def test_gravity_depends_only_on_attitude(q):
    R = quat_to_matrix(np.array(q) / np.linalg.norm(q))
    g = gravity_wrench(RigidBodyParams(), R)
    assert np.isclose(np.linalg.norm(g[:3]), 4.2 * 9.81)
    np.testing.assert_allclose(R @ g[:3], [0, 0, -4.2 * 9.81], atol=1e-9)


def test_hover_is_an_equilibrium():
    P = RigidBodyParams()
    s0 = SimState.at_rest([0, 0, 1.5])
    s = s0
    hold = -gravity_wrench(P, np.eye(3))
    for _ in range(1000):
        s, _ = step(s, hold, P, dt=1e-3)
    assert np.abs(s.position - s0.position).max() < 1e-9 * 1000
    assert np.abs(s.linear).max() < 1e-12


def test_free_fall_velocity_after_one_second():
    P = RigidBodyParams()
    s = SimState.at_rest([0, 0, 100.0])
    for _ in range(1000):
        s, _ = step(s, np.zeros(6), P, dt=1e-3)
    assert abs(s.linear[2] + 9.81) < 1e-6


def test_torque_free_rotation_conserves_energy_and_momentum():
    P = RigidBodyParams(mass=1.0, inertia=np.diag([1.0, 2.0, 3.0]))
    J = P.inertia
    s = SimState(np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3), np.array([0.1, 2.0, 0.1]))
    e0 = 0.5 * s.angular @ J @ s.angular
    l0 = np.linalg.norm(J @ s.angular)
    for _ in range(10_000):
        # gravity acts through the origin and leaves the rotation untouched
        s, _ = step(s, np.zeros(6), P, dt=1e-3)
    w = s.angular
    assert abs(0.5 * w @ J @ w - e0) / e0 < 1e-6
    assert abs(np.linalg.norm(J @ w) - l0) / l0 < 1e-6


def test_contact_examples():
    w, f = contact_wrench([floor()], [0, 0, 0.01], np.zeros(3))
    assert np.array_equal(f, np.zeros(3)) and np.array_equal(w.vector(), np.zeros(6))
    _, f = contact_wrench([floor()], [0, 0, -0.005], np.zeros(3))
    np.testing.assert_allclose(f, [0, 0, 5.0], atol=1e-12)
    # 10 N normal while sliding along +x
    _, f = contact_wrench([floor(k_w=1000.0, mu=0.3)], [0, 0, -0.01], [0.1, 0, 0])
    np.testing.assert_allclose(f, [-3.0, 0, 10.0], atol=1e-12)


@given(st.floats(0.0, 2.0), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_no_force_on_the_free_side(h, vx, vy, vz):
    _, f = contact_wrench([floor(k_w=5000.0, c_w=50.0, mu=0.3)], [0.2, -0.1, h], [vx, vy, vz])
    assert np.array_equal(f, np.zeros(3))


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.02, 0.0), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(-0.2, 0.2))
def test_friction_never_exceeds_coulomb_bound(depth, vx, vy, vz):
    _, f = contact_wrench([floor(k_w=5000.0, c_w=50.0, mu=0.3)], [0, 0, depth], [vx, vy, vz])
    assert f[2] >= 0.0
    assert np.hypot(f[0], f[1]) <= 0.3 * f[2] + 1e-12


def _pushing_setup():
    P = RigidBodyParams()
    wall = ContactSurface(Plane([0, 0, 0], [1, 0, 0]), k_w=5000.0, c_w=50.0, mu=0.3)
    dist = DisturbanceProfile([DisturbanceWindow(0.002, 0.2, force=[0, 1.5, -0.5], point_B=[0.5, 0, 0],
                                                 ramp=0.05, at_tool=True)])
    # yawed 180 deg so the tool (body x) faces the wall; tip 2 mm inside, drifting sideways
    s = SimState(np.array([0.498, 0.0, 1.0]), np.array([0.0, 0, 0, 1.0]), np.array([0.0, 0.2, 0.0]),
                 np.array([0.0, 0.0, 0.1]))
    return P, wall, dist, s


def test_external_wrench_bookkeeping_identity():
    P, wall, dist, s = _pushing_setup()
    touched = False
    for _ in range(50):
        s, info = step(s, np.r_[0, 0, 41.2, 0, 0, 0], P, [wall], [dist], dt=1e-3)
        assert np.array_equal(info.ext_wrench, info.contact_wrench + info.disturbance_wrench)
        touched |= bool(np.any(info.contact_wrench != 0.0))
    assert touched


def test_advance_matches_repeated_steps_bit_for_bit():
    P, wall, dist, s0 = _pushing_setup()
    cmd = np.array([1.0, 0.5, 41.0, 0.01, -0.02, 0.0])
    a = Plant(P, [wall], [dist])
    b = Plant(P, [wall], [dist])
    sa = sb = s0
    for _ in range(20):
        sa, ia = a.advance(sa, cmd, 1e-3, 5)
        for _ in range(5):
            sb, ib = b.step(sb, cmd, 1e-3)
    for x, y in [(sa.position, sb.position), (sa.quaternion, sb.quaternion), (sa.linear, sb.linear),
                 (sa.angular, sb.angular), (ia.ext_wrench, ib.ext_wrench), (ia.tip_force, ib.tip_force)]:
        assert np.array_equal(x, y)
    assert sa.t == sb.t


def test_advance_matches_steps_with_actuator_lag_and_limits():
    P, wall, dist, s0 = _pushing_setup()
    cfg = PlantConfig(actuator_lag=0.02, force_limit=30.0, torque_limit=1.0)
    a, b = Plant(P, [wall], [dist], cfg), Plant(P, [wall], [dist], cfg)
    sa = sb = s0
    for k in range(20):
        cmd = np.array([5.0 * np.sin(k), 0.0, 45.0, 0.0, 2.0, 0.0])
        sa, _ = a.advance(sa, cmd, 1e-3, 5)
        for _ in range(5):
            sb, _ = b.step(sb, cmd, 1e-3)
    assert np.array_equal(sa.position, sb.position) and np.array_equal(sa.angular, sb.angular)


def test_steps_are_deterministic():
    P, wall, dist, s0 = _pushing_setup()
    runs = []
    for _ in range(2):
        s = s0
        for _ in range(100):
            s, _ = step(s, np.r_[0, 0, 41.0, 0, 0, 0], P, [wall], [dist], dt=1e-3)
        runs.append(np.r_[s.position, s.quaternion, s.linear, s.angular])
    assert np.array_equal(runs[0], runs[1])


def _energy(P, s, surfaces):
    v, w = s.linear, s.angular
    tip = s.position + s.rotation @ P.p_BT
    pot = P.mass * 9.81 * s.position[2]
    for srf in surfaces:
        d, _, _ = srf.geometry.probe(tip)
        if d < 0:
            pot += 0.5 * srf.k_w * d * d
    return 0.5 * P.mass * v @ v + 0.5 * w @ P.inertia @ w + pot


def test_energy_audit_conservative_contact():
    # unactuated bounce of the tool tip on a frictionless, undamped floor.  The tool points
    # straight down through the COM so no spin is excited before the pencil instability
    # grows (~4.5 s).  Energy is compared at the apexes, where the O(dt) oscillation of
    # symplectic Euler in free flight vanishes.
    P = RigidBodyParams()
    surfaces = [floor(k_w=5000.0)]
    q = np.array([np.cos(np.pi / 4), 0.0, np.sin(np.pi / 4), 0.0])  # body x -> world -z
    s = SimState(np.array([0.0, 0.0, 0.51]), q, np.zeros(3), np.zeros(3))
    E0 = _energy(P, s, surfaces)
    vz_prev, apexes = 0.0, []
    for k in range(1, 4201):
        s, info = step(s, np.zeros(6), P, surfaces, dt=1e-3)
        vz = (s.rotation @ s.linear)[2]
        if vz_prev > 0.0 >= vz and not np.any(info.tip_force):
            apexes.append((s.t, (_energy(P, s, surfaces) - E0) / E0))
        vz_prev = vz
    assert len(apexes) >= 2
    assert np.abs(s.angular).max() < 1e-2
    for t, rel in apexes:
        assert rel / t < 1e-5  # non-increasing within 1e-5 relative per simulated second


def test_divergence_raises_fault():
    P = RigidBodyParams()
    with pytest.raises(SimulationFault):
        step(SimState.at_rest(), np.r_[1e9, 0, 0, 0, 0, 0], P, dt=1e-3)
    with pytest.raises(ValidationError):
        step(SimState.at_rest(), np.zeros(6), P, dt=0.0)


def test_rk4_option_agrees_with_default_in_free_flight():
    P = RigidBodyParams()
    s = SimState(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.1, 0, 0]), np.array([0.0, 0.3, 0.2]))
    a = b = s
    cmd = np.r_[0.5, 0, 41.202, 0, 0.01, 0]
    for _ in range(500):
        a, _ = step(a, cmd, P, dt=1e-3)
        b, _ = step(b, cmd, P, dt=1e-3, config=PlantConfig(integrator="rk4"))
    assert np.abs(a.position - b.position).max() < 1e-4


def test_command_delay_field_validates():
    assert PlantConfig(command_delay=0.02).command_delay == 0.02
    with pytest.raises(ValidationError):
        PlantConfig(command_delay=-1.0)
