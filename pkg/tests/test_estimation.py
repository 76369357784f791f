import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from aeroforce.core import ValidationError, quat_exp, quat_to_matrix
from aeroforce.dynamics import RigidBodyParams, mass_matrix
from aeroforce.estimation import (
    CalibrationError,
    ComCalibrationSet,
    ForceSensor,
    ForceSensorConfig,
    WrenchEstimatorState,
    butterworth_design,
    com_calibrate,
    com_covariance,
    wrench_estimator_step,
)

DT = 0.005  # 200 Hz controller


def run_observer(force, gain, T, axis=0):
    """Exact translational model: M v' = tau_ext, no command, no gravity, no Coriolis."""
    P = RigidBodyParams()
    M = mass_matrix(P)
    C = np.zeros((6, 6))
    tau = np.zeros(6)
    tau[axis] = force
    st_ = WrenchEstimatorState.with_gain(gain)
    out = []
    for k in range(int(round(T / DT)) + 1):
        nu = np.linalg.solve(M, tau) * (k * DT)
        st_ = wrench_estimator_step(st_, M, C, np.zeros(6), nu, np.zeros(6), DT)
        out.append(st_.estimate.copy())
    return np.array(out)


def test_zero_external_wrench_stays_zero():
    est = run_observer(0.0, 1.0, 2.0)
    assert np.abs(est).max() < 1e-9


def test_step_response_at_one_second():
    est = run_observer(4.0, 1.0, 1.0)
    expected = 4.0 * (1.0 - math.exp(-1.0))
    assert est[-1, 0] == pytest.approx(expected, rel=0.02)
    assert np.abs(est[:, 1:]).max() < 1e-9


def test_rise_time_with_gain_three():
    est = run_observer(4.0, 3.0, 1.0)
    t = np.arange(len(est)) * DT
    # interpolate the 63.2 % crossing
    y = est[:, 0] / 4.0
    target = 1.0 - math.exp(-1.0)
    i = int(np.argmax(y >= target))
    t_rise = t[i - 1] + (target - y[i - 1]) / (y[i] - y[i - 1]) * DT
    assert abs(t_rise - 1.0 / 3.0) < 0.005


def test_steady_state_matches_true_wrench():
    est = run_observer(4.0, 1.0, 10.0)
    t = np.arange(len(est)) * DT
    # first-order law: the remaining error is e^-t/tau; below 0.1 % from ~7 tau onwards
    np.testing.assert_allclose(est[t >= 5.0 - 1e-9][0, 0], 4.0 * (1 - math.exp(-5.0)), rtol=1e-4)
    assert abs(est[-1, 0] - 4.0) / 4.0 < 1e-3


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5).filter(lambda a: abs(a) > 1e-3), st.integers(0, 5))
def test_observer_is_linear_in_the_external_wrench(alpha, axis):
    a = run_observer(2.0, 1.5, 0.5, axis)
    b = run_observer(2.0 * alpha, 1.5, 0.5, axis)
    assert np.abs(b - alpha * a).max() < 1e-9


def test_observer_uses_commanded_wrench_and_gravity_term():
    # a hovering body: the command cancels gravity exactly, so nothing external is seen
    P = RigidBodyParams()
    M = mass_matrix(P)
    g = np.r_[0, 0, P.mass * 9.81, 0, 0, 0]
    st_ = WrenchEstimatorState.with_gain(2.0)
    for _ in range(400):
        st_ = wrench_estimator_step(st_, M, np.zeros((6, 6)), g, np.zeros(6), g, DT)
    assert np.abs(st_.estimate).max() < 1e-9


def test_observer_gain_validation():
    with pytest.raises(ValidationError):
        WrenchEstimatorState.with_gain(0.0)
    with pytest.raises(ValidationError):
        wrench_estimator_step(WrenchEstimatorState.with_gain(1.0), np.eye(6), np.zeros((6, 6)), np.zeros(6),
                              np.zeros(6), np.zeros(6), 0.0)


@pytest.mark.parametrize("fc,fs", [(5.0, 200.0), (5.0, 1000.0), (20.0, 200.0)])
def test_butterworth_matches_reference_design(fc, fs):
    f = butterworth_design(fc, fs)
    b, a = signal.butter(2, fc, btype="low", fs=fs)
    np.testing.assert_allclose(f.b, b, rtol=1e-12)
    np.testing.assert_allclose(f.a, a, rtol=1e-12)
    assert np.all(np.abs(np.roots(f.a)) < 1.0)
    assert f.b.sum() / f.a.sum() == pytest.approx(1.0, abs=1e-9)


def _steady_gain(f, freq, fs, seconds=4.0):
    t = np.arange(int(seconds * fs)) / fs
    x = np.sin(2 * np.pi * freq * t)
    y = f.filter_signal(np.column_stack([x, x, x]))[:, 0]
    tail = t > seconds / 2
    return np.abs(y[tail]).max()


def test_butterworth_dc_cutoff_and_rolloff():
    fs, fc = 200.0, 5.0
    f = butterworth_design(fc, fs)
    y = f.filter_signal(np.full((400, 3), 2.5))
    assert np.abs(y[-1] - 2.5).max() < 1e-6
    f = butterworth_design(fc, fs)
    assert _steady_gain(f, fc, fs) == pytest.approx(1 / math.sqrt(2), rel=0.02)
    f = butterworth_design(fc, fs)
    assert 20 * math.log10(_steady_gain(f, 4 * fc, fs)) <= -20.0


def test_butterworth_rejects_cutoff_at_nyquist():
    with pytest.raises(ValidationError):
        butterworth_design(100.0, 200.0)
    with pytest.raises(ValidationError):
        butterworth_design(0.0, 200.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 30), st.integers(0, 10_000))
def test_filter_is_shift_invariant(delay, seed):
    x = np.random.default_rng(seed).normal(size=(100, 3))
    y = butterworth_design(5.0, 200.0).filter_signal(x)
    yd = butterworth_design(5.0, 200.0).filter_signal(np.vstack([np.zeros((delay, 3)), x]))
    assert np.array_equal(yd[:delay], np.zeros((delay, 3)))
    assert np.array_equal(yd[delay:], y)


def test_filter_reset_to_value_is_steady():
    f = butterworth_design(5.0, 200.0)
    f.reset([1.0, -2.0, 3.0])
    np.testing.assert_allclose(f.apply([1.0, -2.0, 3.0]), [1.0, -2.0, 3.0], atol=1e-12)


def test_force_sensor_reports_reaction_in_body_frame():
    cfg = ForceSensorConfig(noise_std=0.0, bias_max=0.0)
    sensor = ForceSensor(cfg, 200.0, np.random.default_rng(0))
    R = quat_to_matrix(quat_exp([0.0, 0.0, np.pi / 2]))
    raw, _ = sensor.measure([0.0, 3.0, 0.0], R, 0.0)
    np.testing.assert_allclose(raw, [3.0, 0.0, 0.0], atol=1e-12)


def test_force_sensor_bias_ramps_then_holds():
    cfg = ForceSensorConfig(noise_std=0.0, bias_max=0.3, bias_period=60.0)
    sensor = ForceSensor(cfg, 200.0, np.random.default_rng(1))
    assert np.linalg.norm(sensor.bias(30.0)) == pytest.approx(0.15)
    assert np.linalg.norm(sensor.bias(120.0)) == pytest.approx(0.3)


def hover_dataset(p_com, n=200, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    forces, torques = [], []
    for _ in range(n):
        R = quat_to_matrix(quat_exp(rng.uniform(-0.5, 0.5, 3)))
        f = R.T @ np.array([0.0, 0.0, 4.2 * 9.81]) + rng.normal(0.0, 2.0, 3)
        forces.append(f)
        torques.append(np.cross(p_com, f) + rng.normal(0.0, noise, 3))
    return ComCalibrationSet(np.array(forces), np.array(torques))


def test_calibration_zero_offset():
    assert np.abs(com_calibrate(hover_dataset(np.zeros(3)))).max() < 1e-12


def test_calibration_recovers_offset_noiseless():
    p = np.array([0.002, -0.003, 0.005])
    assert np.abs(com_calibrate(hover_dataset(p)) - p).max() < 1e-10


def test_calibration_noise_within_least_squares_bound():
    p = np.array([0.002, -0.003, 0.005])
    errs = []
    for seed in range(100):
        data = hover_dataset(p, seed=seed, noise=0.01)
        err = com_calibrate(data) - p
        sd = np.sqrt(np.diag(com_covariance(data.forces, 0.01)))
        assert np.all(np.abs(err) <= 3 * sd)
        errs.append(err / sd)
    # normalized errors behave like unit Gaussians
    assert 0.7 < np.std(errs) < 1.3


def test_calibration_names_unexcited_direction():
    f = np.tile([0.0, 0.0, 41.2], (20, 1))
    with pytest.raises(CalibrationError) as exc:
        com_calibrate(ComCalibrationSet(f, np.zeros((20, 3))))
    assert abs(abs(exc.value.direction[2]) - 1.0) < 1e-9


@settings(max_examples=30, deadline=None)
@given(st.permutations(list(range(40))))
def test_calibration_is_order_invariant(perm):
    data = hover_dataset(np.array([0.01, 0.0, -0.02]), n=40, seed=3, noise=0.02)
    a = com_calibrate(data)
    b = com_calibrate(ComCalibrationSet(data.forces[perm], data.torques[perm]))
    assert np.array_equal(a, b)
