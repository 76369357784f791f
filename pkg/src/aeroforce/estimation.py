"""Momentum-based external wrench observer, force-sensor model/filter and COM calibration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ValidationError, hat


# --- external wrench observer ----------------------------------------------

@dataclass(frozen=True)
class WrenchEstimatorState:
    gain: np.ndarray  # diagonal of K_I [1/s]
    integral: np.ndarray = field(default_factory=lambda: np.zeros(6))
    estimate: np.ndarray = field(default_factory=lambda: np.zeros(6))
    prev_bias: np.ndarray = field(default_factory=lambda: np.zeros(6))
    initialized: bool = False

    def __post_init__(self):
        k = np.asarray(self.gain, dtype=float)
        k = np.full(6, float(k)) if k.ndim == 0 else (np.diag(k) if k.ndim == 2 else k)
        if k.shape != (6,) or np.any(k <= 0):
            raise ValidationError("observer gain must be 6 positive diagonal entries")
        object.__setattr__(self, "gain", k)

    @classmethod
    def with_gain(cls, lin: float, ang: float | None = None) -> "WrenchEstimatorState":
        ang = lin if ang is None else ang
        return cls(np.array([lin] * 3 + [ang] * 3))


def wrench_estimator_step(state: WrenchEstimatorState, M, C, g, twist, cmd, dt: float) -> WrenchEstimatorState:
    """One observer update at the controller rate.

    ``cmd`` is the wrench commanded over the interval that just ended and
    ``g`` the gravity term as it enters the equation of motion (the gravity
    compensation wrench).  The momentum integral is trapezoidal in the
    state-dependent terms, exact for the held command, and implicit in the
    estimate, which makes the estimate a Tustin-discretized first-order
    low-pass of the true external wrench.  On the first call the integral is
    seeded with the current momentum so the estimate starts at zero.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    nu = np.asarray(twist.vector() if hasattr(twist, "vector") else twist, dtype=float)
    momentum = np.asarray(M) @ nu
    bias = -np.asarray(C) @ nu - np.asarray(g, dtype=float)
    if not state.initialized:
        return replace(state, integral=momentum, estimate=np.zeros(6), prev_bias=bias, initialized=True)
    K = state.gain
    cmd = np.asarray(cmd.vector() if hasattr(cmd, "vector") else cmd, dtype=float)
    partial = state.integral + dt * cmd + 0.5 * dt * (state.prev_bias + bias) + 0.5 * dt * state.estimate
    est = K * (momentum - partial) / (1.0 + 0.5 * dt * K)
    integral = partial + 0.5 * dt * est
    return replace(state, integral=integral, estimate=est, prev_bias=bias)


# --- Butterworth low-pass --------------------------------------------------

@dataclass
class ButterworthFilter:
    """Second-order Butterworth low-pass, bilinear transform prewarped at the cutoff.

    Direct form II transposed, one delay line per channel.
    """

    b: np.ndarray
    a: np.ndarray
    cutoff: float
    sample_rate: float
    channels: int = 3
    z: np.ndarray = None

    def __post_init__(self):
        if self.z is None:
            self.z = np.zeros((2, self.channels))

    def reset(self, value=None):
        self.z = np.zeros((2, self.channels))
        if value is not None:
            # steady state for a constant input equal to ``value``
            x = np.asarray(value, dtype=float)
            b0, b1, b2 = self.b
            _, a1, a2 = self.a
            self.z[1] = (b2 - a2) * x
            self.z[0] = x - b0 * x

    def apply(self, sample) -> np.ndarray:
        x = np.asarray(sample, dtype=float)
        b0, b1, b2 = self.b
        _, a1, a2 = self.a
        y = b0 * x + self.z[0]
        self.z[0] = b1 * x - a1 * y + self.z[1]
        self.z[1] = b2 * x - a2 * y
        return y

    __call__ = apply

    def filter_signal(self, signal) -> np.ndarray:
        return np.array([self.apply(s) for s in np.asarray(signal, dtype=float)])


def butterworth_design(cutoff: float, sample_rate: float, channels: int = 3) -> ButterworthFilter:
    if not 0.0 < cutoff < 0.5 * sample_rate:
        raise ValidationError(f"cutoff {cutoff} Hz must lie in (0, {0.5 * sample_rate}) Hz")
    k = math.tan(math.pi * cutoff / sample_rate)
    k2 = k * k
    norm = 1.0 / (1.0 + math.sqrt(2.0) * k + k2)
    b0 = k2 * norm
    b = np.array([b0, 2.0 * b0, b0])
    a = np.array([1.0, 2.0 * (k2 - 1.0) * norm, (1.0 - math.sqrt(2.0) * k + k2) * norm])
    return ButterworthFilter(b, a, cutoff, sample_rate, channels)


def butterworth_apply(filt: ButterworthFilter, sample) -> np.ndarray:
    return filt.apply(sample)


# --- force sensor ------------------------------------------------------------

@dataclass
class ForceSensorConfig:
    noise_std: float = 0.05  # [N]
    bias_max: float = 0.3  # [N]
    bias_period: float = 60.0  # [s] time to reach bias_max
    cutoff: float = 5.0  # [Hz]


class ForceSensor:
    """Tool-tip force sensor: reaction force on the tool in B, noise, drifting bias, low-pass."""

    def __init__(self, config: ForceSensorConfig, sample_rate: float, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        d = rng.normal(size=3)
        self.bias_dir = d / np.linalg.norm(d)
        self.filter = butterworth_design(config.cutoff, sample_rate)

    def bias(self, t: float) -> np.ndarray:
        c = self.config
        if c.bias_max == 0.0:
            return np.zeros(3)
        return c.bias_max * min(t / c.bias_period, 1.0) * self.bias_dir

    def measure(self, tip_force_W, R_WB, t: float):
        """Returns ``(raw, filtered)`` readings in B."""
        raw = np.asarray(R_WB).T @ np.asarray(tip_force_W, dtype=float) + self.bias(t)
        if self.config.noise_std > 0.0:
            raw = raw + self.rng.normal(0.0, self.config.noise_std, size=3)
        return raw, self.filter.apply(raw)


# --- center-of-mass calibration ---------------------------------------------

class CalibrationError(ValueError):
    def __init__(self, message: str, direction=None):
        super().__init__(message)
        self.direction = direction


@dataclass
class ComCalibrationSet:
    forces: np.ndarray  # (N, 3) commanded forces in B
    torques: np.ndarray  # (N, 3) commanded torques in B

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float).reshape(-1, 3)
        self.torques = np.asarray(self.torques, dtype=float).reshape(-1, 3)
        if len(self.forces) != len(self.torques):
            raise ValidationError("forces and torques must pair up")


def com_calibrate(data: ComCalibrationSet, max_condition: float = 1e8) -> np.ndarray:
    """Least-squares COM offset from hover force/torque pairs via the normal equations.

    Rows are ``-[f]x p = tau``.  Normal-equation entries are summed with
    ``math.fsum`` so the result does not depend on sample order.
    """
    if len(data.forces) == 0:
        raise CalibrationError("empty calibration set")
    X = np.concatenate([-hat(f) for f in data.forces])
    y = data.torques.reshape(-1)
    XtX = np.array([[math.fsum(X[:, i] * X[:, j]) for j in range(3)] for i in range(3)])
    Xty = np.array([math.fsum(X[:, i] * y) for i in range(3)])
    evals, evecs = np.linalg.eigh(XtX)
    if evals[0] <= 0.0 or evals[-1] / evals[0] > max_condition:
        d = evecs[:, 0]
        raise CalibrationError(
            f"normal equations ill-conditioned (cond={evals[-1] / max(evals[0], 1e-300):.3g}); "
            f"no excitation along direction {np.round(d, 4).tolist()}",
            direction=d,
        )
    return np.linalg.solve(XtX, Xty)


def com_covariance(forces, noise_std: float) -> np.ndarray:
    """Least-squares covariance ``sigma^2 (X^T X)^-1`` for i.i.d. torque noise."""
    X = np.concatenate([-hat(f) for f in np.asarray(forces, dtype=float).reshape(-1, 3)])
    return noise_std ** 2 * np.linalg.inv(X.T @ X)
