"""Distance-scheduled axis-selective impedance control blended with direct force control.

All commands are body-frame wrenches ``[force; torque]``.  Virtual inertia is
specified in normalized form, i.e. as multipliers of the real system inertia,
so the normalized virtual mass is ``R diag(m_free, m_free, m_T, Jv, Jv, Jv) R^T``
with ``R = blockdiag(R_BT, R_BT)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ValidationError, blockdiag, cross3, tracking_errors


def cosine_ramp(x: float, lo: float, hi: float) -> float:
    """1 below ``lo``, 0 above ``hi``, half-cosine in between."""
    if x <= lo:
        return 1.0
    if x <= hi:
        return 0.5 * (1.0 + math.cos((x - lo) / (hi - lo) * math.pi))
    return 0.0


@dataclass(frozen=True)
class ImpedanceConfig:
    K_lin: float = 100.0
    K_ang: float = 3.5
    D_lin: float = 35.0
    D_ang: float = 1.2
    m_free: float = 5.0
    m_wall: float = 0.5
    J_v: float = 5.0
    d_min: float = 0.2
    d_max: float = 0.4

    def __post_init__(self):
        if min(self.K_lin, self.K_ang, self.D_lin, self.D_ang, self.m_free, self.m_wall, self.J_v) <= 0:
            raise ValidationError("impedance gains and virtual inertia must be positive")
        if not self.d_min < self.d_max:
            raise ValidationError("d_min must be below d_max")
        if self.m_wall > self.m_free:
            raise ValidationError("m_wall must not exceed m_free")

    @property
    def stiffness(self) -> np.ndarray:
        return np.diag([self.K_lin] * 3 + [self.K_ang] * 3)

    @property
    def damping(self) -> np.ndarray:
        return np.diag([self.D_lin] * 3 + [self.D_ang] * 3)


@dataclass(frozen=True)
class ForceControlConfig:
    K_fp: float = 0.1
    K_fi: float = 1.0
    e_min: float = 0.15
    e_max: float = 0.25
    c_lambda: float = 0.01
    integral_limit: float = 50.0  # [N s] per axis
    scale_by_mass: bool = False  # literal 1/m factor on the direct force command
    integrate_above: float = 0.5  # integrate only while lambda exceeds this
    reset_after: float = 0.5  # [s] without a surface estimate before the integral is cleared

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise ValidationError("e_min must be below e_max")
        if not 0.0 < self.c_lambda <= 1.0:
            raise ValidationError("c_lambda must lie in (0, 1]")
        if self.integral_limit <= 0:
            raise ValidationError("integral limit must be positive")


@dataclass(frozen=True)
class ControllerState:
    lam: float = 0.0
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    no_surface_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValidationError("lambda must lie in [0, 1]")


# --- virtual mass -------------------------------------------------------------

@dataclass(frozen=True)
class VirtualMass:
    c_v: float
    m_T: float  # tool-axis multiplier
    normalized: np.ndarray  # R M*_v R^T (multipliers of system inertia) in B
    normalized_inv: np.ndarray


def virtual_mass(d_t: float | None, cfg: ImpedanceConfig, R_BT) -> VirtualMass:
    c_v = 0.0 if d_t is None else cosine_ramp(d_t, cfg.d_min, cfg.d_max)
    m_T = c_v * (cfg.m_wall - cfg.m_free) + cfg.m_free
    R = blockdiag(R_BT, R_BT)
    diag = np.array([cfg.m_free, cfg.m_free, m_T, cfg.J_v, cfg.J_v, cfg.J_v])
    return VirtualMass(c_v, m_T, R @ np.diag(diag) @ R.T, R @ np.diag(1.0 / diag) @ R.T)


# --- confidence and selection ---------------------------------------------------

def confidence(d_t: float | None, e_t, f_ref, lam_prev: float, imp: ImpedanceConfig,
               force: ForceControlConfig) -> float:
    """Filtered confidence that the reference force can be realized.

    ``e_t`` is the tool position error and ``f_ref`` the force to exert, in any
    common frame.  Negative projected errors (tool short of the reference in
    the push direction) saturate ``lambda_e`` at one.
    """
    f_ref = np.asarray(f_ref, dtype=float)
    fn = float(np.linalg.norm(f_ref))
    if fn == 0.0:
        return 0.0
    e_proj = float(np.asarray(e_t, dtype=float) @ f_ref) / fn
    lam_d = 0.0 if d_t is None else cosine_ramp(d_t, imp.d_min, imp.d_max)
    lam_e = cosine_ramp(e_proj, force.e_min, force.e_max)
    lam = force.c_lambda * lam_d * lam_e + (1.0 - force.c_lambda) * lam_prev
    return min(1.0, max(0.0, lam))


def selection_matrix(f_ref, lam: float) -> np.ndarray:
    f_ref = np.asarray(f_ref, dtype=float)
    out = np.zeros((6, 6))
    if lam == 0.0:
        return out
    fn = float(np.linalg.norm(f_ref))
    if fn == 0.0:
        raise ValidationError("nonzero confidence needs a nonzero force reference direction")
    n = f_ref / fn
    out[:3, :3] = lam * np.outer(n, n)
    return out


# --- command components ---------------------------------------------------------

def direct_force_command(f_t, f_ref, Lam, state: ControllerState, cfg: ForceControlConfig,
                         mass: float, dt: float):
    """PI + feedforward force command along the selected direction.

    ``f_t`` is the measured reaction force on the tool and ``f_ref`` the
    reference in the same reaction convention (both in B), so a vehicle
    pushing with force ``F`` on a surface has ``f_ref = -F``.  The integral
    used is the one accumulated up to the previous tick.
    """
    Lam3 = np.asarray(Lam, dtype=float)[:3, :3]
    if state.lam == 0.0:
        return np.zeros(6), state
    f_t = np.asarray(f_t, dtype=float)
    f_ref = np.asarray(f_ref, dtype=float)
    e_f = f_t - f_ref
    f_dir = Lam3 @ (-f_ref + cfg.K_fp * e_f + cfg.K_fi * state.integral)
    if cfg.scale_by_mass:
        f_dir = f_dir / mass
    integral = state.integral
    if state.lam > cfg.integrate_above:
        lim = cfg.integral_limit
        integral = np.clip(integral + e_f * dt, -lim, lim)
    return np.concatenate([f_dir, np.zeros(3)]), replace(state, integral=integral)


def impedance_command(errors, tau_ext_hat, M_bar_inv, Lam6, imp: ImpedanceConfig) -> np.ndarray:
    """Compliance shaping with the wrench estimate, plus normalized PD on the errors."""
    I6 = np.eye(6)
    shaping = (I6 - Lam6) @ (np.asarray(M_bar_inv) - I6) @ np.asarray(tau_ext_hat, dtype=float)
    return shaping - imp.damping @ errors.velocity - imp.stiffness @ errors.pose


def unified_command(tau_dir, tau_imp, Cv, g, p_com) -> np.ndarray:
    """Sum of the command components with dynamic and COM-offset compensation.

    ``g`` is the gravity term of the equation of motion (the compensation
    wrench, opposite to the gravity wrench acting on the body).
    """
    star = np.asarray(tau_dir) + np.asarray(tau_imp) + np.asarray(Cv) + np.asarray(g)
    com = cross3(np.asarray(p_com, dtype=float), star[:3])
    return np.concatenate([star[:3], star[3:] + com])


# --- full control tick ----------------------------------------------------------

@dataclass(frozen=True)
class Setpoint:
    """Reference sample: body pose/twist in W and the force to exert on the environment, in W."""

    position: np.ndarray
    rotation: np.ndarray
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class ControllerModel:
    """What the controller believes about the vehicle."""

    mass: float
    inertia: np.ndarray
    p_com: np.ndarray
    p_BT: np.ndarray
    R_BT: np.ndarray

    @classmethod
    def from_params(cls, params, p_com=None) -> "ControllerModel":
        return cls(params.mass, np.asarray(params.inertia), np.asarray(params.p_com if p_com is None else p_com),
                   np.asarray(params.p_BT), np.asarray(params.R_BT))


@dataclass(frozen=True)
class Telemetry:
    lam: float
    d_t: float | None
    m_T: float
    e_p: np.ndarray
    e_R: np.ndarray
    e_t: np.ndarray
    f_t: np.ndarray
    f_ref: np.ndarray
    tau_dir: np.ndarray
    tau_imp: np.ndarray
    tau_cmd: np.ndarray


def coriolis_term(model: ControllerModel, v_B, w_B) -> np.ndarray:
    w = np.asarray(w_B, dtype=float)
    return np.concatenate([model.mass * cross3(w, v_B), cross3(w, model.inertia @ w)])


def gravity_term(model: ControllerModel, R_WB, g: float = 9.81) -> np.ndarray:
    """Force needed to hold the vehicle against gravity, in B."""
    return np.concatenate([np.asarray(R_WB).T @ np.array([0.0, 0.0, model.mass * g]), np.zeros(3)])


def control_step(p, R, v_B, w_B, ref: Setpoint, d_t, f_t, tau_ext_hat, model: ControllerModel,
                 imp: ImpedanceConfig, force: ForceControlConfig, state: ControllerState, dt: float):
    """One control tick.  Returns ``(tau_cmd, state, telemetry)``.

    ``f_t`` is the filtered sensor reading (reaction on the tool, in B) and
    ``d_t`` the latched surface distance or ``None``.
    """
    R = np.asarray(R, dtype=float)
    errors = tracking_errors(p, R, v_B, w_B, ref.position, ref.rotation, ref.linear, ref.angular)
    vm = virtual_mass(d_t, imp, model.R_BT)

    # tool position error in W
    p_t = np.asarray(p) + R @ model.p_BT
    p_t_ref = np.asarray(ref.position) + np.asarray(ref.rotation) @ model.p_BT
    e_t = p_t - p_t_ref

    F_ref_W = np.asarray(ref.force, dtype=float)
    has_ref = bool(np.any(F_ref_W != 0.0))
    no_surface = 0.0 if d_t is not None else state.no_surface_time + dt
    integral = state.integral
    if not has_ref or no_surface > force.reset_after:
        integral = np.zeros(3)
    lam = confidence(d_t, e_t, F_ref_W, state.lam, imp, force)
    state = ControllerState(lam, integral, no_surface)

    f_ref_B = -R.T @ F_ref_W
    Lam6 = selection_matrix(f_ref_B, lam)
    tau_dir, state = direct_force_command(f_t, f_ref_B, Lam6, state, force, model.mass, dt)
    tau_imp = impedance_command(errors, tau_ext_hat, vm.normalized_inv, Lam6, imp)
    tau_cmd = unified_command(tau_dir, tau_imp, coriolis_term(model, v_B, w_B), gravity_term(model, R), model.p_com)
    tel = Telemetry(lam, d_t, vm.m_T, errors.e_p, errors.e_R, e_t, np.asarray(f_t, dtype=float), f_ref_B,
                    tau_dir, tau_imp, tau_cmd)
    return tau_cmd, state, tel
