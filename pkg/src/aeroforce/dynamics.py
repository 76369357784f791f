"""Fixed-step rigid-body plant with penalty contact and scripted disturbances.

The plant is written about the control origin of the body frame B:

    M dv/dt + C(v) v = w_act + w_ext + w_grav

with ``w_grav`` the gravity wrench acting on the vehicle (force ``m R_BW g_W``
and, for a COM offset, the torque ``p_com x f``).  Controllers compensate with
``-w_grav``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    cross3,
    GRAVITY,
    GRAVITY_W,
    Pose,
    Twist,
    ValidationError,
    Wrench,
    FrameId,
    blockdiag,
    hat,
    quat_exp,
    quat_multiply,
    quat_normalize,
    quat_to_matrix,
)

# tool z along body x, tool x along body -z: the vehicle stays upright when
# the tool faces a vertical wall
DEFAULT_R_BT = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


class SimulationFault(RuntimeError):
    def __init__(self, message: str, t: float, state=None):
        super().__init__(f"t={t:.4f}s: {message}")
        self.t = t
        self.state = state


@dataclass
class RigidBodyParams:
    mass: float = 4.2
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.08, 0.08, 0.12]))
    p_com: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_BT: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.0, 0.0]))
    R_BT: np.ndarray = field(default_factory=lambda: DEFAULT_R_BT.copy())

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.p_com = np.asarray(self.p_com, dtype=float).reshape(3)
        self.p_BT = np.asarray(self.p_BT, dtype=float).reshape(3)
        self.R_BT = np.asarray(self.R_BT, dtype=float).reshape(3, 3)
        if not self.mass > 0:
            raise ValidationError("mass must be positive")
        J = self.inertia
        if not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValidationError("inertia must be symmetric positive definite")


@dataclass(frozen=True)
class SimState:
    position: np.ndarray  # W
    quaternion: np.ndarray  # R_WB, scalar first
    linear: np.ndarray  # B
    angular: np.ndarray  # B
    t: float = 0.0

    @classmethod
    def at_rest(cls, position=(0.0, 0.0, 1.0), rotation=None, t: float = 0.0) -> "SimState":
        from .core import matrix_to_quat

        q = np.array([1.0, 0.0, 0.0, 0.0]) if rotation is None else matrix_to_quat(rotation)
        return cls(np.asarray(position, dtype=float), q, np.zeros(3), np.zeros(3), t)

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)

    @property
    def pose(self) -> Pose:
        return Pose(self.position, self.rotation, FrameId.W, FrameId.B)

    @property
    def twist(self) -> Twist:
        return Twist(self.linear, self.angular)

    def twist_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])


@dataclass
class ContactSurface:
    geometry: object
    k_w: float = 5000.0
    c_w: float = 50.0
    mu: float = 0.3
    visible: bool = True

    def __post_init__(self):
        if self.k_w < 0 or self.c_w < 0 or self.mu < 0:
            raise ValidationError("contact parameters must be non-negative")


@dataclass
class DisturbanceWindow:
    """Constant wrench (world frame) applied at ``point_B`` during ``[start, end)``.

    ``ramp`` blends the wrench in and out with a half-cosine of that duration.
    ``at_tool`` marks loads the tool-tip force sensor can feel.
    """

    start: float
    end: float
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    point_B: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ramp: float = 0.0
    at_tool: bool = False

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float).reshape(3)
        self.torque = np.asarray(self.torque, dtype=float).reshape(3)
        self.point_B = np.asarray(self.point_B, dtype=float).reshape(3)
        if not self.end > self.start:
            raise ValidationError("disturbance window must have end > start")
        if self.ramp < 0 or 2 * self.ramp > self.end - self.start:
            raise ValidationError("disturbance ramp must fit inside its window")

    def scale(self, t: float) -> float:
        if t < self.start or t >= self.end:
            return 0.0
        if self.ramp == 0.0:
            return 1.0
        s = min(t - self.start, self.end - t) / self.ramp
        return 1.0 if s >= 1.0 else 0.5 * (1.0 - math.cos(math.pi * s))


@dataclass
class DisturbanceProfile:
    windows: list = field(default_factory=list)

    def __post_init__(self):
        ws = sorted(self.windows, key=lambda w: w.start)
        for a, b in zip(ws, ws[1:]):
            if b.start < a.end:
                raise ValidationError("disturbance windows overlap within one profile")
        self.windows = ws

    def active(self, t: float):
        for w in self.windows:
            s = w.scale(t)
            if s > 0.0:
                yield w, s


@dataclass
class PlantConfig:
    integrator: str = "symplectic"  # or "rk4"
    actuator_lag: float = 0.0  # first-order time constant [s]; 0 = ideal
    command_delay: float = 0.0  # transport delay of the wrench command [s], whole control ticks
    force_limit: float = math.inf
    torque_limit: float = math.inf
    gyro_iterations: int = 3

    def __post_init__(self):
        if self.integrator not in ("symplectic", "rk4"):
            raise ValidationError(f"unknown integrator {self.integrator!r}")
        if self.actuator_lag < 0 or self.command_delay < 0:
            raise ValidationError("actuator lag and command delay must be non-negative")


@dataclass
class StepInfo:
    ext_wrench: np.ndarray  # B, contact + disturbances
    contact_wrench: np.ndarray  # B
    disturbance_wrench: np.ndarray  # B
    tip_force: np.ndarray  # W, loads felt by the tool sensor
    contact_force: np.ndarray  # W, contact only
    act_wrench: np.ndarray  # B, realized actuation


def mass_matrix(params: RigidBodyParams) -> np.ndarray:
    return blockdiag(params.mass * np.eye(3), params.inertia)


def coriolis_matrix(params: RigidBodyParams, twist) -> np.ndarray:
    """Block-diagonal Coriolis/centrifugal matrix with ``C v = [m w x v; w x J w]``."""
    tw = np.asarray(twist.vector() if isinstance(twist, Twist) else twist, dtype=float)
    w = tw[3:]
    return blockdiag(params.mass * hat(w), -hat(params.inertia @ w))


def gravity_wrench(params: RigidBodyParams, R_WB, include_com: bool = False) -> np.ndarray:
    """Gravity wrench acting on the vehicle, expressed in B."""
    f = params.mass * (np.asarray(R_WB).T @ GRAVITY_W)
    tau = cross3(params.p_com, f) if include_com else np.zeros(3)
    return np.concatenate([f, tau])


def _tip_force(surfaces, tip, tip_vel, t, slide_vel=None, cap=None, friction=True):
    total = np.zeros(3)
    for s in surfaces:
        dist, n, v_surf = s.geometry.probe(tip, t)
        if not dist < 0.0:
            continue
        v_rel = tip_vel - v_surf
        fn = max(0.0, s.k_w * (-dist) - s.c_w * float(n @ v_rel))
        f = fn * n
        if friction and s.mu > 0.0 and fn > 0.0:
            vs = v_rel if slide_vel is None else slide_vel - v_surf
            v_t = vs - float(n @ vs) * n
            speed = float(np.linalg.norm(v_t))
            if speed > 0.0:
                f_fric = s.mu * fn if cap is None else min(s.mu * fn, cap(v_t))
                f = f - f_fric * v_t / speed
        total += f
    return total


def contact_wrench(surfaces, tip_position, tip_velocity, t: float = 0.0):
    """Penalty contact at the tool tip.

    Normal force ``max(0, k_w * depth + c_w * depth_rate)`` along the outward
    normal, Coulomb friction ``mu * normal`` opposing sliding.  Returns
    ``(Wrench at the tip in W, tip force)``; the wrench has no moment about
    the tip.
    """
    f = _tip_force(surfaces, np.asarray(tip_position, dtype=float), np.asarray(tip_velocity, dtype=float), t)
    return Wrench(f.copy(), np.zeros(3)), f


def _disturbances(profiles, t: float, R_WB):
    R_BW = R_WB.T
    w = np.zeros(6)
    tip = np.zeros(3)
    for prof in profiles:
        for win, s in prof.active(t):
            f_B = R_BW @ (s * win.force)
            w[:3] += f_B
            w[3:] += cross3(win.point_B, f_B) + R_BW @ (s * win.torque)
            if win.at_tool:
                tip += s * win.force
    return w, tip


class Plant:
    """Stateful wrapper that owns actuator state; ``step`` stays a pure function of it."""

    def __init__(self, params: RigidBodyParams, surfaces=(), disturbances=(), config: PlantConfig | None = None):
        self.params = params
        self.surfaces = list(surfaces)
        self.disturbances = list(disturbances)
        self.config = config or PlantConfig()
        self.act = None

    def step(self, state: SimState, cmd, dt: float):
        cmd = np.asarray(cmd.vector() if isinstance(cmd, Wrench) else cmd, dtype=float)
        cfg = self.config
        if cfg.actuator_lag > 0.0:
            if self.act is None:
                self.act = cmd.copy()
            alpha = 1.0 - math.exp(-dt / cfg.actuator_lag)
            self.act = self.act + alpha * (cmd - self.act)
            act = self.act
        else:
            act = cmd
        if math.isfinite(cfg.force_limit) or math.isfinite(cfg.torque_limit):
            act = np.concatenate([
                np.clip(act[:3], -cfg.force_limit, cfg.force_limit),
                np.clip(act[3:], -cfg.torque_limit, cfg.torque_limit),
            ])
        return step(state, act, self.params, self.surfaces, self.disturbances, dt, cfg)

    def advance(self, state: SimState, cmd, dt: float, n: int):
        """``n`` consecutive :meth:`step` calls under a constant command; returns the last ``(state, info)``.

        Equivalent to looping over :meth:`step` but keeps the state in plain
        floats between substeps.
        """
        cfg = self.config
        if cfg.integrator == "rk4" or n < 1:
            info = None
            for _ in range(n):
                state, info = self.step(state, cmd, dt)
            return state, info
        if not dt > 0:
            raise ValidationError("dt must be positive")
        cmd = np.asarray(cmd.vector() if isinstance(cmd, Wrench) else cmd, dtype=float)
        body = _body(self.params)
        p, q = tuple(state.position.tolist()), tuple(state.quaternion.tolist())
        v, w = tuple(state.linear.tolist()), tuple(state.angular.tolist())
        t = state.t
        limited = math.isfinite(cfg.force_limit) or math.isfinite(cfg.torque_limit)
        act = cmd
        for _ in range(n):
            if cfg.actuator_lag > 0.0:
                if self.act is None:
                    self.act = cmd.copy()
                alpha = 1.0 - math.exp(-dt / cfg.actuator_lag)
                self.act = self.act + alpha * (cmd - self.act)
                act = self.act
            if limited:
                act = np.concatenate([
                    np.clip(act[:3], -cfg.force_limit, cfg.force_limit),
                    np.clip(act[3:], -cfg.torque_limit, cfg.torque_limit),
                ])
            out = _euler(body, p, q, v, w, t, act.tolist(), self.surfaces, self.disturbances, dt,
                         cfg.gyro_iterations)
            p, q, v, w = out[:4]
            t = t + dt
        return _pack(p, q, v, w, t, *out[4:], act)


def _mv(M, a):
    return (
        M[0][0] * a[0] + M[0][1] * a[1] + M[0][2] * a[2],
        M[1][0] * a[0] + M[1][1] * a[1] + M[1][2] * a[2],
        M[2][0] * a[0] + M[2][1] * a[1] + M[2][2] * a[2],
    )


def _mtv(M, a):
    return (
        M[0][0] * a[0] + M[1][0] * a[1] + M[2][0] * a[2],
        M[0][1] * a[0] + M[1][1] * a[1] + M[2][1] * a[2],
        M[0][2] * a[0] + M[1][2] * a[1] + M[2][2] * a[2],
    )


def _cross(a, b):
    return (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])


def _quat_R(q):
    w, x, y, z = q
    return (
        (1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)),
        (2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)),
        (2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)),
    )


def _quat_step(q, w, h):
    """``q * exp(w h)``, renormalized."""
    wx, wy, wz = w[0] * h, w[1] * h, w[2] * h
    angle = math.sqrt(wx * wx + wy * wy + wz * wz)
    if angle < 1e-12:
        c, s = 1.0, 0.5
    else:
        c, s = math.cos(0.5 * angle), math.sin(0.5 * angle) / angle
    bw, bx, by, bz = c, s * wx, s * wy, s * wz
    aw, ax, ay, az = q
    r = (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )
    n = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3])
    if r[0] < 0.0:
        n = -n
    return (r[0] / n, r[1] / n, r[2] / n, r[3] / n)


class _Body:
    """Plain-float copy of the rigid-body parameters for the inner loop."""

    __slots__ = ("m", "J", "Jinv", "r", "com")

    def __init__(self, params: RigidBodyParams):
        self.m = float(params.mass)
        self.J = tuple(tuple(row) for row in params.inertia.tolist())
        self.Jinv = tuple(tuple(row) for row in np.linalg.inv(params.inertia).tolist())
        self.r = tuple(params.p_BT.tolist())
        self.com = tuple(params.p_com.tolist())


_BODY_CACHE: dict = {}


def _body(params: RigidBodyParams) -> _Body:
    key = id(params)
    hit = _BODY_CACHE.get(key)
    if hit is None or hit[0] is not params:
        hit = (params, _Body(params))
        _BODY_CACHE[key] = hit
    return hit[1]


def _probe_all(surfaces, tip, t):
    out = []
    for s in surfaces:
        fast = getattr(s.geometry, "probe_fast", None)
        if fast is not None:
            dist, n, vs = fast(tip, t)
            if dist < 0.0:
                out.append((s, -dist, n, vs))
            continue
        dist, n, vs = s.geometry.probe(np.asarray(tip), t)
        if dist < 0.0:
            out.append((s, -float(dist), tuple(np.asarray(n, dtype=float).tolist()),
                        tuple(np.asarray(vs, dtype=float).tolist())))
    return out


def _normal_force(contacts, v_tip):
    """Per-contact normal magnitudes for tip velocity ``v_tip`` (world)."""
    out = []
    for s, depth, n, vs in contacts:
        vn = n[0] * (v_tip[0] - vs[0]) + n[1] * (v_tip[1] - vs[1]) + n[2] * (v_tip[2] - vs[2])
        out.append(max(0.0, s.k_w * depth - s.c_w * vn))
    return out


def _gyro_midpoint(v, w, body, dt, iters):
    J, Jinv = body.J, body.Jinv
    vn, wn = v, w
    for _ in range(iters):
        vm = (0.5 * (v[0] + vn[0]), 0.5 * (v[1] + vn[1]), 0.5 * (v[2] + vn[2]))
        wm = (0.5 * (w[0] + wn[0]), 0.5 * (w[1] + wn[1]), 0.5 * (w[2] + wn[2]))
        cv = _cross(wm, vm)
        aw = _mv(Jinv, _cross(wm, _mv(J, wm)))
        vn = (v[0] - dt * cv[0], v[1] - dt * cv[1], v[2] - dt * cv[2])
        wn = (w[0] - dt * aw[0], w[1] - dt * aw[1], w[2] - dt * aw[2])
    return vn, wn


def _euler(body, p, q, v, w, t, a, surfaces, disturbances, dt, gyro_iterations):
    """One symplectic step on plain tuples; returns the new state and the applied loads."""
    R = _quat_R(q)
    r = body.r
    m = body.m
    if disturbances:
        dist_B, dist_tip = _disturbances(disturbances, t, np.array(R))
        d = dist_B.tolist()
    else:
        dist_B = dist_tip = None
        d = _ZERO6
    f_g = _mtv(R, (0.0, 0.0, -GRAVITY * m))
    tau_g = _cross(body.com, f_g)
    F = (a[0] + f_g[0] + d[0], a[1] + f_g[1] + d[1], a[2] + f_g[2] + d[2])
    T = (a[3] + tau_g[0] + d[3], a[4] + tau_g[1] + d[4], a[5] + tau_g[2] + d[5])

    tip = _mv(R, r)
    tip = (p[0] + tip[0], p[1] + tip[1], p[2] + tip[2])
    wr = _cross(w, r)
    v_tip = _mv(R, (v[0] + wr[0], v[1] + wr[1], v[2] + wr[2]))
    contacts = _probe_all(surfaces, tip, t) if surfaces else []
    fc = (0.0, 0.0, 0.0)
    if contacts:
        fns = _normal_force(contacts, v_tip)
        fn_W = [0.0, 0.0, 0.0]
        for (s, depth, n, vs), fn in zip(contacts, fns):
            for i in range(3):
                fn_W[i] += fn * n[i]
        # predicted twist under the normal force only
        fnB = _mtv(R, fn_W)
        Fp = (F[0] + fnB[0], F[1] + fnB[1], F[2] + fnB[2])
        tn = _cross(r, fnB)
        Tp = (T[0] + tn[0], T[1] + tn[1], T[2] + tn[2])
        dw = _mv(body.Jinv, Tp)
        vp = (v[0] + dt * Fp[0] / m, v[1] + dt * Fp[1] / m, v[2] + dt * Fp[2] / m)
        wp = (w[0] + dt * dw[0], w[1] + dt * dw[1], w[2] + dt * dw[2])
        wrp = _cross(wp, r)
        v_pred = _mv(R, (vp[0] + wrp[0], vp[1] + wrp[1], vp[2] + wrp[2]))
        f_tot = list(fn_W)
        for (s, depth, n, vs), fn in zip(contacts, fns):
            if s.mu <= 0.0 or fn <= 0.0:
                continue
            vr = (v_pred[0] - vs[0], v_pred[1] - vs[1], v_pred[2] - vs[2])
            vn = n[0] * vr[0] + n[1] * vr[1] + n[2] * vr[2]
            vt = (vr[0] - vn * n[0], vr[1] - vn * n[1], vr[2] - vn * n[2])
            speed = math.sqrt(vt[0] * vt[0] + vt[1] * vt[1] + vt[2] * vt[2])
            if speed <= 0.0:
                continue
            u = (vt[0] / speed, vt[1] / speed, vt[2] / speed)
            # inverse effective mass of the tip along u
            uB = _mtv(R, u)
            ru = _cross(r, uB)
            jru = _mv(body.Jinv, ru)
            w_eff = 1.0 / m + ru[0] * jru[0] + ru[1] * jru[1] + ru[2] * jru[2]
            f_fric = min(s.mu * fn, speed / (dt * w_eff))
            for i in range(3):
                f_tot[i] -= f_fric * u[i]
        fc = tuple(f_tot)
    fcB = _mtv(R, fc)
    tc = _cross(r, fcB)
    F = (F[0] + fcB[0], F[1] + fcB[1], F[2] + fcB[2])
    T = (T[0] + tc[0], T[1] + tc[1], T[2] + tc[2])
    dw = _mv(body.Jinv, T)
    v1 = (v[0] + dt * F[0] / m, v[1] + dt * F[1] / m, v[2] + dt * F[2] / m)
    w1 = (w[0] + dt * dw[0], w[1] + dt * dw[1], w[2] + dt * dw[2])
    v2, w2 = _gyro_midpoint(v1, w1, body, dt, gyro_iterations)
    q_half = _quat_step(q, w2, 0.5 * dt)
    dp = _mv(_quat_R(q_half), v2)
    p2 = (p[0] + dt * dp[0], p[1] + dt * dp[1], p[2] + dt * dp[2])
    q2 = _quat_step(q, w2, dt)
    # the sums are cheap upper bounds of the max norms; NaN fails both comparisons
    speed = abs(v2[0]) + abs(v2[1]) + abs(v2[2]) + abs(w2[0]) + abs(w2[1]) + abs(w2[2])
    if not (speed < 1e4 and abs(p2[0]) + abs(p2[1]) + abs(p2[2]) < 1e5):
        _check_finite(np.array(v2 + w2), np.array(p2), t, SimState(np.array(p), np.array(q), np.array(v),
                                                                   np.array(w), t))
    return p2, q2, v2, w2, fc, fcB, tc, dist_B, dist_tip


_ZERO6 = (0.0,) * 6


def _pack(p, q, v, w, t, fc, fcB, tc, dist_B, dist_tip, act):
    contact_W = np.array(fc)
    contact_B = np.array(fcB + tc)
    if dist_B is None:
        dist_B, dist_tip = np.zeros(6), np.zeros(3)
    nxt = SimState(np.array(p), np.array(q), np.array(v), np.array(w), t)
    info = StepInfo(
        ext_wrench=contact_B + dist_B,
        contact_wrench=contact_B,
        disturbance_wrench=dist_B,
        tip_force=contact_W + dist_tip,
        contact_force=contact_W,
        act_wrench=np.asarray(act, dtype=float),
    )
    return nxt, info


def step(state: SimState, act, params: RigidBodyParams, surfaces=(), disturbances=(), dt: float = 1e-3,
         config: PlantConfig | None = None):
    """Advance one fixed step; returns ``(next_state, StepInfo)``.

    Default scheme: all forces as one impulse at the start of the step
    (friction from the predicted tip velocity, capped so it cannot reverse
    sliding), gyroscopic terms by implicit midpoint, then position and
    attitude from the new twist.  ``config.integrator == "rk4"`` re-evaluates
    every force at the four stages instead.
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    cfg = config or PlantConfig()
    act = np.asarray(act.vector() if isinstance(act, Wrench) else act, dtype=float)
    if cfg.integrator == "rk4":
        return _step_rk4(state, act, params, surfaces, disturbances, dt)
    out = _euler(_body(params), tuple(state.position.tolist()), tuple(state.quaternion.tolist()),
                 tuple(state.linear.tolist()), tuple(state.angular.tolist()), state.t, act.tolist(), surfaces,
                 disturbances, dt, cfg.gyro_iterations)
    p, q, v, w = out[:4]
    return _pack(p, q, v, w, state.t + dt, *out[4:], act)


def _check_finite(nu_next, p_next, t, state):
    if not (np.all(np.isfinite(nu_next)) and np.all(np.isfinite(p_next))):
        raise SimulationFault("non-finite state", t, state)
    if np.max(np.abs(nu_next)) > 1e4 or np.max(np.abs(p_next)) > 1e5:
        raise SimulationFault(f"divergence, |twist|max={np.max(np.abs(nu_next)):.3g}", t, state)


def _step_rk4(state, act, params, surfaces, disturbances, dt):
    t = state.t
    m, J = params.mass, params.inertia
    Jinv = np.linalg.inv(J)
    r = params.p_BT
    a = np.asarray(act, dtype=float)

    def loads(p, q, v, w):
        R = quat_to_matrix(q)
        g = gravity_wrench(params, R, include_com=True)
        dB, dtip = _disturbances(disturbances, t, R)
        tip = p + R @ r
        v_tip = R @ (v + cross3(w, r))
        fW = _tip_force(surfaces, tip, v_tip, t)
        fB = R.T @ fW
        cB = np.concatenate([fB, cross3(r, fB)])
        return a + g + dB + cB, cB, dB, fW, dtip

    def deriv(p, q, v, w):
        wrench = loads(p, q, v, w)[0]
        R = quat_to_matrix(q)
        dv = wrench[:3] / m - cross3(w, v)
        dw = Jinv @ (wrench[3:] - cross3(w, J @ w))
        qw = np.concatenate([[0.0], w])
        dq = 0.5 * quat_multiply(q, qw)
        return R @ v, dq, dv, dw

    y0 = (state.position, state.quaternion, state.linear, state.angular)

    def add(y, k, h):
        return tuple(yi + h * ki for yi, ki in zip(y, k))

    k1 = deriv(*y0)
    k2 = deriv(*add(y0, k1, 0.5 * dt))
    k3 = deriv(*add(y0, k2, 0.5 * dt))
    k4 = deriv(*add(y0, k3, dt))
    y1 = tuple(y + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4) for y, a1, a2, a3, a4 in zip(y0, k1, k2, k3, k4))
    p1, q1, v1, w1 = y1
    q1 = quat_normalize(q1)
    nu = np.concatenate([v1, w1])
    _check_finite(nu, p1, t, state)
    _, cB, dB, fW, dtip = loads(*y0)
    nxt = SimState(p1, q1, v1, w1, t + dt)
    return nxt, StepInfo(cB + dB, cB, dB, fW + dtip, fW, a)


def mechanical_energy(state: SimState, params: RigidBodyParams, surfaces=()) -> float:
    """Kinetic + gravitational + penalty-spring potential energy."""
    v, w = state.linear, state.angular
    R = state.rotation
    ke = 0.5 * params.mass * float(v @ v) + 0.5 * float(w @ params.inertia @ w)
    com_W = state.position + R @ params.p_com
    pe = -params.mass * float(GRAVITY_W @ com_W)
    tip = state.position + R @ params.p_BT
    for s in surfaces:
        dist, _, _ = s.geometry.probe(tip, state.t)
        if dist < 0.0:
            pe += 0.5 * s.k_w * dist * dist
    return ke + pe
