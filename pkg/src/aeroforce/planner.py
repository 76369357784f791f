"""Contact trajectory planning: surface lookup, contact poses, smooth segments and force ramps."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .controller import Setpoint
from .core import matrix_to_quat, quat_exp, quat_to_matrix, rotation_log

SAMPLE_DT = 0.01


class PlanningError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectorySetpoint(Setpoint):
    t: float = 0.0


@dataclass(frozen=True)
class ContactSpec:
    """One planned contact.

    ``target`` is a free-space point near the surface; the tool is sent to the
    closest surface point.  ``offset`` shifts the commanded tool position along
    the outward normal (positive: in front of the surface, negative: behind).
    """

    target: np.ndarray
    dwell: float = 5.0
    force: float = 10.0
    ramp: float = 1.0
    offset: float = 0.0
    approach_distance: float = 0.15  # pre-contact standoff along the normal [m]
    approach_time: float = 2.0
    steps: tuple = ()  # further (time into dwell, magnitude) levels

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(3))
        object.__setattr__(self, "steps", tuple((float(a), float(b)) for a, b in self.steps))
        times = [self.ramp] + [a for a, _ in self.steps]
        if any(b < a + self.ramp for a, b in zip(times, times[1:])) or (
                self.steps and self.steps[-1][0] + 2.0 * self.ramp > self.dwell):
            raise PlanningError("force steps must be separated by at least one ramp and end before the last ramp")
        if any(f < 0 for _, f in self.steps):
            raise PlanningError("force levels must be non-negative")
        if self.force < 0:
            raise PlanningError("force reference must be non-negative")
        if self.dwell <= 0 or self.ramp < 0:
            raise PlanningError(f"infeasible timing: dwell {self.dwell} s with ramp {self.ramp} s")
        if 2.0 * self.ramp > self.dwell:
            raise PlanningError(f"ramps of {self.ramp} s do not fit into a {self.dwell} s dwell")


# --- geometry ---------------------------------------------------------------------

def surface_contact_lookup(surface, target):
    """Closest surface point to ``target`` and the outward unit normal there (both in W)."""
    geom = getattr(surface, "geometry", surface)
    faces = getattr(geom, "faces", None)
    if faces is not None and len(faces) == 0:
        raise PlanningError("surface geometry is empty")
    p, n = geom.closest_point(np.asarray(target, dtype=float))
    return np.asarray(p, dtype=float), np.asarray(n, dtype=float) / np.linalg.norm(n)


def contact_pose(p_c, n, gravity, p_BT, R_BT):
    """Body pose placing the tool tip at ``p_c`` with the tool z axis into the surface.

    Tool columns in W are built from ``alpha = -n x g`` and ``beta = -n``; the
    first column ``beta x alpha`` always yields a left-handed triad and is
    flipped, giving ``[alpha x beta, alpha, beta]``.
    """
    n = np.asarray(n, dtype=float)
    n = n / np.linalg.norm(n)
    g = np.asarray(gravity, dtype=float)
    a = -np.cross(n, g)
    na = np.linalg.norm(a)
    if na < 1e-6 * max(np.linalg.norm(g), 1e-12):
        raise PlanningError("surface normal is parallel to gravity; tool roll is undefined")
    a = a / na
    b = -n
    R_WT = np.column_stack([np.cross(b, a), a, b])
    if np.linalg.det(R_WT) < 0:
        R_WT[:, 0] = -R_WT[:, 0]
    R_BT = np.asarray(R_BT, dtype=float)
    R_WB = R_WT @ R_BT.T
    p_WB = np.asarray(p_c, dtype=float) - R_WB @ np.asarray(p_BT, dtype=float)
    return p_WB, R_WB


# --- segments ---------------------------------------------------------------------

def _quintic(tau: float):
    """Smooth step with zero end velocity/acceleration: (s, ds/dtau, d2s/dtau2)."""
    t2 = tau * tau
    return (t2 * tau * (10.0 - 15.0 * tau + 6.0 * t2),
            30.0 * t2 * (1.0 - tau) ** 2,
            60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau))


@dataclass
class _Move:
    p0: np.ndarray
    R0: np.ndarray
    p1: np.ndarray
    R1: np.ndarray
    duration: float

    def __post_init__(self):
        self.phi = rotation_log(self.R0.T @ self.R1)

    def sample(self, t: float):
        tau = min(max(t / self.duration, 0.0), 1.0)
        if tau >= 1.0:
            return self.p1, self.R1, np.zeros(3), np.zeros(3), np.zeros(3)
        s, ds, _ = _quintic(tau)
        ds /= self.duration
        p = self.p0 + (self.p1 - self.p0) * s
        R = self.R0 @ quat_to_matrix(quat_exp(s * self.phi))
        return p, R, (self.p1 - self.p0) * ds, self.R0 @ self.phi * ds, np.zeros(3)


def _blend(a: float, b: float, s: float) -> float:
    return a + (b - a) * 0.5 * (1.0 - math.cos(math.pi * s))


@dataclass
class _Dwell:
    """Fixed pose with a force reference along ``direction``.

    The magnitude ramps from zero to ``levels[0][1]`` at the start, moves to
    each further level ``(t_i, f_i)`` over ``ramp`` seconds from ``t_i`` and
    ramps back to zero at the end.  ``rise``/``fall`` disable the outer ramps.
    """

    p: np.ndarray
    R: np.ndarray
    direction: np.ndarray  # unit push direction in W (zero for no force)
    levels: list
    ramp: float
    duration: float
    rise: bool = True
    fall: bool = True

    def magnitude(self, t: float) -> float:
        if not self.levels:
            return 0.0
        if self.rise and t <= 0.0 or self.fall and t >= self.duration:
            return 0.0
        f = self.levels[0][1]
        if self.rise and t < self.ramp:
            f = _blend(0.0, f, t / self.ramp)
        for (_, a), (ts, b) in zip(self.levels, self.levels[1:]):
            if t >= ts + self.ramp:
                f = b
            elif t > ts:
                f = _blend(a, b, (t - ts) / self.ramp)
        if self.fall and t > self.duration - self.ramp:
            f = _blend(0.0, f, (self.duration - t) / self.ramp)
        return f

    def level(self, t: float) -> float:
        peak = max(f for _, f in self.levels) if self.levels else 0.0
        return self.magnitude(t) / peak if peak > 0 else 0.0

    def sample(self, t: float):
        return self.p, self.R, np.zeros(3), np.zeros(3), self.direction * self.magnitude(t)


@dataclass
class _Slide:
    """Body positions along a clamped cubic spline at fixed attitude with a held force."""

    spline: CubicSpline
    R: np.ndarray
    force: np.ndarray
    duration: float

    def sample(self, t: float):
        t = min(max(t, 0.0), self.duration)
        return self.spline(t), self.R, self.spline(t, 1), np.zeros(3), self.force.copy()


class Trajectory:
    """Piecewise trajectory sampled on a fixed 100 Hz grid."""

    def __init__(self, segments, dt: float = SAMPLE_DT):
        self.segments = list(segments)
        self.dt = dt
        self.starts = np.cumsum([0.0] + [s.duration for s in self.segments])
        self.duration = float(self.starts[-1])

    def evaluate(self, t: float) -> TrajectorySetpoint:
        i = int(np.searchsorted(self.starts, t, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        p, R, v, w, F = self.segments[i].sample(t - self.starts[i])
        return TrajectorySetpoint(np.array(p, dtype=float), np.array(R, dtype=float), np.array(v, dtype=float),
                                  np.array(w, dtype=float), np.array(F, dtype=float), np.zeros(3), float(t))

    def samples(self) -> list[TrajectorySetpoint]:
        n = int(round(self.duration / self.dt))
        return [self.evaluate(k * self.dt) for k in range(n + 1)]

    def dwell_windows(self):
        return [(float(self.starts[i]), float(self.starts[i + 1]))
                for i, s in enumerate(self.segments) if isinstance(s, (_Dwell, _Slide))]


def plan_trajectory(start, contacts, end, durations, surface, p_BT, R_BT,
                    gravity=(0.0, 0.0, -9.81)) -> Trajectory:
    """Free-flight quintic moves between a start pose, contact dwells and an end pose.

    ``start`` and ``end`` are ``(p_WB, R_WB)``.  ``durations`` gives one move
    time per free-flight leg (``len(contacts) + 1`` entries).  Each contact is
    approached along its normal from ``approach_distance`` in front of it.
    """
    contacts = list(contacts)
    durations = list(durations)
    if len(durations) != len(contacts) + 1:
        raise PlanningError(f"need {len(contacts) + 1} leg durations, got {len(durations)}")
    if any(d <= 0 for d in durations):
        raise PlanningError("leg durations must be positive")
    p_prev = np.asarray(start[0], dtype=float)
    R_prev = np.asarray(start[1], dtype=float)
    segs = []
    for spec, leg in zip(contacts, durations):
        p_c, n = surface_contact_lookup(surface, spec.target)
        p_cmd, R_c = contact_pose(p_c + spec.offset * n, n, gravity, p_BT, R_BT)
        if spec.approach_distance > 0.0:
            p_pre = p_cmd + spec.approach_distance * n
            segs.append(_Move(p_prev, R_prev, p_pre, R_c, leg))
            segs.append(_Move(p_pre, R_c, p_cmd, R_c, spec.approach_time))
        else:
            segs.append(_Move(p_prev, R_prev, p_cmd, R_c, leg))
        segs.append(_Dwell(p_cmd, R_c, -n, [(0.0, spec.force), *spec.steps], spec.ramp, spec.dwell))
        p_prev, R_prev = p_cmd, R_c
        if spec.approach_distance > 0.0:
            p_post = p_cmd + spec.approach_distance * n
            segs.append(_Move(p_cmd, R_c, p_post, R_c, spec.approach_time))
            p_prev = p_post
    segs.append(_Move(p_prev, R_prev, np.asarray(end[0], dtype=float), np.asarray(end[1], dtype=float),
                      durations[-1]))
    return Trajectory(segs)


def plan_push_and_slide(start, path_points, surface, force: float, slide_time: float, p_BT, R_BT,
                        approach_time: float = 3.0, ramp: float = 1.0, settle: float = 1.0,
                        gravity=(0.0, 0.0, -9.81)) -> Trajectory:
    """Approach the first path point, ramp the force up, slide along a spline, ramp down, retreat.

    ``path_points`` are tool positions on the surface; the attitude is that of
    the contact pose at the first point and held while sliding.
    """
    pts = np.asarray(path_points, dtype=float)
    if len(pts) < 2:
        raise PlanningError("a slide needs at least two path points")
    if slide_time <= 0 or approach_time <= 0 or ramp < 0:
        raise PlanningError("infeasible slide timing")
    contact = [surface_contact_lookup(surface, q) for q in pts]
    n0 = contact[0][1]
    _, R_c = contact_pose(contact[0][0], n0, gravity, p_BT, R_BT)
    body = np.array([c - R_c @ np.asarray(p_BT, dtype=float) for c, _ in contact])
    chord = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(body, axis=0), axis=1))])
    if chord[-1] <= 0:
        raise PlanningError("path points coincide")
    knots = chord / chord[-1] * slide_time
    spline = CubicSpline(knots, body, bc_type="clamped")
    levels = [(0.0, force)]
    pre = body[0] + 0.15 * n0
    post = body[-1] + 0.15 * n0
    hold = 2.0 * ramp + settle
    segs = [
        _Move(np.asarray(start[0], dtype=float), np.asarray(start[1], dtype=float), pre, R_c, approach_time),
        _Move(pre, R_c, body[0], R_c, 2.0),
        _Dwell(body[0], R_c, -n0, levels, ramp, hold, fall=False),
        _Slide(spline, R_c, -n0 * force, slide_time),
        _Dwell(body[-1], R_c, -n0, levels, ramp, hold, rise=False),
        _Move(body[-1], R_c, post, R_c, 2.0),
    ]
    return Trajectory(segs)


# --- CSV interchange ----------------------------------------------------------------

CSV_HEADER = (["t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz",
               "fx", "fy", "fz", "tx", "ty", "tz"])


def export_csv(samples, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in samples:
            row = [s.t, *s.position, *matrix_to_quat(s.rotation), *s.linear, *s.angular, *s.force, *s.torque]
            w.writerow([repr(float(x)) for x in row])


def import_csv(path) -> list[TrajectorySetpoint]:
    out = []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise PlanningError(f"unexpected trajectory header {header}")
        for row in reader:
            x = [float(v) for v in row]
            out.append(TrajectorySetpoint(np.array(x[1:4]), quat_to_matrix(np.array(x[4:8])), np.array(x[8:11]),
                                          np.array(x[11:14]), np.array(x[14:17]), np.array(x[17:20]), x[0]))
    ts = [s.t for s in out]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise PlanningError("trajectory timestamps must be strictly increasing")
    return out


class SampledTrajectory:
    """Zero-order hold over a list of setpoints (e.g. an imported CSV)."""

    def __init__(self, samples):
        self.samples_ = list(samples)
        self.times = np.array([s.t for s in self.samples_])
        self.duration = float(self.times[-1])

    def evaluate(self, t: float) -> TrajectorySetpoint:
        i = int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1
        return self.samples_[min(max(i, 0), len(self.samples_) - 1)]

    def samples(self):
        return list(self.samples_)
