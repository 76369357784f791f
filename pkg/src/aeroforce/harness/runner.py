"""Closed-loop scenario execution: plant, sensors, estimators, controller and planner on fixed rates."""
from __future__ import annotations

import csv
import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..controller import ControllerModel, ControllerState, Setpoint, control_step
from ..core import FrameId, Pose, matrix_to_quat, rot_z
from ..dynamics import (
    ContactSurface,
    DisturbanceProfile,
    DisturbanceWindow,
    Plant,
    RigidBodyParams,
    SimState,
    SimulationFault,
    coriolis_matrix,
    gravity_wrench,
    mass_matrix,
)
from ..estimation import ForceSensor, WrenchEstimatorState, wrench_estimator_step
from ..geometry import HeightField, Plane, TriangleMesh
from ..perception import CameraModel, DistanceEstimator
from ..planner import (
    ContactSpec,
    SampledTrajectory,
    Trajectory,
    _Dwell,
    import_csv,
    plan_push_and_slide,
    plan_trajectory,
)
from .config import ScenarioConfig

COLUMNS = (
    ["t"]
    + [f"p_{a}" for a in "xyz"] + [f"q_{a}" for a in "wxyz"]
    + [f"v_{a}" for a in "xyz"] + [f"w_{a}" for a in "xyz"]
    + [f"pref_{a}" for a in "xyz"] + [f"qref_{a}" for a in "wxyz"]
    + [f"tool_{a}" for a in "xyz"] + [f"toolref_{a}" for a in "xyz"]
    + [f"Fref_{a}" for a in "xyz"]
    + ["lam", "d_t", "m_T", "f_push", "f_push_true", "in_contact"]
    + [f"ft_{a}" for a in "xyz"] + [f"ftraw_{a}" for a in "xyz"] + [f"tip_{a}" for a in "xyz"]
    + [f"ext_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"hat_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"dir_{a}" for a in ("fx", "fy", "fz")]
    + [f"imp_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"cmd_{a}" for a in ("fx", "fy", "fz", "tx", "ty", "tz")]
    + [f"ep_{a}" for a in "xyz"] + [f"eR_{a}" for a in "xyz"]
)
INDEX = {c: i for i, c in enumerate(COLUMNS)}


@dataclass
class RunLog:
    """Control-rate time series plus run metadata."""

    data: np.ndarray  # (N, len(COLUMNS))
    meta: dict = field(default_factory=dict)
    fault: str | None = None

    def __getitem__(self, name: str) -> np.ndarray:
        if name in INDEX:
            return self.data[:, INDEX[name]]
        for suffix in ("wxyz", "xyz"):
            cols = [f"{name}_{a}" for a in suffix]
            if all(c in INDEX for c in cols):
                return self.data[:, [INDEX[c] for c in cols]]
        raise KeyError(name)

    def __len__(self) -> int:
        return len(self.data)

    @property
    def columns(self):
        return list(COLUMNS)

    def write(self, path) -> Path:
        """CSV with shortest round-trip floats and a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for row in self.data:
                w.writerow([repr(float(x)) for x in row])
        meta = dict(self.meta, fault=self.fault, rows=len(self.data))
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "RunLog":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(x) for x in r] for r in reader]
        if header != COLUMNS:
            missing = sorted(set(COLUMNS) - set(header))
            raise ValueError(f"{path}: not a run log (missing columns: {', '.join(missing[:5])})")
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        fault = meta.pop("fault", None)
        meta.pop("rows", None)
        data = np.array(rows, dtype=float).reshape(-1, len(COLUMNS))
        return cls(data, meta, fault)


# --- building runtime objects ------------------------------------------------------

def build_params(cfg: ScenarioConfig) -> RigidBodyParams:
    v = cfg.vehicle
    J = np.asarray(v.inertia, dtype=float)
    return RigidBodyParams(v.mass, np.diag(J) if J.ndim == 1 else J, np.asarray(v.p_com), np.asarray(v.p_BT),
                           np.asarray(v.R_BT))


def build_surface(spec) -> ContactSurface:
    if spec.kind == "plane":
        geom = Plane(spec.point, spec.normal, spec.motion)
    elif spec.kind == "heightfield":
        geom = HeightField.procedural(spec.origin, spec.rotation, tuple(spec.size), spec.amplitude, spec.n_terms,
                                      spec.seed)
    else:
        geom = TriangleMesh(spec.vertices, spec.faces)
    return ContactSurface(geom, spec.k_w, spec.c_w, spec.mu, spec.visible)


def build_trajectory(cfg: ScenarioConfig, surfaces, params: RigidBodyParams):
    tr = cfg.trajectory
    p0 = np.asarray(tr.start_position, dtype=float)
    R0 = rot_z(math.radians(tr.start_yaw_deg))
    if tr.kind == "hover":
        return Trajectory([_Dwell(p0, R0, np.zeros(3), [], 0.0, cfg.duration + 1.0)])
    if tr.kind == "csv":
        return SampledTrajectory(import_csv(tr.csv))
    surface = surfaces[tr.surface]
    if tr.kind == "slide":
        return plan_push_and_slide((p0, R0), tr.path, surface, tr.force, tr.slide_time, params.p_BT, params.R_BT,
                                   approach_time=tr.approach_time, ramp=tr.ramp)
    contacts = [ContactSpec(np.asarray(c.target), c.dwell, c.force, c.ramp, c.offset, c.approach_distance,
                            c.approach_time, tuple(tuple(x) for x in c.steps)) for c in tr.contacts]
    p1 = p0 if tr.end_position is None else np.asarray(tr.end_position, dtype=float)
    R1 = R0 if tr.end_yaw_deg is None else rot_z(math.radians(tr.end_yaw_deg))
    durations = list(tr.durations) or [3.0] * (len(contacts) + 1)
    traj = plan_trajectory((p0, R0), contacts, (p1, R1), durations, surface, params.p_BT, params.R_BT)
    return traj


class _Hold:
    """Zero-order hold of a trajectory at the trajectory rate; holds the last sample past the end."""

    def __init__(self, traj, rate: float):
        self.traj = traj
        self.dt = 1.0 / rate
        self._k = None
        self._sp = None

    def __call__(self, t: float) -> Setpoint:
        k = int(math.floor(t / self.dt + 1e-9))
        if k != self._k:
            tk = min(k * self.dt, self.traj.duration)
            self._k = k
            self._sp = self.traj.evaluate(tk)
        return self._sp


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    cam, sensor = ss.spawn(2)
    return np.random.default_rng(cam), np.random.default_rng(sensor)


def run_scenario(cfg: ScenarioConfig, progress=None) -> RunLog:
    """Run one closed-loop scenario.  A simulation fault ends the run with a partial log."""
    cfg.validate()
    params = build_params(cfg)
    surfaces = [build_surface(s) for s in cfg.surfaces]
    profile = DisturbanceProfile([
        DisturbanceWindow(w.start, w.end, w.force, w.torque, w.point, w.ramp, w.at_tool) for w in cfg.disturbances
    ])
    plant = Plant(params, surfaces, [profile] if profile.windows else [], cfg.plant)
    traj = build_trajectory(cfg, surfaces, params)
    reference = _Hold(traj, cfg.rates.trajectory)

    p_com_ctrl = params.p_com if cfg.vehicle.p_com_estimate is None else np.asarray(cfg.vehicle.p_com_estimate)
    model = ControllerModel.from_params(params, p_com_ctrl)
    model_params = RigidBodyParams(params.mass, params.inertia, p_com_ctrl, params.p_BT, params.R_BT)
    M = mass_matrix(model_params)

    rng_cam, rng_sensor = _streams(cfg.seed)
    dt_c = 1.0 / cfg.rates.control
    n_sub = int(round(cfg.rates.physics / cfg.rates.control))
    dt_p = dt_c / n_sub
    sensor = ForceSensor(cfg.sensor, cfg.rates.control, rng_sensor)
    cam = cfg.camera
    estimator = None
    if cam.enabled:
        camera = CameraModel(
            p_TC=np.asarray(cam.position), fov=tuple(math.radians(a) for a in cam.fov_deg),
            resolution=tuple(cam.resolution), sigma=cam.sigma, max_range=cam.max_range,
            roi_half_angle=None if cam.roi_deg is None else math.radians(cam.roi_deg),
        )
        estimator = DistanceEstimator(camera, cam.d_pi, cam.rate, z_min=cam.z_min)

    ref0 = traj.evaluate(0.0)
    state = SimState.at_rest(np.asarray(ref0.position) + np.asarray(cfg.initial_offset), ref0.rotation)
    obs = WrenchEstimatorState.with_gain(cfg.observer.k_lin, cfg.observer.k_ang)
    ctrl = ControllerState()
    tau_prev = np.zeros(6)
    n_delay = int(round(cfg.plant.command_delay / dt_c))
    pending = deque([np.zeros(6)] * n_delay)
    tip_force = np.zeros(3)
    contact_force = np.zeros(3)
    ext = np.zeros(6)
    n_ticks = int(round(cfg.duration / dt_c))
    rows = []
    fault = None
    R_BT = params.R_BT
    z_T_B = R_BT[:, 2]

    for k in range(n_ticks):
        t = k * dt_c
        R = state.rotation
        p = state.position
        v_B, w_B = state.linear, state.angular
        ref = reference(t)

        nu = np.concatenate([v_B, w_B])
        obs = wrench_estimator_step(obs, M, coriolis_matrix(model_params, nu),
                                    -gravity_wrench(model_params, R, include_com=True), nu, tau_prev, dt_c)
        raw, f_t = sensor.measure(tip_force, R, t)

        d_t = None
        if estimator is not None:
            tool_pose = Pose(p + R @ params.p_BT, R @ R_BT, FrameId.W, FrameId.T)
            patch = estimator.update(t, tool_pose, surfaces, rng_cam)
            d_t = None if patch is None else patch.distance

        tau, ctrl, tel = control_step(p, R, v_B, w_B, ref, d_t, f_t, obs.estimate, model, cfg.impedance,
                                      cfg.force, ctrl, dt_c)

        tool = p + R @ params.p_BT
        tool_ref = np.asarray(ref.position) + np.asarray(ref.rotation) @ params.p_BT
        f_push = -float(z_T_B @ f_t)
        f_push_true = -float(z_T_B @ (R.T @ contact_force))
        rows.append(np.concatenate([
            [t], p, state.quaternion, v_B, w_B, ref.position, matrix_to_quat(ref.rotation), tool, tool_ref,
            ref.force, [tel.lam, np.nan if d_t is None else d_t, tel.m_T, f_push, f_push_true,
                        float(np.any(contact_force != 0.0))],
            f_t, raw, tip_force, ext, obs.estimate, tel.tau_dir[:3], tel.tau_imp, tau, tel.e_p, tel.e_R,
        ]))

        try:
            pending.append(tau)
            state, info = plant.advance(state, pending.popleft(), dt_p, n_sub)
        except SimulationFault as exc:
            fault = str(exc)
            break
        tip_force = info.tip_force
        contact_force = info.contact_force
        ext = info.ext_wrench
        tau_prev = tau
        if progress is not None:
            progress(k, n_ticks)

    meta = {"name": cfg.name, "seed": cfg.seed, "config_hash": cfg.digest(), "dt_control": dt_c,
            "dt_physics": dt_p, "duration": cfg.duration, "z_T_B": z_T_B.tolist()}
    if isinstance(traj, Trajectory):
        meta["dwells"] = traj.dwell_windows()
    return RunLog(np.array(rows).reshape(-1, len(COLUMNS)), meta, fault)


__all__ = ["RunLog", "run_scenario", "build_trajectory", "build_params", "build_surface", "COLUMNS"]
