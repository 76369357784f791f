"""Scenario presets A-F with their pass/fail checks.

A  free-flight disturbance: moving visible wall vs. invisible stick, stiffness fits
B  force step tracking 5 -> 10 -> 20 N on a rigid wall
C  planner-error corner cases (setpoint behind, 0.25 m in front, far from the wall)
D  push-and-slide along a spline on a vertical plane with friction
E  nine-point contact inspection, 5 cm spacing
F  42 seeded contacts on an undulating surface, plus a springy variant
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..controller import ForceControlConfig, ImpedanceConfig
from .batch import run_many
from .config import (
    CameraSpec,
    ContactPlanSpec,
    ObserverSpec,
    ScenarioConfig,
    SurfaceSpec,
    TrajectorySpec,
    WindowSpec,
)
from .metrics import final_window, fit_stiffness, force_error, peak_to_peak, summarize, tool_lateral_error
from .runner import RunLog

# controller parameter sets
IMP_AD = dict(K_lin=130.0, K_ang=9.0, D_lin=40.0, D_ang=3.0, d_min=0.02, d_max=0.2)
FORCE_AD = ForceControlConfig(K_fp=0.1, K_fi=1.0, e_min=0.2, e_max=0.25)
IMP_BCEF = dict(K_lin=100.0, K_ang=3.5, D_lin=35.0, D_ang=1.2, d_min=0.2, d_max=0.4)
FORCE_BCEF = ForceControlConfig(K_fp=0.1, K_fi=1.0, e_min=0.15, e_max=0.25)

CAMERA = CameraSpec()
WALL = SurfaceSpec(kind="plane", point=[0.0, 0.0, 0.0], normal=[1.0, 0.0, 0.0])
FACING_WALL = 180.0  # yaw that points the tool (body x) at the x = 0 wall


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    limit: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"[{flag}] {self.name}: {self.value:.4g} (limit {self.limit:.4g}){extra}"


def _check(name, value, limit, passed, detail="") -> Check:
    return Check(name, float(value), float(limit), bool(passed), detail)


@dataclass
class PresetResult:
    key: str
    configs: list
    logs: list
    checks: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and not any(log.fault for log in self.logs)


@dataclass(frozen=True)
class Preset:
    key: str
    title: str
    build: Callable[[int], list]
    evaluate: Callable[[list, list], tuple]


# --- A: free-flight disturbance -------------------------------------------------------

A_TOOL_X = 0.30  # tool reference distance from the wall plane origin
A_LEVELS = [0.01, 0.02, 0.03, 0.04, 0.02, -0.015]  # wall intrusion past the tool reference [m]
A_MOVE, A_HOLD, A_START = 0.5, 6.0, 3.0
A_SETTLE = 3.5  # fit only the quasi-static tail of each hold
A_M_WALL = (1.0, 0.5, 0.25)
A_STICK = [1.5, 3.0, 4.5, 6.0, 3.0, 0.0]  # [N]


def _a_holds():
    """(start, end, level) of each hold of the staircase."""
    out = []
    t = A_START
    for lvl in A_LEVELS:
        out.append((t + A_MOVE, t + A_MOVE + A_HOLD, lvl))
        t += A_MOVE + A_HOLD
    return out, t


def _a_mask(log: RunLog):
    holds, _ = _a_holds()
    t = log["t"]
    m = np.zeros(len(t), dtype=bool)
    for start, end, lvl in holds:
        if lvl > 0:
            m |= (t >= start + A_SETTLE) & (t < end)
    return m


def _a_hover(name, imp, duration, seed):
    return ScenarioConfig(
        name=name, duration=duration, seed=seed,
        impedance=ImpedanceConfig(**imp), force=FORCE_AD, observer=ObserverSpec(1.0, 1.0), camera=CAMERA,
        trajectory=TrajectorySpec(kind="hover", start_position=[A_TOOL_X + 0.5, 0.0, 1.5],
                                  start_yaw_deg=FACING_WALL),
    )


def build_a(seed: int = 0) -> list:
    holds, t_end = _a_holds()
    duration = t_end + 1.0
    keys = [[0.0, A_TOOL_X - 0.015], [A_START, A_TOOL_X - 0.015]]
    t = A_START
    for lvl in A_LEVELS:
        keys.append([t + A_MOVE, A_TOOL_X + lvl])
        keys.append([t + A_MOVE + A_HOLD, A_TOOL_X + lvl])
        t += A_MOVE + A_HOLD
    cfgs = []
    for m in A_M_WALL:
        cfg = _a_hover(f"A-wall-{m}", dict(IMP_AD, m_free=5.0, m_wall=m), duration, seed)
        wall = dataclasses.replace(WALL, motion=keys)
        cfgs.append(dataclasses.replace(cfg, surfaces=[wall]))
    # invisible stick: staircase of contiguous windows on the tool tip
    windows = []
    for (start, end, _), f in zip(holds, A_STICK):
        windows.append(WindowSpec(start=start - A_MOVE, end=end, force=[f, 0.0, 0.0], point=[0.5, 0.0, 0.0],
                                  at_tool=True))
    windows = [w for w in windows if w.force[0] != 0.0]
    stick = _a_hover("A-stick", dict(IMP_AD, m_free=5.0, m_wall=0.25), duration, seed)
    cfgs.append(dataclasses.replace(stick, disturbances=windows))
    return cfgs


def evaluate_a(cfgs, logs):
    ks = {}
    for cfg, log in zip(cfgs, logs):
        k, sk = fit_stiffness(log, "x", _a_mask(log))
        ks[cfg.name] = (k, sk)
    checks = []
    for m in A_M_WALL:
        k, _ = ks[f"A-wall-{m}"]
        expect = IMP_AD["K_lin"] * m
        rel = abs(k - expect) / expect
        checks.append(_check(f"k(m_wall={m}) vs K*m = {expect:g} N/m, rel. error", rel, 0.05, rel < 0.05,
                             f"k = {k:.2f} N/m"))
    ratio = ks["A-wall-1.0"][0] / ks["A-wall-0.5"][0]
    checks.append(_check("k(1.0)/k(0.5)", ratio, 2.0, abs(ratio - 2.0) <= 0.2, "expected 2.0 +- 10%"))
    stick = ks["A-stick"][0] / ks["A-wall-0.5"][0]
    checks.append(_check("k(stick)/k(m_wall=0.5)", stick, 5.0, stick >= 5.0))
    metrics = {name: {"k": k, "sigma_k": s} for name, (k, s) in ks.items()}
    return checks, metrics


# --- B: force step tracking -------------------------------------------------------------

B_LEVELS = (5.0, 10.0, 20.0)
B_STEP_AT = (8.0, 16.0)  # into the dwell
B_RAMP, B_DWELL = 2.0, 24.0
B_SETTLE, B_TOL = 2.0, 0.25


def _bc_wall(name, seed, contact: ContactPlanSpec, duration, k_i=3.0):
    return ScenarioConfig(
        name=name, duration=duration, seed=seed, surfaces=[WALL],
        impedance=ImpedanceConfig(**IMP_BCEF, m_free=5.0, m_wall=0.5, J_v=5.0),
        force=FORCE_BCEF, observer=ObserverSpec(k_i, k_i), camera=CAMERA,
        trajectory=TrajectorySpec(kind="contacts", start_position=[1.3, 0.0, 1.5], start_yaw_deg=FACING_WALL,
                                  durations=[2.0, 2.0], contacts=[contact]),
    )


def build_b(seed: int = 0) -> list:
    steps = [[a, f] for a, f in zip(B_STEP_AT, B_LEVELS[1:])]
    contact = ContactPlanSpec(target=[0.0, 0.0, 1.5], dwell=B_DWELL, force=B_LEVELS[0], ramp=B_RAMP, steps=steps)
    return [_bc_wall("B-force-steps", seed, contact, B_DWELL + 6.0)]


def _dwell(log):
    return log.meta["dwells"][0] if log.meta.get("dwells") else (0.0, 0.0)


def evaluate_b(cfgs, logs):
    (log,) = logs
    t = log["t"]
    d0, d1 = _dwell(log)
    onsets = [d0] + [d0 + a for a in B_STEP_AT]
    ends = onsets[1:] + [d1 - B_RAMP]
    e = np.abs(force_error(log))
    checks = []
    metrics = {}
    for level, a, b in zip(B_LEVELS, onsets, ends):
        m = (t >= a + B_SETTLE) & (t < b)
        worst = float(e[m].max())
        metrics[f"max_abs_error_{level:g}N"] = worst
        checks.append(_check(f"|e_f| from {B_SETTLE:g} s after the {level:g} N step", worst, B_TOL, worst < B_TOL))
    hold = (t >= d0 + B_RAMP) & (t < d1 - B_RAMP)
    lost = int(np.sum(log["in_contact"][hold] < 0.5))
    checks.append(_check("samples without contact during the dwell", lost, 0, lost == 0))
    return checks, metrics


# --- C: planner-error corner cases ----------------------------------------------------

C_OFFSETS = {"a-behind": -0.01, "b-front": 0.25, "c-far": 0.6}
C_DWELL, C_RAMP = 10.0, 1.0


def build_c(seed: int = 0) -> list:
    out = []
    for label, off in C_OFFSETS.items():
        contact = ContactPlanSpec(target=[0.0, 0.0, 1.5], dwell=C_DWELL, force=5.0, ramp=C_RAMP, offset=off)
        out.append(_bc_wall(f"C-{label}", seed, contact, C_DWELL + 7.0))
    return out


def evaluate_c(cfgs, logs):
    by = {c.name: log for c, log in zip(cfgs, logs)}
    checks, metrics = [], {}
    a = by["C-a-behind"]
    d0, d1 = _dwell(a)
    lam_a = float(a["lam"].max())
    t = a["t"]
    tail = (t >= d1 - C_RAMP - 2.0) & (t < d1 - C_RAMP)
    ea = float(np.abs(force_error(a)[tail]).max())
    checks.append(_check("(a) max lambda", lam_a, 0.95, lam_a > 0.95))
    checks.append(_check("(a) |e_f| over the last 2 s of the hold", ea, 0.25, ea < 0.25))

    b = by["C-b-front"]
    lam = b["lam"]
    above = np.flatnonzero(lam > 0.05)
    returned = bool(above.size) and bool(np.any(lam[above[0]:] < 0.05))
    d0, d1 = _dwell(b)
    tb = b["t"]
    in_hold = (tb >= d0 + C_RAMP) & (tb < d1 - C_RAMP)
    e_pos = float(np.linalg.norm(b["p"] - b["pref"], axis=1).max())
    checks.append(_check("(b) max lambda", float(lam.max()), 0.05, lam.max() > 0.05))
    checks.append(_check("(b) lambda returns below 0.05", float(lam[above[-1] + 1:].min()) if returned else 1.0,
                         0.05, returned))
    checks.append(_check("(b) max body position error [m]", e_pos, 0.5, e_pos < 0.5))
    metrics["b_lambda_end_of_hold"] = float(lam[in_hold][-1])
    metrics["b_lambda_min_during_hold_after_peak"] = float(lam[in_hold][int(np.argmax(lam[in_hold])):].min())

    c = by["C-c-far"]
    dmin = float(np.nanmin(c["d_t"][force_error_phase(c)]))
    checks.append(_check("(c) max lambda", float(c["lam"].max()), 0.0, c["lam"].max() == 0.0))
    checks.append(_check("(c) min d_t while a force is requested", dmin, cfgs[0].impedance.d_max,
                         dmin > cfgs[0].impedance.d_max))
    return checks, metrics


def force_error_phase(log):
    return np.linalg.norm(log["Fref"], axis=1) > 0.0


# --- D: push-and-slide -----------------------------------------------------------------

D_FORCES = (1.0, 3.0, 5.0)
D_PATH = [[-0.30, 0.0, 1.35], [-0.15, 0.0, 1.55], [0.0, 0.0, 1.40], [0.15, 0.0, 1.60], [0.30, 0.0, 1.45]]
D_SLIDE = 12.0


def build_d(seed: int = 0) -> list:
    wall = SurfaceSpec(kind="plane", point=[0.0, 0.0, 0.0], normal=[0.0, 1.0, 0.0], mu=0.3)
    out = []
    for f in D_FORCES:
        traj = TrajectorySpec(kind="slide", start_position=[-0.3, 0.9, 1.35], start_yaw_deg=-90.0, path=D_PATH,
                              force=f, slide_time=D_SLIDE, ramp=1.0, approach_time=2.0)
        out.append(ScenarioConfig(
            name=f"D-slide-{f:g}N", duration=2.0 + 2.0 + 3.0 + D_SLIDE + 3.0 + 2.0, seed=seed, surfaces=[wall],
            impedance=ImpedanceConfig(**IMP_AD, m_free=5.0, m_wall=0.25, J_v=5.0), force=FORCE_AD,
            observer=ObserverSpec(3.0, 3.0), camera=CAMERA, trajectory=traj,
        ))
    return out


def d_contact_phase(log) -> np.ndarray:
    """The spline slide at full reference, after the up-ramp has brought the tool into contact.

    The touchdown transient of the up-ramp (one short bounce at 1 N) is
    not part of the slide.
    """
    t = log["t"]
    dwells = log.meta.get("dwells", [])
    active = force_error_phase(log)
    if len(dwells) < 3:
        return active
    return (t >= dwells[1][0]) & (t < dwells[1][1]) & active


def evaluate_d(cfgs, logs):
    checks, metrics = [], {}
    for cfg, log in zip(cfgs, logs):
        phase = d_contact_phase(log)
        s = summarize(log, phase)
        eb = (log["p"] - log["pref"])[phase]
        inplane = float(np.sqrt(np.mean(eb[:, 0] ** 2 + eb[:, 2] ** 2)))
        full = summarize(log)  # whole force window, ramps and touchdown included
        metrics[cfg.name] = dict(s.as_dict(), body_in_plane=inplane, contact_ratio_with_ramps=full.contact_ratio,
                                 force_with_ramps=full.force)
        checks.append(_check(f"{cfg.name} contact ratio over the dwell", s.contact_ratio, 1.0,
                             s.contact_ratio >= 1.0))
        checks.append(_check(f"{cfg.name} body in-plane RMSE [m]", inplane, 0.01, inplane < 0.01))
        checks.append(_check(f"{cfg.name} force RMSE [N]", s.force, 0.5, s.force < 0.5))
    return checks, metrics


# --- E: nine-point inspection ----------------------------------------------------------

E_POINTS = 9
E_SPACING = 0.05
E_DWELL, E_RAMP = 10.0, 1.0


def build_e(seed: int = 0) -> list:
    contacts = [
        ContactPlanSpec(target=[0.0, -0.2 + i * E_SPACING, 1.5], dwell=E_DWELL, force=5.0, ramp=E_RAMP,
                        approach_distance=0.05, approach_time=1.0)
        for i in range(E_POINTS)
    ]
    durations = [2.0] + [0.5] * (E_POINTS - 1) + [2.0]
    duration = sum(durations) + E_POINTS * (E_DWELL + 2.0) + 1.0
    return [ScenarioConfig(
        name="E-inspection", duration=duration, seed=seed, surfaces=[WALL],
        impedance=ImpedanceConfig(**IMP_BCEF, m_free=5.0, m_wall=0.5, J_v=5.0), force=FORCE_BCEF,
        observer=ObserverSpec(1.0, 1.0), camera=CAMERA,
        trajectory=TrajectorySpec(kind="contacts", start_position=[0.8, -0.2, 1.5], start_yaw_deg=FACING_WALL,
                                  durations=durations, contacts=contacts),
    )]


def evaluate_e(cfgs, logs):
    (log,) = logs
    t = log["t"]
    e = force_error(log)
    checks, metrics = [], {"points": []}
    for i, (d0, d1) in enumerate(log.meta.get("dwells", [])):
        hold = (t >= d1 - E_RAMP - 5.0) & (t < d1 - E_RAMP)
        tool = log["tool"][hold]
        contact = float(np.mean(log["in_contact"][(t >= d0 + E_RAMP) & (t < d1 - E_RAMP)] > 0.5))
        rms = float(np.sqrt(np.mean(e[hold] ** 2)))
        metrics["points"].append({"y": float(tool[:, 1].mean()), "force_rmse": rms, "contact_ratio": contact})
        checks.append(_check(f"point {i + 1} contact ratio during the hold", contact, 1.0, contact >= 1.0))
        checks.append(_check(f"point {i + 1} force RMSE over the last 5 s [N]", rms, 0.25, rms < 0.25))
    return checks, metrics


# --- F: undulating surface ---------------------------------------------------------------

F_TRIALS = 42
F_FORCE, F_HOLD, F_RAMP = 10.0, 5.0, 0.5
F_WINDOW, F_TOL = 2.5, 1.0
F_ROTATION = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]  # local z faces +x
F_SPRINGY_K = 300.0
F_SPRINGY_TRIALS = 3
F_PTP = 4.0
# half-resolution camera keeps the 48-trial batch inside the runtime budget (~650 points in contact)
F_CAMERA = CameraSpec(resolution=[86, 112])


def f_surface(k_w: float = 5000.0, c_w: float = 50.0) -> SurfaceSpec:
    return SurfaceSpec(kind="heightfield", origin=[0.0, 0.0, 1.5], rotation=F_ROTATION, size=[1.0, 1.8],
                       amplitude=0.06, n_terms=5, seed=7, k_w=k_w, c_w=c_w)


def f_targets(n: int, seed: int) -> np.ndarray:
    """Random contact targets in front of the inner part of the surface."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(-0.35, 0.35, n)
    z = rng.uniform(1.0, 2.0, n)
    return np.column_stack([np.full(n, 0.3), y, z])


def _f_trial(name, target, surface, seed):
    contact = ContactPlanSpec(target=list(map(float, target)), dwell=F_HOLD + 2.0 * F_RAMP, force=F_FORCE,
                              ramp=F_RAMP, approach_distance=0.1, approach_time=1.5)
    start = [float(target[0]) + 0.55, float(target[1]), float(target[2])]
    return ScenarioConfig(
        name=name, duration=0.5 + 1.5 + F_RAMP + F_HOLD, seed=seed, surfaces=[surface],
        impedance=ImpedanceConfig(**IMP_BCEF, m_free=5.0, m_wall=0.5, J_v=5.0), force=FORCE_BCEF,
        observer=ObserverSpec(1.0, 1.0), camera=F_CAMERA,
        trajectory=TrajectorySpec(kind="contacts", start_position=start, start_yaw_deg=FACING_WALL,
                                  durations=[0.5, 2.0], contacts=[contact]),
    )


def build_f(seed: int = 0, trials: int = F_TRIALS, springy: int = F_SPRINGY_TRIALS) -> list:
    targets = f_targets(trials, seed)
    cfgs = [_f_trial(f"F-stiff-{i:02d}", p, f_surface(), seed * 1000 + i) for i, p in enumerate(targets)]
    soft = f_surface(k_w=F_SPRINGY_K, c_w=1.0)
    cfgs += [_f_trial(f"F-springy-{i:02d}", p, soft, seed * 1000 + i) for i, p in enumerate(targets[:springy])]
    return cfgs


def evaluate_f(cfgs, logs):
    stiff = [(c, g) for c, g in zip(cfgs, logs) if c.name.startswith("F-stiff")]
    soft = [(c, g) for c, g in zip(cfgs, logs) if c.name.startswith("F-springy")]
    trials = []
    for cfg, log in stiff:
        m = final_window(log, F_WINDOW)
        worst = float(np.abs(force_error(log)[m]).max()) if m.any() else float("inf")
        near = np.abs(log["d_t"]) < 0.05
        lateral = tool_lateral_error(log, near & np.isfinite(log["d_t"]))
        trials.append({"name": cfg.name, "max_abs_force_error": worst,
                       "lateral_median": float(np.median(lateral)) if lateral.size else float("nan")})
    ok = sum(t["max_abs_force_error"] < F_TOL for t in trials)
    need = len(trials) - 1
    ptps = []
    for cfg, log in soft:
        m = final_window(log, F_WINDOW)
        ptps.append(peak_to_peak(log["f_push"][m]))
    best = max(ptps) if ptps else float("nan")
    checks = [
        _check(f"stiff trials with |e_f| < {F_TOL:g} N in the final {F_WINDOW:g} s", ok, need, ok >= need,
               f"of {len(trials)}"),
        _check("springy surface: largest force peak-to-peak [N]", best, F_PTP, best > F_PTP),
    ]
    return checks, {"trials": trials, "springy_peak_to_peak": ptps}


PRESETS = {
    "A": Preset("A", "free-flight disturbance: wall vs. stick stiffness", build_a, evaluate_a),
    "B": Preset("B", "force step tracking 5/10/20 N", build_b, evaluate_b),
    "C": Preset("C", "planner-error corner cases", build_c, evaluate_c),
    "D": Preset("D", "push-and-slide with friction", build_d, evaluate_d),
    "E": Preset("E", "nine-point contact inspection", build_e, evaluate_e),
    "F": Preset("F", "undulating surface, 42 seeded contacts", build_f, evaluate_f),
}


def get_preset(key: str) -> Preset:
    try:
        return PRESETS[key.upper()]
    except KeyError:
        raise KeyError(f"unknown preset {key!r}; choose one of {', '.join(PRESETS)}") from None


def run_preset(key: str, seed: int = 0, jobs: int = 1, transform=None) -> PresetResult:
    """Build, run and evaluate a preset.  ``transform`` may rewrite each config (e.g. rates)."""
    preset = get_preset(key)
    cfgs = preset.build(seed)
    if transform is not None:
        cfgs = [transform(c) for c in cfgs]
    logs = run_many(cfgs, jobs)
    if any(log.fault for log in logs):
        faults = [_check(f"{c.name} simulation fault", 1, 0, False, log.fault)
                  for c, log in zip(cfgs, logs) if log.fault]
        return PresetResult(preset.key, cfgs, logs, faults, {})
    checks, metrics = preset.evaluate(cfgs, logs)
    return PresetResult(preset.key, cfgs, logs, checks, metrics)


__all__ = ["Check", "Preset", "PresetResult", "PRESETS", "get_preset", "run_preset", "f_surface", "f_targets"]
