"""Scenario configuration: plain dataclasses with a TOML round trip and strict key checking."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from ..controller import ForceControlConfig, ImpedanceConfig
from ..dynamics import DEFAULT_R_BT, PlantConfig
from ..estimation import ForceSensorConfig


class ConfigError(ValueError):
    pass


@dataclass
class VehicleSpec:
    mass: float = 4.2
    inertia: list = field(default_factory=lambda: [0.08, 0.08, 0.12])  # diagonal [kg m^2]
    p_com: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    p_com_estimate: list | None = None  # controller belief; defaults to the true offset
    p_BT: list = field(default_factory=lambda: [0.5, 0.0, 0.0])
    R_BT: list = field(default_factory=lambda: DEFAULT_R_BT.tolist())


@dataclass
class SurfaceSpec:
    kind: str = "plane"  # plane | heightfield | mesh
    point: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    normal: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    motion: list = field(default_factory=list)  # [[t, offset], ...] along the normal
    origin: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    rotation: list = field(default_factory=lambda: np.eye(3).tolist())  # local -> world
    size: list = field(default_factory=lambda: [1.0, 1.8])
    amplitude: float = 0.06
    n_terms: int = 5
    seed: int = 0
    vertices: list = field(default_factory=list)
    faces: list = field(default_factory=list)
    k_w: float = 5000.0
    c_w: float = 50.0
    mu: float = 0.3
    visible: bool = True


@dataclass
class WindowSpec:
    start: float = 0.0
    end: float = 1.0
    force: list = field(default_factory=lambda: [0.0, 0.0, 0.0])  # W
    torque: list = field(default_factory=lambda: [0.0, 0.0, 0.0])  # W
    point: list = field(default_factory=lambda: [0.0, 0.0, 0.0])  # B
    ramp: float = 0.0
    at_tool: bool = False


@dataclass
class ContactPlanSpec:
    target: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    dwell: float = 5.0
    force: float = 10.0
    ramp: float = 1.0
    offset: float = 0.0
    approach_distance: float = 0.15
    approach_time: float = 2.0
    steps: list = field(default_factory=list)  # [[time into dwell, magnitude], ...]


@dataclass
class TrajectorySpec:
    kind: str = "hover"  # hover | contacts | slide | csv
    start_position: list = field(default_factory=lambda: [0.0, 0.0, 1.0])
    start_yaw_deg: float = 0.0
    end_position: list | None = None
    end_yaw_deg: float | None = None
    contacts: list[ContactPlanSpec] = field(default_factory=list)
    durations: list = field(default_factory=list)
    surface: int = 0
    path: list = field(default_factory=list)  # slide: tool positions on the surface
    force: float = 0.0
    slide_time: float = 10.0
    ramp: float = 1.0
    approach_time: float = 3.0
    csv: str = ""


@dataclass
class CameraSpec:
    enabled: bool = True
    position: list = field(default_factory=lambda: [0.05, 0.0, -0.45])  # in T
    fov_deg: list = field(default_factory=lambda: [62.0, 45.0])
    resolution: list = field(default_factory=lambda: [172, 224])
    sigma: float = 0.002
    max_range: float = 4.0
    roi_deg: float | None = None
    d_pi: float = 0.1
    z_min: float | None = -0.1  # render only rays that can reach the selection cylinder beyond this depth
    rate: float = 30.0


@dataclass
class ObserverSpec:
    k_lin: float = 1.0
    k_ang: float = 1.0


@dataclass
class RateSpec:
    physics: float = 1000.0
    control: float = 200.0
    trajectory: float = 100.0


@dataclass
class ScenarioConfig:
    name: str = "hover"
    duration: float = 10.0
    seed: int = 0
    initial_offset: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    vehicle: VehicleSpec = field(default_factory=VehicleSpec)
    surfaces: list[SurfaceSpec] = field(default_factory=list)
    disturbances: list[WindowSpec] = field(default_factory=list)
    impedance: ImpedanceConfig = field(default_factory=ImpedanceConfig)
    force: ForceControlConfig = field(default_factory=ForceControlConfig)
    observer: ObserverSpec = field(default_factory=ObserverSpec)
    camera: CameraSpec = field(default_factory=CameraSpec)
    sensor: ForceSensorConfig = field(default_factory=ForceSensorConfig)
    plant: PlantConfig = field(default_factory=PlantConfig)
    rates: RateSpec = field(default_factory=RateSpec)
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)

    def validate(self) -> "ScenarioConfig":
        r = self.rates
        if not r.physics >= r.control >= r.trajectory > 0:
            raise ConfigError("rates must satisfy physics >= control >= trajectory > 0")
        ratio = r.physics / r.control
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("physics rate must be an integer multiple of the control rate")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        for i, s in enumerate(self.surfaces):
            if s.kind not in ("plane", "heightfield", "mesh"):
                raise ConfigError(f"surfaces[{i}].kind: unknown kind {s.kind!r}")
        if self.trajectory.kind not in ("hover", "contacts", "slide", "csv"):
            raise ConfigError(f"trajectory.kind: unknown kind {self.trajectory.kind!r}")
        return self

    def digest(self) -> str:
        blob = json.dumps(to_dict(self), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# --- generic (de)serialization ---------------------------------------------------

def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def to_dict(cfg) -> dict:
    """Nested dict of a config dataclass; ``None`` entries are dropped (TOML has no null)."""
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if dataclasses.is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, list) and v and dataclasses.is_dataclass(v[0]):
            out[f.name] = [to_dict(e) for e in v]
        else:
            out[f.name] = _plain(v)
    return out


def _strip_optional(tp):
    if typing.get_origin(tp) in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _coerce(tp, value, where):
    tp = _strip_optional(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected a table")
        return from_dict(tp, value, where)
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected an array")
        (inner,) = typing.get_args(tp) or (typing.Any,)
        if dataclasses.is_dataclass(inner):
            return [_coerce(inner, v, f"{where}[{i}]") for i, v in enumerate(value)]
        return value
    if tp is list and not isinstance(value, list):
        raise ConfigError(f"{where}: expected an array")
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false")
    if tp is str and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string")
    return value


def from_dict(cls, data: dict, where: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        loc = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s) {', '.join(loc + k for k in unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}" if where else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or cls.__name__}: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    with open(Path(path), "rb") as fh:
        data = tomli.load(fh)
    return from_dict(ScenarioConfig, data).validate()


def dumps_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def save_config(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg))


def replace_rates(cfg: ScenarioConfig, dt_physics: float | None = None, dt_control: float | None = None):
    rates = dataclasses.replace(
        cfg.rates,
        physics=cfg.rates.physics if dt_physics is None else 1.0 / dt_physics,
        control=cfg.rates.control if dt_control is None else 1.0 / dt_control,
    )
    return dataclasses.replace(cfg, rates=rates).validate()
