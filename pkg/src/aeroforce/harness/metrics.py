"""Post-run metrics: tracking RMSE, force error, contact ratio and stiffness fits."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..core import quat_to_matrix


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_std: float
    n: int


def fit_line(x, y) -> LineFit:
    """Ordinary least squares ``y = a x + b`` with the standard error of ``a``."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise MetricsError("x and y must have the same length")
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    n = len(x)
    if n < 3:
        raise MetricsError("need at least three samples for a line fit")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx <= 1e-12 * max(1.0, float(x @ x)) or np.ptp(y) == 0.0:
        raise MetricsError("degenerate sweep: no variation to fit a slope")
    a = float(xc @ (y - y.mean())) / sxx
    b = float(y.mean() - a * x.mean())
    resid = y - (a * x + b)
    s2 = float(resid @ resid) / (n - 2)
    return LineFit(a, b, math.sqrt(s2 / sxx), n)


def _axis(axis) -> int:
    if isinstance(axis, str):
        return "xyz".index(axis)
    return int(axis)


def measured_force_world(log) -> np.ndarray:
    """Filtered sensor reading (reaction on the tool) rotated into W."""
    q = log["q"]
    f = log["ft"]
    return np.stack([quat_to_matrix(qi) @ fi for qi, fi in zip(q, f)]) if len(q) else np.zeros((0, 3))


def fit_stiffness(log, axis=0, mask=None) -> tuple[float, float]:
    """Apparent stiffness along a world axis from a loading sweep.

    Fits the force applied to the tool (the sensor reading, in W) against
    the tool position error it causes.  Returns ``(k, sigma_k)``.
    """
    i = _axis(axis)
    e = (log["tool"] - log["toolref"])[:, i]
    f = measured_force_world(log)[:, i]
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        e, f = e[mask], f[mask]
    fit = fit_line(e, f)
    return fit.slope, fit.slope_std


@dataclass(frozen=True)
class Summary:
    body_x: float
    body_z: float
    tool_x: float
    tool_z: float
    force: float
    contact_ratio: float
    samples: int

    def as_dict(self) -> dict:
        return asdict(self)


def _rmse(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x))) if x.size else float("nan")


def force_phase(log) -> np.ndarray:
    """Samples where a force reference is active."""
    return np.linalg.norm(log["Fref"], axis=1) > 0.0


def summarize(log, mask=None) -> Summary:
    """RMSE of body and tool position along world x and z, force RMSE and contact ratio.

    By default everything is evaluated while a force reference is active
    (the contact phase); a log without one is evaluated over all samples and
    reports NaN for the force metrics.
    """
    if len(log) == 0:
        raise MetricsError("empty log")
    phase = force_phase(log)
    if mask is None:
        mask = phase if phase.any() else np.ones(len(log), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    eb = (log["p"] - log["pref"])[mask]
    et = (log["tool"] - log["toolref"])[mask]
    fmask = mask & phase
    if fmask.any():
        ef = log["f_push"][fmask] - np.linalg.norm(log["Fref"], axis=1)[fmask]
        force, ratio = _rmse(ef), float(np.mean(log["in_contact"][fmask] > 0.5))
    else:
        force = ratio = float("nan")
    return Summary(_rmse(eb[:, 0]), _rmse(eb[:, 2]), _rmse(et[:, 0]), _rmse(et[:, 2]), force, ratio,
                   int(mask.sum()))


def force_error(log) -> np.ndarray:
    """Push-force error along the tool axis (measured minus reference) per sample."""
    return log["f_push"] - np.linalg.norm(log["Fref"], axis=1)


def final_window(log, window: float) -> np.ndarray:
    """Mask of the last ``window`` seconds of every hold at the peak reference magnitude.

    Ramps and lower force levels are excluded.
    """
    t = log["t"]
    F = np.linalg.norm(log["Fref"], axis=1)
    out = np.zeros(len(t), dtype=bool)
    if not len(t):
        return out
    peak = F.max()
    hold = (F > 0.0) & (F >= peak - 1e-9)
    idx = np.flatnonzero(hold)
    if not len(idx):
        return out
    splits = np.flatnonzero(np.diff(idx) > 1) + 1
    for run in np.split(idx, splits):
        t_end = t[run[-1]]
        out[run[t[run] >= t_end - window + 1e-9]] = True
    return out


def tool_lateral_error(log, mask=None) -> np.ndarray:
    """Tool position error perpendicular to the tool z axis, per sample [m]."""
    e = log["tool"] - log["toolref"]
    q = log["qref"]
    # tool z axis in W from the reference attitude; the body x axis for the default mount
    out = np.empty(len(e))
    z_B = np.asarray(log.meta.get("z_T_B", [1.0, 0.0, 0.0]), dtype=float)
    for i, (ei, qi) in enumerate(zip(e, q)):
        z = quat_to_matrix(qi) @ z_B
        out[i] = np.linalg.norm(ei - (ei @ z) * z)
    if mask is not None:
        out = out[np.asarray(mask, dtype=bool)]
    return out


def peak_to_peak(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.ptp(x)) if x.size else float("nan")


__all__ = [
    "MetricsError", "LineFit", "fit_line", "fit_stiffness", "Summary", "summarize", "force_phase",
    "force_error", "final_window", "tool_lateral_error", "peak_to_peak", "measured_force_world",
]
