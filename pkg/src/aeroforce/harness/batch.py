"""Fan-out of independent scenario runs and per-trial / aggregate statistics."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ScenarioConfig
from .metrics import summarize
from .runner import RunLog, run_scenario


def run_many(configs, jobs: int = 1) -> list[RunLog]:
    """Run scenarios in order.  ``jobs > 1`` uses worker processes; results keep input order."""
    configs = list(configs)
    if jobs <= 1 or len(configs) <= 1:
        return [run_scenario(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_scenario, configs))


def seeded(cfg: ScenarioConfig, seeds) -> list[ScenarioConfig]:
    return [dataclasses.replace(cfg, seed=int(s), name=f"{cfg.name}-s{int(s)}") for s in seeds]


@dataclass(frozen=True)
class Aggregate:
    mean: float
    std: float
    minimum: float
    median: float
    maximum: float
    n: int


def aggregate(values) -> Aggregate:
    v = np.asarray([x for x in values if x is not None and math.isfinite(x)], dtype=float)
    if not v.size:
        nan = float("nan")
        return Aggregate(nan, nan, nan, nan, nan, 0)
    return Aggregate(float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0, float(v.min()),
                     float(np.median(v)), float(v.max()), int(v.size))


def trial_table(logs) -> list[dict]:
    """One summary row per run: name, seed, fault flag and the summary metrics."""
    rows = []
    for log in logs:
        row = {"name": log.meta.get("name", ""), "seed": log.meta.get("seed"), "fault": log.fault or ""}
        if len(log):
            row.update(summarize(log).as_dict())
        rows.append(row)
    return rows


def aggregate_table(rows) -> dict:
    keys = [k for k in ("body_x", "body_z", "tool_x", "tool_z", "force", "contact_ratio") if rows and k in rows[0]]
    return {k: dataclasses.asdict(aggregate(r.get(k) for r in rows)) for k in keys}


__all__ = ["run_many", "seeded", "Aggregate", "aggregate", "trial_table", "aggregate_table"]
