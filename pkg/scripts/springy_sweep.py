"""Search for a sustained force oscillation on the springy undulating surface.

Runs one stiff and one springy trial of preset F for each value of command
transport delay or first-order actuator lag and prints the force
peak-to-peak over the final window of the hold.

    python scripts/springy_sweep.py --delay 0 0.04 0.08 0.09
    python scripts/springy_sweep.py --lag 0.02 0.05
"""
import argparse
import dataclasses

import numpy as np

from aeroforce.harness.metrics import final_window, force_error, peak_to_peak
from aeroforce.harness.presets import F_SPRINGY_K, F_TRIALS, F_WINDOW, _f_trial, f_surface, f_targets
from aeroforce.harness.runner import run_scenario


def trial_pair(index, seed):
    target = f_targets(F_TRIALS, seed)[index]  # same draw as the preset
    stiff = _f_trial(f"stiff-{index:02d}", target, f_surface(), seed * 1000 + index)
    soft = _f_trial(f"springy-{index:02d}", target, f_surface(k_w=F_SPRINGY_K, c_w=1.0), seed * 1000 + index)
    return stiff, soft


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    group = ap.add_mutually_exclusive_group()
    group.add_argument("--delay", type=float, nargs="+", help="command transport delays [s]")
    group.add_argument("--lag", type=float, nargs="+", help="actuator time constants [s]")
    ap.add_argument("--trial", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    field, values = ("actuator_lag", args.lag) if args.lag else ("command_delay", args.delay or [0.0, 0.04, 0.08])
    for value in values:
        for cfg in trial_pair(args.trial, args.seed):
            cfg = dataclasses.replace(cfg, plant=dataclasses.replace(cfg.plant, **{field: value}))
            log = run_scenario(cfg)
            m = final_window(log, F_WINDOW)
            worst = float(np.abs(force_error(log)[m]).max()) if m.any() else float("nan")
            ptp = peak_to_peak(log["f_push"][m])
            print(f"{cfg.name:12s} {field}={value:<6g} max|e_f|={worst:7.3f} N  p-p={ptp:7.3f} N"
                  + (f"  fault: {log.fault}" if log.fault else ""))


if __name__ == "__main__":
    main()
