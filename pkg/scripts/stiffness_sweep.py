"""Apparent stiffness of the hovering vehicle against a slowly advancing wall.

Sweeps the wall virtual mass and prints the fitted stiffness next to the
design value K * m for each setting.

    python scripts/stiffness_sweep.py --masses 0.25 0.5 1.0 2.0
"""
import argparse
import dataclasses

from aeroforce.harness.metrics import fit_stiffness
from aeroforce.harness.presets import IMP_AD, _a_mask, build_a
from aeroforce.harness.runner import run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--masses", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    base = build_a(args.seed)[0]  # moving-wall scenario
    print(f"{'m_wall':>8} {'k fit':>10} {'sigma':>8} {'K*m':>8} {'rel err':>8}")
    for m in args.masses:
        cfg = dataclasses.replace(base, name=f"sweep-{m:g}", impedance=dataclasses.replace(base.impedance, m_wall=m))
        log = run_scenario(cfg)
        if log.fault:
            print(f"{m:8.3g} fault: {log.fault}")
            continue
        k, s = fit_stiffness(log, "x", _a_mask(log))
        expect = IMP_AD["K_lin"] * m
        print(f"{m:8.3g} {k:10.2f} {s:8.2f} {expect:8.2f} {abs(k - expect) / expect:8.3%}")


if __name__ == "__main__":
    main()
