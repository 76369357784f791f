"""Run every preset (or a chosen subset) and print the checks with wall times.

    python scripts/run_presets.py            # A-F
    python scripts/run_presets.py B D --out results
"""
import argparse
import time
from pathlib import Path

from aeroforce.harness.presets import PRESETS, run_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("keys", nargs="*", default=sorted(PRESETS))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()
    failed = []
    for key in args.keys:
        t0 = time.perf_counter()
        res = run_preset(key.upper(), seed=args.seed, jobs=args.jobs)
        print(f"preset {res.key}: {'PASS' if res.passed else 'FAIL'} ({time.perf_counter() - t0:.1f} s)")
        for c in res.checks:
            print("  " + c.line())
        if args.out:
            for cfg, log in zip(res.configs, res.logs):
                log.write(args.out / f"preset_{res.key}" / f"{cfg.name}.csv")
        if not res.passed:
            failed.append(res.key)
    print("failed presets: " + (", ".join(failed) if failed else "none"))


if __name__ == "__main__":
    main()
