"""Run the four scaling sweeps and write a table and a fit per family.

    python3 scripts/scaling_sweeps.py --out sweeps --jobs 4 --reps 3
"""

import argparse
from pathlib import Path

from capnet.experiments import SweepSpec, resolve_jobs, scaling_check, sweep, write_table

SWEEPS = {
    "cell-tdma-straightline": ("n", (250, 500, 1000, 2000, 4000), {}),
    "two-hop-mobile": ("n", (250, 500, 1000, 2000), {}),
    "multicast-cds": ("l", (4, 8, 16, 32, 64), {"n": 4000}),
    "hybrid": ("M", (16, 32, 64, 128), {"n": 2000}),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="sweeps")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", choices=sorted(SWEEPS), nargs="*")
    args = p.parse_args()
    for family in args.family or SWEEPS:
        param, values, knobs = SWEEPS[family]
        spec = SweepSpec(family, param, values, args.reps, args.seed, knobs)
        table = sweep(spec, resolve_jobs(args.jobs))
        out = Path(args.out) / family
        out.mkdir(parents=True, exist_ok=True)
        write_table(table, out / "table.csv")
        verdict = scaling_check(family, table)
        (out / "fit.json").write_text(verdict.to_json())
        f = verdict.fit
        print(f"{family}: slope {f.slope:.3f} +/- {f.stderr:.3f}, R^2 {f.r2:.3f}, "
              f"target {verdict.target} +/- {verdict.tolerance}: {'pass' if verdict.passed else 'fail'}")


if __name__ == "__main__":
    main()
