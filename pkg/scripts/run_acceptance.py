"""Run the acceptance criteria and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py --jobs 4 --only 1 2 9
"""

import argparse
import sys

from capnet.acceptance import run_all
from capnet.experiments import resolve_jobs


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $CAPNET_JOBS or 1)")
    p.add_argument("--only", type=int, nargs="*", help="criterion numbers")
    args = p.parse_args()
    results = run_all(resolve_jobs(args.jobs), args.only)
    print(f"{sum(r.passed for r in results)}/{len(results)} criteria passed")
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
