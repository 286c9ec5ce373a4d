"""Command-line front end: ``capnet run | sweep | bounds | check``.

Exit codes: 0 success, 1 scenario error (or a failed check), 2 config error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .capacity import BoundReport
from .config import RunConfig, parse_config
from .engine import measure, run, summary_json
from .errors import CapnetError, ConfigError, InvalidInput
from .experiments import TARGETS, resolve_jobs, scaling_check, sweep, write_table
from .interference import ProtocolParams
from .scenarios import build, horizon

EXIT_OK, EXIT_SCENARIO, EXIT_CONFIG = 0, 1, 2


def _bounds_for(sc) -> dict:
    if not isinstance(sc.model, ProtocolParams):
        return {}
    rep = BoundReport.compute(sc.deployment.n_ordinary, sc.model.range, sc.model.guard, sc.W,
                              int(sc.meta.get("M", 0)), sc.deployment.area_side ** 2)
    return rep.to_dict()


def cmd_run(cfg: RunConfig, out: Path, fmt: str = "json") -> int:
    sc = build(cfg.family, cfg.seed, **cfg.knobs)
    n = int(sc.meta.get("n", sc.n))
    T = cfg.T or horizon(cfg.family, n)
    trace = run(sc, T, cfg.seed)
    metrics = measure(trace, W=sc.W)
    out.mkdir(parents=True, exist_ok=True)
    text = summary_json(trace, metrics, _bounds_for(sc), extra={"seed": cfg.seed, "config": cfg.knobs})
    (out / "summary.json").write_text(text)
    (out / "trace.csv").write_text(trace.to_csv())
    if fmt == "json":
        sys.stdout.write(text)
    else:
        print(",".join(f"{k}" for k in metrics.to_dict()))
        print(",".join(repr(v) for v in metrics.to_dict().values()))
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path, jobs: int, fmt: str = "json") -> int:
    spec = cfg.sweep_spec()
    table = sweep(spec, jobs)
    out.mkdir(parents=True, exist_ok=True)
    write_table(table, out / "table.csv")
    failed = [r for r in table if r["error"]]
    for r in failed:
        print(f"warning: {r['param_name']}={r['param_value']} seed {r['seed']}: {r['error']}", file=sys.stderr)
    if cfg.family in TARGETS:
        v = scaling_check(cfg.family, table)
        report = v.to_json()
    else:
        report = json.dumps({"family": cfg.family, "verdict": "no scaling target"}, indent=2) + "\n"
    (out / "fit.json").write_text(report)
    if fmt == "json":
        sys.stdout.write(report)
    else:
        sys.stdout.write((out / "table.csv").read_text())
    return EXIT_OK


def cmd_bounds(args) -> int:
    if args.r is None:
        print("error: bounds needs --r (transmission range)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rep = BoundReport.compute(args.n, args.r, args.guard, args.W, args.M, args.area, args.regime)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_check(jobs: int, only=None) -> int:
    from .acceptance import run_all

    results = run_all(jobs, only)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_SCENARIO


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="capnet", description="Wireless multi-hop capacity simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="key = value config file")
            sp.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
            sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="worker processes (default: $CAPNET_JOBS or 1)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    common(sub.add_parser("run", help="simulate one scenario"))
    common(sub.add_parser("sweep", help="sweep one parameter and fit the scaling exponent"))
    b = sub.add_parser("bounds", help="closed-form bounds as JSON")
    b.add_argument("--r", type=float, help="transmission range")
    b.add_argument("--n", type=int, default=1000)
    b.add_argument("--guard", type=float, default=None)
    b.add_argument("--W", type=float, default=1.0)
    b.add_argument("--M", type=int, default=0)
    b.add_argument("--area", type=float, default=1.0)
    b.add_argument("--regime", choices=("fixed-range", "shrunk-range"), default="fixed-range")
    c = sub.add_parser("check", help="run the acceptance criteria")
    common(c, config=False)
    c.add_argument("--only", type=int, nargs="*", help="criterion numbers to run")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bounds":
        return cmd_bounds(args)
    jobs = resolve_jobs(args.jobs)
    if args.command == "check":
        return cmd_check(jobs, args.only)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out or os.path.join("capnet-out", cfg.family))
    try:
        if args.command == "run":
            return cmd_run(cfg, out, args.format)
        return cmd_sweep(cfg, out, jobs, args.format)
    except CapnetError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
