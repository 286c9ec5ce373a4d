"""Parameter sweeps, log-log fits and scaling verdicts."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import CapnetError, FitUndefined, InvalidScenario
from .engine import measure, run
from .scenarios import BUILDERS, build, horizon
from .seeding import derive_seed

COLUMNS = ("family", "param_name", "param_value", "seed", "n", "M", "l", "T", "W", "Y", "k", "eta",
           "lambda_mean", "lambda_min", "lambda_max", "residual", "stable", "error")
SWEPT = ("n", "l", "M")


@dataclass(frozen=True)
class SweepSpec:
    """A family, fixed builder knobs, one swept parameter and its values.

    ``T`` overrides the per-family horizon rule when set.
    """

    family: str
    param: str
    values: tuple
    reps: int = 3
    base_seed: int = 0
    knobs: dict = field(default_factory=dict)
    T: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(self.values))
        if self.family not in BUILDERS:
            raise InvalidScenario(f"unknown family {self.family!r}")
        if self.param not in SWEPT:
            raise InvalidScenario(f"swept parameter must be one of {SWEPT}, got {self.param!r}")
        if len(set(self.values)) < 3:
            raise InvalidScenario("a sweep needs at least 3 distinct values")
        if self.reps < 3:
            raise InvalidScenario("a sweep needs at least 3 repetitions per value")
        if self.param in self.knobs:
            raise InvalidScenario(f"{self.param!r} is both swept and fixed")

    def seed_for(self, value_index: int, rep: int) -> int:
        # counter-based: distinct (index, rep) pairs give distinct streams
        return derive_seed(self.base_seed, 0x5357, value_index, rep)

    def points(self):
        for i, v in enumerate(self.values):
            for rep in range(self.reps):
                yield self.family, {**self.knobs, self.param: v}, self.param, v, self.seed_for(i, rep), self.T


def run_point(family: str, knobs: dict, param: str, value, seed: int, T: Optional[int] = None) -> dict:
    """Build, run and measure one scenario; errors end up in the row, not raised."""
    row = dict.fromkeys(COLUMNS, "")
    row.update(family=family, param_name=param, param_value=value, seed=seed)
    try:
        sc = build(family, seed, **knobs)
        n = int(sc.meta.get("n", sc.n))
        T = T or horizon(family, n)
        m = measure(run(sc, T, seed), W=sc.W)
    except CapnetError as exc:
        row.update(stable=False, error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(n=n, M=sc.meta.get("M", 0), l=sc.meta.get("l", 0), T=T, W=m.W, Y=m.Y, k=m.k, eta=m.eta,
               lambda_mean=m.lambda_mean, lambda_min=m.lambda_min, lambda_max=m.lambda_max,
               residual=m.residual, stable=m.stable)
    return row


def _run_args(args):
    return run_point(*args)


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is None:
        jobs = int(os.environ.get("CAPNET_JOBS", "1") or 1)
    return max(1, jobs)


def sweep(spec: SweepSpec, jobs: Optional[int] = None) -> list:
    """One row per (value, repetition), in sweep order regardless of completion order."""
    args = list(spec.points())
    jobs = resolve_jobs(jobs)
    if jobs == 1:
        return [_run_args(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_args, args))


def write_table(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt(r.get(c, "")) for c in COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_table(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for c in ("Y", "k", "eta", "lambda_mean", "lambda_min", "lambda_max", "residual", "W", "param_value"):
            if r.get(c, "") != "":
                r[c] = float(r[c])
        for c in ("seed", "n", "M", "l", "T"):
            if r.get(c, "") != "":
                r[c] = int(r[c])
        r["stable"] = r.get("stable") in ("True", True)
    return rows


@dataclass
class FitResult:
    slope: float
    intercept: float
    stderr: float
    r2: float
    x: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    excluded: int = 0

    def to_dict(self) -> dict:
        return dict(slope=self.slope, intercept=self.intercept, stderr=self.stderr, r2=self.r2,
                    x=self.x.tolist(), y_mean=self.y_mean.tolist(), y_std=self.y_std.tolist(),
                    excluded=self.excluded)


def loglog_slope(table: Sequence[dict], x_column: str, y_column: str,
                 x_map: Optional[Callable[[float], float]] = None) -> FitResult:
    """OLS of log(mean y) on log x over the distinct x values.

    Rows that errored or were judged unstable are left out (and counted in
    ``excluded``); nonpositive values are left out with a warning.
    """
    groups = {}
    excluded = 0
    for r in table:
        if r.get("error") or r.get("stable") is False:
            excluded += 1
            continue
        x, y = float(r[x_column]), float(r[y_column])
        if x_map is not None:
            x = x_map(x)
        if not (x > 0 and y > 0):
            warnings.warn(f"nonpositive value dropped from fit: {x_column}={x}, {y_column}={y}")
            excluded += 1
            continue
        groups.setdefault(x, []).append(y)
    if len(groups) < 3:
        raise FitUndefined(f"only {len(groups)} usable points; a fit needs 3")
    xs = np.array(sorted(groups))
    ys = np.array([np.mean(groups[x]) for x in xs])
    sd = np.array([np.std(groups[x]) for x in xs])
    fit = stats.linregress(np.log(xs), np.log(ys))
    return FitResult(float(fit.slope), float(fit.intercept), float(fit.stderr), float(fit.rvalue**2),
                     xs, ys, sd, excluded)


def random_net_abscissa(n: float) -> float:
    return math.sqrt(n * math.log(n))


@dataclass(frozen=True)
class ScalingTarget:
    x_column: str
    y_column: str
    slope: float
    tolerance: float
    min_r2: Optional[float] = None
    x_map: Optional[Callable] = None


TARGETS = {
    "cell-tdma-straightline": ScalingTarget("n", "lambda_mean", -1.0, 0.15, 0.95, random_net_abscissa),
    "two-hop-mobile": ScalingTarget("n", "lambda_mean", 0.0, 0.15),
    "multicast-cds": ScalingTarget("l", "eta", -0.5, 0.15),
    "hybrid": ScalingTarget("M", "eta", 1.0, 0.2),
}


@dataclass
class ScalingVerdict:
    family: str
    fit: FitResult
    target: float
    tolerance: float
    min_r2: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return dict(family=self.family, slope=self.fit.slope, stderr=self.fit.stderr, r2=self.fit.r2,
                    target=self.target, tolerance=self.tolerance,
                    verdict="pass" if self.passed else "fail")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def scaling_check(family: str, table: Sequence[dict]) -> ScalingVerdict:
    """Compare the fitted exponent with the family's target; never re-runs anything."""
    if family not in TARGETS:
        raise InvalidScenario(f"no scaling target for {family!r}; known: {sorted(TARGETS)}")
    t = TARGETS[family]
    rows = [r for r in table if r.get("family", family) == family]
    fit = loglog_slope(rows, t.x_column, t.y_column, t.x_map)
    ok = abs(fit.slope - t.slope) <= t.tolerance
    if t.min_r2 is not None:
        ok = ok and fit.r2 >= t.min_r2
    return ScalingVerdict(family, fit, t.slope, t.tolerance, t.min_r2, bool(ok))
