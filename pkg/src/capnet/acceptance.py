"""End-to-end acceptance criteria, shared by ``capnet check`` and the test suite.

Each criterion function returns a :class:`CriterionResult`; nothing here
raises on a failed criterion.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import math
import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .capacity import gk_lambda_upper, packing_upper_bound
from .deploy import place_uniform
from .engine import measure, run
from .experiments import SweepSpec, run_point, scaling_check, sweep
from .interference import Link, ProtocolParams, feasible_set
from .routing import build_cells, find_highways
from .scenarios import build, horizon
from .scheduling import greedy_feasible_set, max_feasible_set_bruteforce
from .seeding import derive_seed, rng_for

SEEDS = range(5)
IDENTITY_CASES = (
    ("cell-tdma-straightline", dict(n=500)),
    ("highway-4phase", dict(n=2500)),
    ("two-hop-mobile", dict(n=500)),
    ("multicast-cds", dict(n=1000, l=8)),
    ("hybrid", dict(n=1000, M=32)),
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} criterion {self.number}: {self.name}: {self.detail}"


def _timed(number: int, name: str):
    def wrap(fn: Callable[..., tuple]):
        def inner(*args, **kwargs) -> CriterionResult:
            t = time.perf_counter()
            ok, detail = fn(*args, **kwargs)
            return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t)
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


# ---------------------------------------------------------------- 1 and 2

_identity_cache = {}


def identity_runs() -> list:
    """The 25 runs behind criteria 1 and 2, computed once per process."""
    if not _identity_cache:
        rows = []
        for family, knobs in IDENTITY_CASES:
            for seed in SEEDS:
                sc = build(family, seed, **knobs)
                tr = run(sc, horizon(family, knobs["n"]), seed)
                m = measure(tr, W=sc.W)
                bound = None
                if isinstance(sc.model, ProtocolParams):
                    area = sc.deployment.area_side ** 2
                    bound = packing_upper_bound(sc.model.guard, sc.model.range, area)
                rows.append(dict(family=family, seed=seed, residual=m.residual, stable=m.stable,
                                 max_Y=int(tr.Y_t.max()), bound=bound))
        _identity_cache["rows"] = rows
    return _identity_cache["rows"]


@_timed(1, "throughput identity")
def criterion_identity():
    rows = identity_runs()
    bad = [r for r in rows if not (r["stable"] and r["residual"] <= 0.02)]
    worst = {}
    for r in rows:
        worst[r["family"]] = max(worst.get(r["family"], 0.0), r["residual"])
    detail = "max residual " + ", ".join(f"{f}={v:.4f}" for f, v in worst.items())
    if bad:
        detail += f"; {len(bad)} runs unstable or above 0.02"
    return not bad, detail


@_timed(2, "packing bound on concurrent transmissions")
def criterion_packing():
    rows = [r for r in identity_runs() if r["bound"] is not None]
    viol = [r for r in rows if r["max_Y"] > r["bound"]]
    ratio = max(r["max_Y"] / r["bound"] for r in rows)
    return not viol, f"{len(rows)} protocol-model runs, {len(viol)} violations, max Y_t / bound = {ratio:.4f}"


# ---------------------------------------------------------------- 3 to 6

def _scaling(family, param, values, knobs, reps, jobs):
    spec = SweepSpec(family, param, tuple(values), reps, 0, knobs)
    table = sweep(spec, jobs)
    return table, scaling_check(family, table)


@_timed(3, "random-network scaling")
def criterion_random_scaling(jobs: Optional[int] = None):
    _, v = _scaling("cell-tdma-straightline", "n", (250, 500, 1000, 2000, 4000), {}, 5, jobs)
    return v.passed, f"slope {v.fit.slope:.3f} (target -1 +/- 0.15), R^2 {v.fit.r2:.4f}"


@_timed(4, "mobile per-flow rate constant in n")
def criterion_mobile(jobs: Optional[int] = None):
    table, v = _scaling("two-hop-mobile", "n", (250, 500, 1000, 2000), {}, 3, jobs)
    ks = [r["k"] for r in table if not r["error"]]
    k_ok = len(ks) == len(table) and all(1 <= k <= 2 for k in ks)
    return v.passed and k_ok, (f"slope {v.fit.slope:.3f} (target 0 +/- 0.15), "
                               f"k in [{min(ks):.3f}, {max(ks):.3f}]")


@_timed(5, "multicast scaling in group size")
def criterion_multicast(jobs: Optional[int] = None):
    _, v = _scaling("multicast-cds", "l", (4, 8, 16, 32, 64), dict(n=4000), 3, jobs)
    eta = {}
    for l in (1000, 2000):
        eta[l] = np.mean([run_point("multicast-cds", dict(n=4000, l=l), "l", l, derive_seed(0, 0x5341, s))["eta"]
                          for s in range(3)])
    ratio = eta[2000] / eta[1000]
    ok = v.passed and 0.8 <= ratio <= 1.25
    return ok, f"slope {v.fit.slope:.3f} (target -0.5 +/- 0.15), eta(n/2)/eta(n/4) = {ratio:.3f}"


@_timed(6, "hybrid throughput linear in infrastructure count")
def criterion_hybrid(jobs: Optional[int] = None):
    _, v = _scaling("hybrid", "M", (16, 32, 64, 128), dict(n=2000), 3, jobs)
    return v.passed, f"slope {v.fit.slope:.3f} (target 1 +/- 0.2)"


# ---------------------------------------------------------------- 7

def pairwise_protocol_feasible(pos, pairs, r: float, guard: float) -> bool:
    """Protocol-model feasibility written directly from the pairwise conditions."""
    txs = [t for t, _ in pairs]
    if len(set(txs)) != len(txs):
        return False
    for t, x in pairs:
        if x in txs:
            return False
        if math.dist(pos[t], pos[x]) > r * (1 + 1e-9):
            return False
        for u in txs:
            if u != t and math.dist(pos[u], pos[x]) < (1 + guard) * r * (1 - 1e-9):
                return False
    return True


def oracle_instance(seed: int, m: int = 12, nodes: int = 24, r: float = 0.25, guard: float = 0.5):
    """Random candidate links on random points: ``m`` links with distinct transmitters, each within range."""
    rng = rng_for(seed, 0x4F52)
    while True:
        pos = rng.random((nodes, 2))
        txs = rng.permutation(nodes)[:m]
        links = []
        for t in txs:
            d = np.hypot(*(pos - pos[t]).T)
            near = [v for v in np.flatnonzero(d <= r) if v != t]
            if near:
                links.append(Link.between(int(t), int(rng.choice(near)), pos))
        if len(links) == m:
            return pos, links, ProtocolParams(r, guard)


@_timed(7, "greedy packer against exhaustive and pairwise oracles")
def criterion_oracles():
    problems = 0
    gaps = 0
    for s in range(100):
        pos, links, model = oracle_instance(s)
        g = greedy_feasible_set(links, pos, model).active
        if not feasible_set(g, pos, model):
            problems += 1
        used = {l.tx for l in g}
        for l in links:
            if l not in g and l.tx not in used and feasible_set(list(g) + [l], pos, model):
                problems += 1
        best = max_feasible_set_bruteforce(links, pos, model).active
        if len(best) < len(g):
            problems += 1
        gaps += len(best) - len(g)
    pos, links, model = oracle_instance(12345)
    disagree = 0
    for mask in range(1 << len(links)):
        sub = [l for i, l in enumerate(links) if mask >> i & 1]
        ref = pairwise_protocol_feasible(pos, [(l.tx, l.rx) for l in sub], model.range, model.guard)
        disagree += ref != feasible_set(sub, pos, model)
    return problems == 0 and disagree == 0, (
        f"100 instances: {problems} greedy problems, total optimality gap {gaps} links; "
        f"{disagree} disagreements over {1 << len(links)} subsets")


# ---------------------------------------------------------------- 8

def highway_stats(n: int, seeds=range(20), kappa: float = 1.0, cell_side: float = 1.5):
    frac, mean = [], []
    for s in seeds:
        dep = place_uniform(n, math.sqrt(n), derive_seed(s, 0x4857))
        hw = find_highways(build_cells(dep, cell_side), kappa, n)
        frac.append(hw.crossing_fraction)
        mean.append(float(np.mean(hw.crossings_per_slab)))
    return float(np.mean(frac)), float(np.mean(mean))


@_timed(8, "highway crossings exist in every slab")
def criterion_highways():
    ns = (2500, 5000, 10000)
    stats = {n: highway_stats(n) for n in ns}
    frac = stats[10000][0]
    means = [stats[n][1] for n in ns]
    mono = all(b >= a for a, b in zip(means, means[1:]))
    return frac >= 0.99 and mono, (
        f"crossed fraction at n=10000 {frac:.4f} (need 0.99); mean crossings per slab "
        + ", ".join(f"n={n}: {m:.3f}" for n, m in zip(ns, means)))


# ---------------------------------------------------------------- 9 and 10

@_timed(9, "closed-form calculators")
def criterion_calculators():
    p = packing_upper_bound(1.0, 0.1, 1.0)
    g = gk_lambda_upper(1000, 0.0663, 1.0, 1.0)
    return abs(p - 509.30) <= 0.01 and abs(g - 13.90) <= 0.05, f"packing {p:.4f}, per-node ceiling {g:.4f}"


MINIMAL_RUN_CONFIG = """\
[scheduler]
family = cell-tdma-straightline
[deployment]
n = 250
[engine]
T = 3000
[experiment]
seed = 11
"""


@_timed(10, "repeatable run summaries")
def criterion_determinism():
    from .cli import main

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "run.cfg")
        with open(cfg, "w") as fh:
            fh.write(MINIMAL_RUN_CONFIG)
        outs = [os.path.join(tmp, d) for d in ("a", "b")]
        with contextlib.redirect_stdout(io.StringIO()):
            codes = [main(["run", "--config", cfg, "--out", o]) for o in outs]
        same = all(c == 0 for c in codes) and filecmp.cmp(
            os.path.join(outs[0], "summary.json"), os.path.join(outs[1], "summary.json"), shallow=False)
    return same, f"exit codes {codes}, summaries {'identical' if same else 'differ'}"


CRITERIA = (criterion_identity, criterion_packing, criterion_random_scaling, criterion_mobile,
            criterion_multicast, criterion_hybrid, criterion_oracles, criterion_highways,
            criterion_calculators, criterion_determinism)
_TAKES_JOBS = {criterion_random_scaling, criterion_mobile, criterion_multicast, criterion_hybrid}


def run_all(jobs: Optional[int] = None, only=None, echo=print) -> list:
    results = []
    for i, fn in enumerate(CRITERIA, 1):
        if only and i not in only:
            continue
        res = fn(jobs) if fn in _TAKES_JOBS else fn()
        echo(res.line() + f" [{res.seconds:.1f}s]")
        results.append(res)
    return results
