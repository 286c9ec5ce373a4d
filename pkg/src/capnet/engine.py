"""Slotted simulation and the accounting behind eta = Y W / k.

Every slot the scheduler picks transmitters, each transmission moves one
packet copy one step along its route, and the trace records how many links
carried a packet (``Y_t``), how many packets are still undelivered
(``q_t``) and the hop count of every delivery.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, deque
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .capacity import identity_residual
from .deploy import Deployment, FlowSet, MobilityModel
from .errors import InfeasibleSchedule, InvalidScenario, MetricsUndefined
from .interference import Model, PhysicalParams, ProtocolParams, transmitter_ok
from .routing import BACKBONE
from .scheduling import TwoHopParams, two_hop_pairs
from .seeding import rng_for

TRACE_VERSION = 1
FAMILIES = ("cell-tdma-straightline", "highway-4phase", "two-hop-mobile", "multicast-cds", "hybrid", "greedy")
GOLDEN_PREFILL = (3 - math.sqrt(5)) / 2


@dataclass(frozen=True)
class SlotPlan:
    """One slot of a cyclic schedule: the cells allowed to fire and the step label they serve."""

    cells: tuple
    label: Optional[int] = None


@dataclass(eq=False)
class Scenario:
    family: str
    deployment: Deployment
    flows: FlowSet
    model: Model
    routes: tuple = ()
    cell_of_node: Optional[np.ndarray] = None  # flat cell index per node, for cell schedules
    plan: tuple = ()  # SlotPlan cycle; empty means the greedy packer
    mobility: MobilityModel = field(default_factory=MobilityModel)
    two_hop: Optional[TwoHopParams] = None
    W: float = 1.0
    injection: str = "saturated"
    rate: float = 0.0
    window: int = 1
    window_per_hop: float = 0.0  # >0: per-flow window of ceil(window_per_hop * hops) packets
    inflight_cap: int = 0  # >0: network-wide limit on undelivered packets (saturated mode)
    warmup_fraction: float = 0.2
    check_feasibility: bool = True
    prefill: Optional[float] = None  # two-hop relay pre-load; None picks the stationary value
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidScenario(f"unknown scheduler family {self.family!r}")
        if not self.W > 0:
            raise InvalidScenario("link rate W must be positive")
        if self.injection not in ("saturated", "fixed-rate"):
            raise InvalidScenario(f"unknown injection mode {self.injection!r}")
        if self.injection == "fixed-rate" and not 0 <= self.rate <= 1:
            raise InvalidScenario("fixed injection rate must lie in [0, 1] packets per slot")
        mobile = self.mobility.kind != "static"
        if mobile != (self.family == "two-hop-mobile"):
            raise InvalidScenario("mobile deployments require the two-hop family and vice versa")
        if self.family == "two-hop-mobile":
            if self.two_hop is None:
                raise InvalidScenario("two-hop family needs TwoHopParams")
        elif len(self.routes) != len(self.flows):
            raise InvalidScenario("one route per flow is required")
        if self.window < 1:
            raise InvalidScenario("window must be >= 1")
        if self.window_per_hop < 0 or self.inflight_cap < 0:
            raise InvalidScenario("flow-control limits must be nonnegative")

    @property
    def n(self) -> int:
        return self.deployment.n

    def with_injection(self, injection: str, rate: float = 0.0) -> "Scenario":
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        kw.update(injection=injection, rate=rate)
        return Scenario(**kw)


@dataclass(eq=False)
class RunTrace:
    family: str
    T: int
    warmup: int
    n: int
    n_flows: int
    Y_t: np.ndarray
    q_t: np.ndarray
    delivered_slot: np.ndarray
    delivered_flow: np.ndarray
    delivered_h: np.ndarray
    partial_start: int  # radio work already spent on packets alive before slot 0
    partial_end: int  # radio work spent on packets still undelivered after the last slot
    partial_at_warmup: int
    pruned_links: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def delivered_per_flow(self) -> np.ndarray:
        return np.bincount(self.delivered_flow, minlength=self.n_flows)

    @property
    def hop_histogram(self) -> dict:
        return dict(sorted(Counter(self.delivered_h.tolist()).items()))

    def conservation_gap(self) -> int:
        """``sum Y_t - (sum h + partial_end - partial_start)``; zero on a correct run."""
        return int(self.Y_t.sum() - (self.delivered_h.sum() + self.partial_end - self.partial_start))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "Y_t", "q_t"])
        for t, (y, q) in enumerate(zip(self.Y_t.tolist(), self.q_t.tolist())):
            w.writerow([t, y, q])
        return buf.getvalue()


@dataclass
class Metrics:
    eta: float
    lambda_min: float
    lambda_mean: float
    lambda_max: float
    Y: float
    k: float
    W: float
    residual: float
    stable: bool
    q_slope: float
    delivered: int
    window_slots: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Metrics":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    slope: float
    threshold: float


# ---------------------------------------------------------------- static routes

class _StaticSim:
    """Packet-level simulator for families with fixed per-flow routes."""

    def __init__(self, sc: Scenario, seed: int):
        self.sc = sc
        self.pos = sc.deployment.positions
        self.routes = sc.routes
        self.n_radio = [r.transmissions for r in sc.routes]
        self.step_tx = [[s.tx for s in r.steps] for r in sc.routes]
        self.step_label = [[s.label for s in r.steps] for r in sc.routes]
        self.step_children = [[s.children for s in r.steps] for r in sc.routes]
        self.step_recv = [[s.receivers for s in r.steps] for r in sc.routes]
        self.labelled = any(p.label is not None for p in sc.plan)
        self.queues = {}  # (node, label) -> deque of (pid, step)
        self.pkt_flow = []
        self.pkt_left = []
        self.pkt_done = []
        self.inflight = [0] * len(sc.routes)
        if sc.window_per_hop > 0:
            self.window = [max(1, math.ceil(sc.window_per_hop * h)) for h in self.n_radio]
        else:
            self.window = [sc.window] * len(sc.routes)
        self.backlog = [0] * len(sc.routes)  # fixed-rate packets waiting at their source
        self.backlog_pids = [deque() for _ in sc.routes]
        self.partial = 0
        self.alive = 0
        self.pruned = 0
        rng = rng_for(seed, 0x454E)
        self.phase = rng.random(len(sc.routes))
        cell = sc.cell_of_node
        self.cell = cell
        # waiting[(cell, label)] -> set of nodes with queued copies
        self.waiting = {}
        self.sources = {}
        self.rr = {}
        for f, r in enumerate(sc.routes):
            first = r.steps[0]
            key = (self._cell_of(first.tx), self._lab(first.label))
            self.sources.setdefault(key, []).append(f)
        for key in self.sources:
            self.rr[key] = 0
        self.deliv_slot, self.deliv_flow, self.deliv_h = [], [], []

    def _cell_of(self, v):
        return int(self.cell[v]) if self.cell is not None else -1

    def _lab(self, label):
        return label if self.labelled else 0

    # -- queue plumbing
    def _push(self, pid, step):
        f = self.pkt_flow[pid]
        while True:
            lab = self.step_label[f][step]
            if lab != BACKBONE:
                break
            # zero-cost backbone hop: the packet appears at the far end at once
            (step,) = self.step_children[f][step]
        v = self.step_tx[f][step]
        key = (v, self._lab(lab))
        q = self.queues.get(key)
        if q is None:
            q = self.queues[key] = deque()
        q.append((pid, step))
        self.waiting.setdefault((self._cell_of(v), key[1]), set()).add(v)

    def _new_packet(self, f):
        pid = len(self.pkt_flow)
        self.pkt_flow.append(f)
        self.pkt_left.append(self.n_radio[f])
        self.pkt_done.append(0)
        self.alive += 1
        self.inflight[f] += 1
        return pid

    def _may_inject(self, f, sat):
        if not sat:
            return self.backlog[f] > 0
        if self.inflight[f] >= self.window[f]:
            return False
        return not self.sc.inflight_cap or self.alive < self.sc.inflight_cap

    def _fresh(self, key):
        """Round-robin pick of a flow in ``key``'s cell that may inject now."""
        flows = self.sources.get(key)
        if not flows:
            return None
        start = self.rr[key]
        m = len(flows)
        sat = self.sc.injection == "saturated"
        for off in range(m):
            f = flows[(start + off) % m]
            if self._may_inject(f, sat):
                self.rr[key] = (start + off + 1) % m
                return f
        return None

    def _arrivals(self, t):
        lam = self.sc.rate
        for f in range(len(self.routes)):
            a = math.floor(self.phase[f] + (t + 1) * lam) - math.floor(self.phase[f] + t * lam)
            for _ in range(a):
                pid = self._new_packet(f)
                self.backlog[f] += 1
                self.backlog_pids[f].append(pid)

    # -- candidate selection
    def _candidates_cells(self, plan):
        label = plan.label if self.labelled else 0
        picks = []
        for c in plan.cells:
            key = (c, label)
            nodes = self.waiting.get(key)
            if nodes:
                v = max(nodes, key=lambda u: (len(self.queues[(u, label)]), -u))
                picks.append(("relay", v, label))
            else:
                f = self._fresh(key)
                if f is not None:
                    picks.append(("fresh", f, label))
        return picks

    def _candidates_greedy(self):
        picks = []
        seen = set()
        order = sorted(((len(q), v) for (v, lab), q in self.queues.items() if q), key=lambda x: (-x[0], x[1]))
        for _, v in order:
            picks.append(("relay", v, 0))
            seen.add(v)
        for f, r in enumerate(self.routes):
            v = r.steps[0].tx
            if v in seen:
                continue
            sat = self.sc.injection == "saturated"
            if self._may_inject(f, sat):
                picks.append(("fresh", f, 0))
                seen.add(v)
        return picks

    def _resolve(self, pick):
        kind, x, label = pick
        if kind == "relay":
            pid, step = self.queues[(x, label)][0]
            f = self.pkt_flow[pid]
        else:
            f, step = x, 0
        return self.step_tx[f][step], self.step_recv[f][step]

    def _select(self, plan):
        if plan is None:
            picks = self._candidates_greedy()
            chosen, txs, recvs = [], [], []
            for p in picks:
                tx, rx = self._resolve(p)
                if tx in txs:
                    continue
                ok = transmitter_ok(txs + [tx], recvs + [rx], self.pos, self.sc.model)
                if ok.all():
                    chosen.append(p)
                    txs.append(tx)
                    recvs.append(rx)
            return chosen
        picks = self._candidates_cells(plan)
        if not picks:
            return picks
        txs, recvs = zip(*(self._resolve(p) for p in picks))
        txs, recvs = list(txs), list(recvs)
        ok = transmitter_ok(txs, recvs, self.pos, self.sc.model)
        # admission control: drop the lowest-priority failing link until the rest is feasible
        while not ok.all():
            bad = int(np.flatnonzero(~ok)[-1])
            del picks[bad], txs[bad], recvs[bad]
            self.pruned += 1
            ok = transmitter_ok(txs, recvs, self.pos, self.sc.model) if txs else np.zeros(0, bool)
        return picks

    def _commit(self, pick, t, arrivals):
        kind, x, label = pick
        if kind == "relay":
            q = self.queues[(x, label)]
            pid, step = q.popleft()
            if not q:
                self.waiting[(self._cell_of(x), label)].discard(x)
        else:
            f = x
            if self.sc.injection == "saturated":
                pid = self._new_packet(f)
            else:
                pid = self.backlog_pids[f].popleft()
                self.backlog[f] -= 1
            step = 0
        f = self.pkt_flow[pid]
        self.partial += 1
        self.pkt_done[pid] += 1
        self.pkt_left[pid] -= 1
        if self.pkt_left[pid] == 0:
            self.deliv_slot.append(t)
            self.deliv_flow.append(f)
            self.deliv_h.append(self.pkt_done[pid])
            self.partial -= self.pkt_done[pid]
            self.alive -= 1
            self.inflight[f] -= 1
        for ch in self.step_children[f][step]:
            arrivals.append((pid, ch))

    def run(self, T: int):
        sc = self.sc
        plan = sc.plan
        Y = np.zeros(T, dtype=np.int64)
        Q = np.zeros(T, dtype=np.int64)
        warm = int(sc.warmup_fraction * T)
        part_warm = 0
        fixed = sc.injection == "fixed-rate"
        for t in range(T):
            if t == warm:
                part_warm = self.partial
            if fixed:
                self._arrivals(t)
            p = plan[t % len(plan)] if plan else None
            chosen = self._select(p)
            if sc.check_feasibility and chosen:
                txs, recvs = zip(*(self._resolve(c) for c in chosen))
                if not transmitter_ok(list(txs), list(recvs), self.pos, sc.model).all():
                    raise InfeasibleSchedule(f"slot {t}: scheduler emitted an infeasible link set")
            arrivals = []
            for c in chosen:
                self._commit(c, t, arrivals)
            for pid, step in arrivals:
                self._push(pid, step)
            Y[t] = len(chosen)
            Q[t] = self.alive
        return Y, Q, warm, part_warm


def _run_static(sc: Scenario, T: int, seed: int) -> RunTrace:
    sim = _StaticSim(sc, seed)
    Y, Q, warm, part_warm = sim.run(T)
    return RunTrace(
        sc.family, T, warm, sc.n, len(sc.flows), Y, Q,
        np.array(sim.deliv_slot, dtype=np.int64), np.array(sim.deliv_flow, dtype=np.int64),
        np.array(sim.deliv_h, dtype=np.int64), 0, sim.partial, part_warm, sim.pruned, dict(sc.meta),
    )


# ---------------------------------------------------------------- mobile two-hop

def _run_two_hop(sc: Scenario, T: int, seed: int) -> RunTrace:
    """Two-hop relaying over i.i.d. re-placed nodes.

    ``R[v, f]`` marks that node ``v`` holds a relayed packet of the flow
    sourced at ``f`` (at most one per relay and flow). A scheduled pair
    first delivers a relayed packet destined to the receiver, else delivers
    directly if the receiver is the sender's destination, else hands a fresh
    packet to the receiver when it holds none of the sender's flow.
    """
    dep = sc.deployment
    n = dep.n
    dest_of = np.full(n, -1, dtype=np.int64)
    for fl in sc.flows:
        dest_of[fl.source] = fl.destinations[0]
    src_of = np.full(n, -1, dtype=np.int64)
    src_of[dest_of[dest_of >= 0]] = np.flatnonzero(dest_of >= 0)
    if np.any(dest_of < 0) or np.any(src_of < 0):
        raise InvalidScenario("two-hop family needs permutation traffic: one flow from and to every node")
    flow_of_source = np.full(n, -1, dtype=np.int64)
    for fl in sc.flows:
        flow_of_source[fl.source] = fl.flow_id
    rho = GOLDEN_PREFILL if sc.prefill is None else sc.prefill
    rng0 = rng_for(seed, 0x5046)
    R = (rng0.random((n, n)) < rho).astype(np.uint8)
    idx = np.arange(n)
    R[idx, idx] = 0
    R[dest_of, idx] = 0  # a destination never relays for its own flow
    partial = int(R.sum())
    partial_start = partial
    # count of undelivered packets per flow equals relay copies
    Y = np.zeros(T, dtype=np.int64)
    Q = np.zeros(T, dtype=np.int64)
    warm = int(sc.warmup_fraction * T)
    part_warm = 0
    d_slot, d_flow, d_h = [], [], []
    alive = partial
    for t in range(T):
        if t == warm:
            part_warm = partial
        pos = rng_for(seed, 0x4D4F, t).random((n, 2)) * dep.area_side
        tx, rx, keep = two_hop_pairs(pos, sc.two_hop, rng_for(seed, 0x5448, t))
        s, r = tx[keep], rx[keep]
        f_r = src_of[r]
        relay = (R[s, f_r] > 0) & (f_r != s)
        direct = ~relay & (dest_of[s] == r)
        hand = ~relay & ~direct & (R[r, s] == 0)
        # relayed deliveries
        R[s[relay], f_r[relay]] = 0
        R[r[hand], s[hand]] = 1
        nrel, ndir, nhand = int(relay.sum()), int(direct.sum()), int(hand.sum())
        Y[t] = nrel + ndir + nhand
        if nrel:
            d_slot.extend([t] * nrel)
            d_flow.extend(flow_of_source[f_r[relay]].tolist())
            d_h.extend([2] * nrel)
        if ndir:
            d_slot.extend([t] * ndir)
            d_flow.extend(flow_of_source[s[direct]].tolist())
            d_h.extend([1] * ndir)
        partial += nhand - nrel
        alive += nhand - nrel
        Q[t] = alive
    return RunTrace(
        sc.family, T, warm, n, len(sc.flows), Y, Q,
        np.array(d_slot, dtype=np.int64), np.array(d_flow, dtype=np.int64), np.array(d_h, dtype=np.int64),
        partial_start, partial, part_warm, 0, dict(sc.meta),
    )


def run(scenario: Scenario, T: int, seed: int) -> RunTrace:
    """Simulate ``T`` slots; deterministic in ``(scenario, T, seed)``."""
    if T < 1:
        raise InvalidScenario("horizon T must be >= 1")
    if scenario.family == "two-hop-mobile":
        trace = _run_two_hop(scenario, T, seed)
    else:
        trace = _run_static(scenario, T, seed)
    gap = trace.conservation_gap()
    if gap != 0:
        raise AssertionError(f"transmission accounting is off by {gap}")
    return trace


# ---------------------------------------------------------------- metrics

def stability_check(trace: RunTrace, eps_per_node: float = 1e-3) -> StabilityVerdict:
    """Least-squares slope of ``q_t`` over the post-warmup window."""
    q = trace.q_t[trace.warmup:].astype(float)
    thr = eps_per_node * trace.n
    if len(q) < 2:
        return StabilityVerdict(True, 0.0, thr)
    t = np.arange(len(q), dtype=float)
    t -= t.mean()
    slope = float((t * (q - q.mean())).sum() / (t * t).sum())
    return StabilityVerdict(slope <= thr, slope, thr)


def measure(trace: RunTrace, W: float = 1.0, eps_per_node: float = 1e-3) -> Metrics:
    window = trace.T - trace.warmup
    if window <= 0:
        raise MetricsUndefined("empty measurement window")
    inwin = trace.delivered_slot >= trace.warmup
    N = int(inwin.sum())
    if N == 0:
        raise MetricsUndefined("no packets delivered in the measurement window")
    eta = N / window * W
    per_flow = np.bincount(trace.delivered_flow[inwin], minlength=trace.n_flows) / window * W
    Y = float(trace.Y_t[trace.warmup:].mean())
    k = float(trace.delivered_h[inwin].sum()) / N
    st = stability_check(trace, eps_per_node)
    m = Metrics(eta, float(per_flow.min()), float(per_flow.mean()), float(per_flow.max()),
                Y, k, W, 0.0, st.stable, st.slope, N, window)
    m.residual = identity_residual(m)
    return m


def binary_search_throughput(template: Scenario, T: int, seed: int, tol: float = 0.02,
                             lo: float = 0.0, hi: float = 1.0) -> float:
    """Largest per-flow fixed injection rate in ``[lo, hi]`` that keeps queues stable."""
    def stable(rate):
        tr = run(template.with_injection("fixed-rate", rate), T, seed)
        return stability_check(tr).stable

    if not stable(max(lo, 1e-9)):
        raise InvalidScenario("scenario is unstable even at the lowest rate")
    if stable(hi):
        return hi
    while hi - lo > tol * max(lo, tol):
        mid = 0.5 * (lo + hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo


def summary_json(trace: RunTrace, metrics: Metrics, bounds: Optional[dict] = None, extra: Optional[dict] = None) -> str:
    doc = {
        "trace_version": TRACE_VERSION,
        "family": trace.family,
        "T": trace.T,
        "warmup": trace.warmup,
        "n": trace.n,
        "n_flows": trace.n_flows,
        "metrics": metrics.to_dict(),
        "hop_histogram": {str(k): v for k, v in trace.hop_histogram.items()},
        "max_Y_t": int(trace.Y_t.max()) if trace.T else 0,
        "pruned_links": trace.pruned_links,
        "meta": trace.meta,
    }
    if bounds is not None:
        doc["bounds"] = bounds
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)}")


def metrics_from_summary(text: str) -> Metrics:
    return Metrics.from_dict(json.loads(text)["metrics"])
