"""Builders that turn a handful of knobs into a runnable :class:`Scenario` per family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path
from scipy.spatial import cKDTree

from .deploy import (Deployment, Flow, FlowSet, MobilityModel, critical_range, draw_multicast_flows,
                     draw_unicast_flows, place_infrastructure, place_uniform)
from .engine import Scenario, SlotPlan
from .errors import InvalidScenario, RoutingHole
from .interference import PhysicalParams, ProtocolParams
from .routing import (ACCESS, DELIVERY, HORIZONTAL, VERTICAL, HybridRouter, build_cds, build_cells,
                      find_highways, highway_route, multicast_tree, path_route, straight_line_route)
from .scheduling import TwoHopParams, build_cell_tdma
from .seeding import derive_seed

SQRT5 = math.sqrt(5)


def reuse_for_guard(guard: float, reach_cells: float = 1.0) -> int:
    """Smallest ``d`` such that equal-phase cells keep every receiver clear of other transmitters.

    Receivers sit at most ``reach_cells`` cells from their transmitter's cell
    and links are at most ``sqrt(5)`` cell sides long, so the gap
    ``(l - 1 - reach_cells)`` cells must be at least ``(1 + guard) sqrt(5)``.
    """
    need = (1 + guard) * SQRT5 + reach_cells + 1
    l = math.ceil(need - 1e-12)
    l += l % 2
    return max(1, l // 2 - 1)


def tdma_plan(area_side: float, cell_side: float, d: int, dims, label=None) -> tuple:
    sched = build_cell_tdma(area_side, cell_side, d)
    phases = sched.phase_of_cell(*np.meshgrid(np.arange(dims[0]), np.arange(dims[1]), indexing="ij"))
    flat = np.arange(dims[0] * dims[1]).reshape(dims)
    return tuple(SlotPlan(tuple(int(c) for c in flat[phases == p]), label) for p in range(sched.cycle_length))


def _flat_cells(cg) -> np.ndarray:
    c = cg.cell_of_node
    out = c[:, 0] * cg.dims[1] + c[:, 1]
    out[c[:, 0] < 0] = -1
    return out


def grid_count(n: int, cell_scale: float, margin: Optional[float] = None) -> int:
    """Cells per side when the cell side is ``cell_scale`` times the critical range."""
    return max(1, math.ceil(1.0 / (cell_scale * critical_range(n, margin))))


@dataclass(frozen=True)
class RandomNetConfig:
    n: int = 500
    cell_scale: float = 1.75
    guard: float = 0.5
    margin: Optional[float] = None
    window: int = 1
    window_per_hop: float = 0.25  # per-flow window grows with route length
    per_cell: float = 2.0  # network-wide in-flight cap, in packets per cell


def build_random_net(cfg: RandomNetConfig, seed: int) -> Scenario:
    """Random network, straight-line cell routing, spatial TDMA under the protocol model.

    The grid is coarsened one step at a time until every crossed cell holds
    a relay.
    """
    dep = place_uniform(cfg.n, 1.0, derive_seed(seed, 1))
    flows = draw_unicast_flows(dep, derive_seed(seed, 2))
    d = reuse_for_guard(cfg.guard)
    g = grid_count(cfg.n, cfg.cell_scale, cfg.margin)
    while True:
        if g < 2 * (d + 1):
            raise InvalidScenario("network too sparse for a hole-free cell grid")
        cg = build_cells(dep, 1.0 / g)
        try:
            routes = tuple(straight_line_route(f, cg, dep.positions) for f in flows)
            break
        except RoutingHole:
            g -= 1
    c = 1.0 / g
    r = SQRT5 * c
    model = ProtocolParams(r, cfg.guard)
    return Scenario(
        "cell-tdma-straightline", dep, flows, model, routes, _flat_cells(cg),
        tdma_plan(1.0, c, d, cg.dims), window=cfg.window, window_per_hop=cfg.window_per_hop,
        inflight_cap=math.ceil(cfg.per_cell * g * g),
        meta=dict(n=cfg.n, g=g, cell_side=c, r=r, guard=cfg.guard, d=d, M=0, l=0,
                  r_crit=critical_range(cfg.n, cfg.margin)),
    )


@dataclass(frozen=True)
class MulticastConfig:
    n: int = 1000
    l: int = 8
    sessions: int = 0  # 0 picks one session per cell
    cell_scale: float = 1.75
    guard: float = 0.5
    window: int = 1


def build_multicast(cfg: MulticastConfig, seed: int) -> Scenario:
    dep = place_uniform(cfg.n, 1.0, derive_seed(seed, 1))
    d = reuse_for_guard(cfg.guard)
    g = grid_count(cfg.n, cfg.cell_scale)
    while True:
        if g < 2 * (d + 1):
            raise InvalidScenario("network too sparse for a connected dominating set")
        cg = build_cells(dep, 1.0 / g)
        if cg.occupied.all():
            break
        g -= 1
    sessions = cfg.sessions or g * g
    sessions = min(sessions, cfg.n)
    flows = draw_multicast_flows(dep, sessions, cfg.l, derive_seed(seed, 3))
    cds = build_cds(cg)
    routes = tuple(multicast_tree(f, cds, cg) for f in flows)
    c = 1.0 / g
    r = SQRT5 * c
    return Scenario(
        "multicast-cds", dep, flows, ProtocolParams(r, cfg.guard), routes, _flat_cells(cg),
        tdma_plan(1.0, c, d, cg.dims), window=cfg.window,
        meta=dict(n=cfg.n, l=cfg.l, g=g, cell_side=c, r=r, guard=cfg.guard, d=d, M=0, sessions=sessions),
    )


@dataclass(frozen=True)
class HybridConfig:
    n: int = 1000
    M: int = 32
    range_scale: float = 1.0  # r = range_scale / sqrt(M)
    guard: float = 0.5
    window: int = 1


def build_hybrid(cfg: HybridConfig, seed: int) -> Scenario:
    """Ordinary nodes plus a grid of wired infrastructure nodes, range shrinking as ``1/sqrt(M)``.

    Cells have side ``r`` so every link ends in one of the eight surrounding
    cells; the TDMA reuse distance is sized for that reach.
    """
    ordinary = place_uniform(cfg.n, 1.0, derive_seed(seed, 1))
    dep = ordinary.merged(place_infrastructure(cfg.M, 1.0, "grid"))
    flows = draw_unicast_flows(dep, derive_seed(seed, 2))
    r = cfg.range_scale / math.sqrt(cfg.M)
    router = HybridRouter.build(dep, r)
    routes = tuple(router.route(f) for f in flows)
    cg = build_cells(dep, r, adjacency=8)
    # receivers lie within one cell (Chebyshev); need (l - 2) r >= (1 + guard) r
    l = math.ceil(cfg.guard + 3 - 1e-12)
    l += l % 2
    d = max(1, l // 2 - 1)
    return Scenario(
        "hybrid", dep, flows, ProtocolParams(r, cfg.guard), routes, _flat_cells(cg),
        tdma_plan(1.0, r, d, cg.dims), window=cfg.window,
        meta=dict(n=cfg.n, M=cfg.M, l=0, r=r, guard=cfg.guard, d=d, cell_side=r,
                  backbone_routes=sum(1 for rt in routes if rt.transmissions < len(rt.steps))),
    )


@dataclass(frozen=True)
class MobileConfig:
    n: int = 500
    sender_density: float = 0.2
    alpha: float = 4.0
    beta: float = 1.0
    noise: float = 1e-12
    prefill: Optional[float] = None


def build_mobile(cfg: MobileConfig, seed: int) -> Scenario:
    dep = place_uniform(cfg.n, 1.0, derive_seed(seed, 1))
    flows = draw_unicast_flows(dep, derive_seed(seed, 2), permutation=True)
    phys = PhysicalParams(1.0, cfg.noise, 1.0, cfg.beta, cfg.alpha, 0.0, "power-law")
    return Scenario(
        "two-hop-mobile", dep, flows, phys, mobility=MobilityModel("iid-reshuffle"),
        two_hop=TwoHopParams(cfg.sender_density, phys), prefill=cfg.prefill,
        meta=dict(n=cfg.n, M=0, l=0, theta=cfg.sender_density),
    )


@dataclass(frozen=True)
class HighwayConfig:
    n: int = 2500
    cell_side: float = 1.5
    kappa: float = 1.0
    alpha: float = 4.0
    beta: float = 0.1
    noise: float = 1e-9
    window: int = 1
    per_cell: float = 0.05  # network-wide in-flight cap, in packets per cell


def _reuse_for_hop(cell_side: float, hop: float) -> int:
    return max(1, math.ceil(hop / (math.sqrt(2) * cell_side) - 1 - 1e-12))


def build_highway(cfg: HighwayConfig, seed: int) -> Scenario:
    """Unit-density network with percolation highways and a four-phase schedule.

    Each phase has its own TDMA with ``d`` the smallest integer such that
    ``sqrt(2) c (d + 1)`` covers that phase's longest hop; the phases run
    back to back in one super-cycle. If some slab has no crossing the
    slab height factor is increased.
    """
    a = math.sqrt(cfg.n)
    dep = place_uniform(cfg.n, a, derive_seed(seed, 1))
    flows = draw_unicast_flows(dep, derive_seed(seed, 2))
    cg = build_cells(dep, cfg.cell_side)
    kappa = cfg.kappa
    for _ in range(8):
        hw = find_highways(cg, kappa, cfg.n)
        if hw.empty_slabs == 0:
            break
        kappa *= 1.5
    else:
        raise InvalidScenario("no highway system found")
    routes = tuple(highway_route(f, hw) for f in flows)
    pos = dep.positions
    longest = {lab: 0.0 for lab in (ACCESS, HORIZONTAL, VERTICAL, DELIVERY)}
    for rt in routes:
        for s in rt.steps:
            longest[s.label] = max(longest[s.label], float(np.hypot(*(pos[s.tx] - pos[s.receivers[0]]))))
    plan = []
    ds = {}
    for lab in (ACCESS, HORIZONTAL, VERTICAL, DELIVERY):
        d = _reuse_for_hop(cfg.cell_side, max(longest[lab], cfg.cell_side))
        while 2 * (d + 1) * cfg.cell_side > a:
            d -= 1
        ds[lab] = d
        plan.extend(tdma_plan(a, cfg.cell_side, d, cg.dims, lab))
    phys = PhysicalParams(1.0, cfg.noise, 1.0, cfg.beta, cfg.alpha, 0.0, "power-law")
    return Scenario(
        "highway-4phase", dep, flows, phys, routes, _flat_cells(cg), tuple(plan), window=cfg.window,
        inflight_cap=math.ceil(cfg.per_cell * cg.dims[0] * cg.dims[1]),
        meta=dict(n=cfg.n, M=0, l=0, cell_side=cfg.cell_side, kappa=kappa, slabs=hw.slab_count,
                  d_per_phase={str(k): v for k, v in ds.items()},
                  longest_hop={str(k): v for k, v in longest.items()},
                  mean_crossings=float(np.mean(hw.crossings_per_slab))),
    )


def build_greedy(positions, pairs: Sequence, r: float, guard: float = 1.0, area_side: Optional[float] = None,
                 injection: str = "saturated", rate: float = 0.0, window: int = 1) -> Scenario:
    """Arbitrary small network: shortest-hop routes in the range-``r`` disk graph, greedy scheduling."""
    pos = np.asarray(positions, dtype=float)
    side = area_side if area_side is not None else max(1.0, float(pos.max()))
    dep = Deployment(side, pos, np.zeros(len(pos), dtype=np.int8))
    flows = FlowSet(tuple(Flow(i, int(s), (int(d),)) for i, (s, d) in enumerate(pairs)))
    flows.validate(dep)
    e = cKDTree(pos).query_pairs(r * (1 + 1e-9), output_type="ndarray")
    graph = csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(len(pos), len(pos)))
    dist, pred = shortest_path(graph, directed=False, unweighted=True, return_predecessors=True)
    routes = []
    for f in flows:
        s, d = f.source, f.destinations[0]
        if not np.isfinite(dist[s, d]):
            raise RoutingHole(f"flow {f.flow_id} has no path")
        hops = [d]
        while hops[-1] != s:
            hops.append(int(pred[s, hops[-1]]))
        routes.append(path_route(f.flow_id, hops[::-1]))
    return Scenario("greedy", dep, flows, ProtocolParams(r, guard), tuple(routes), None, (),
                    injection=injection, rate=rate, window=window,
                    meta=dict(n=len(pos), M=0, l=0, r=r, guard=guard))


BUILDERS = {
    "cell-tdma-straightline": (RandomNetConfig, build_random_net),
    "multicast-cds": (MulticastConfig, build_multicast),
    "hybrid": (HybridConfig, build_hybrid),
    "two-hop-mobile": (MobileConfig, build_mobile),
    "highway-4phase": (HighwayConfig, build_highway),
}


def build(family: str, seed: int, **knobs) -> Scenario:
    if family not in BUILDERS:
        raise InvalidScenario(f"unknown family {family!r}; choose from {sorted(BUILDERS)}")
    cfg_cls, fn = BUILDERS[family]
    return fn(cfg_cls(**knobs), seed)


def horizon(family: str, n: int) -> int:
    """Slot count per run: longer for static families whose routes grow with n."""
    if family == "two-hop-mobile":
        return 10_000
    return int(max(20_000, math.ceil(50 * math.sqrt(n * math.log(n)))))
