import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from capnet.deploy import Deployment, Flow, draw_multicast_flows, place_grid, place_infrastructure, place_uniform
from capnet.errors import RoutingHole
from capnet.routing import (ACCESS, BACKBONE, DELIVERY, DIRECT, HANDOFF, HORIZONTAL, IDLE, RELAY_DELIVER,
                            VERTICAL, HybridRouter, build_cds, build_cells, disjoint_crossings, find_highways,
                            grid_route, highway_route, isolated_cell_fraction, multicast_tree, path_route,
                            straight_line_route, traverse_cells, two_hop_action)

# fraction of unit cells holding one isolated node (isolation radius 0.25) at unit
# density; exact value from the quadrature below, not from the product formula
ISOLATED_EXACT = 0.35381


def _dep(points, side=1.0):
    pos = np.asarray(points, dtype=float)
    return Deployment(side, pos, np.zeros(len(pos), dtype=np.int8))


def test_build_cells_examples():
    dep = _dep([[0.26, 0.74], [0.99, 0.01], [1.0, 1.0]])
    cg = build_cells(dep, 0.25)
    assert cg.n_cells == 16
    assert tuple(cg.cell_of_node[0]) == (1, 2)
    assert tuple(cg.cell_of_node[2]) == (3, 3)
    assert cg.occupancy.sum() == 3
    assert sorted(cg.neighbors(0, 0)) == [(0, 1), (1, 0)]


def test_cells_nonempty_multicast_sizing():
    n = 4000
    a = math.sqrt(n)
    dep = place_uniform(n, a, 1)
    cg = build_cells(dep, math.sqrt(5 * math.log(n) / n) * a)
    assert cg.occupied.mean() >= 0.99


def test_traverse_cells_horizontal():
    cells = traverse_cells((0.1, 0.1), (0.9, 0.1), 0.2, (5, 5))
    assert cells == [(i, 0) for i in range(5)]


@settings(max_examples=80, deadline=None)
@given(st.tuples(st.floats(0, 1), st.floats(0, 1)), st.tuples(st.floats(0, 1), st.floats(0, 1)),
       st.integers(2, 12))
def test_traverse_cells_connected_and_touch_segment(p0, p1, g):
    c = 1.0 / g
    cells = traverse_cells(p0, p1, c, (g, g))
    assert cells[0] == tuple(min(int(v / c), g - 1) for v in p0)
    assert cells[-1] == tuple(min(int(v / c), g - 1) for v in p1)
    for (a, b), (x, y) in zip(cells, cells[1:]):
        assert abs(a - x) + abs(b - y) == 1
    assert len(set(cells)) == len(cells)
    # every cell is within half a diagonal of the segment
    p0, p1 = np.array(p0), np.array(p1)
    seg = p1 - p0
    for i, j in cells:
        m = (np.array([i, j]) + 0.5) * c
        L2 = np.dot(seg, seg)
        t = 0.0 if L2 == 0 else np.clip(np.dot(m - p0, seg) / L2, 0, 1)
        assert np.hypot(*(p0 + t * seg - m)) <= c * math.sqrt(2) / 2 + 1e-9


def test_straight_line_same_cell_single_hop():
    dep = _dep([[0.1, 0.1], [0.12, 0.15], [0.9, 0.9]])
    cg = build_cells(dep, 0.25)
    r = straight_line_route(Flow(0, 0, (1,)), cg, dep.positions)
    assert r.hops == (0, 1) and r.transmissions == 1


def test_straight_line_route_example_four_hops():
    pts = [[0.1, 0.1], [0.9, 0.1]] + [[0.2 * i + 0.1, 0.11] for i in range(1, 4)]
    dep = _dep(pts)
    cg = build_cells(dep, 0.2)
    r = straight_line_route(Flow(0, 0, (1,)), cg, dep.positions)
    assert r.hops == (0, 2, 3, 4, 1)
    assert r.transmissions == 4


def test_straight_line_hole():
    dep = _dep([[0.1, 0.1], [0.9, 0.1]])
    with pytest.raises(RoutingHole):
        straight_line_route(Flow(0, 0, (1,)), build_cells(dep, 0.2), dep.positions)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_straight_line_hops_within_range(seed):
    dep = place_uniform(600, 1.0, seed)
    g = 8
    cg = build_cells(dep, 1 / g)
    rng = np.random.default_rng(seed)
    s, d = (int(v) for v in rng.choice(600, 2, replace=False))
    try:
        r = straight_line_route(Flow(0, s, (d,)), cg, dep.positions)
    except RoutingHole:
        return
    crossed = traverse_cells(dep.positions[s], dep.positions[d], 1 / g, (g, g))
    assert r.transmissions <= len(crossed)
    hops = dep.positions[list(r.hops)]
    assert np.all(np.hypot(*np.diff(hops, axis=0).T) <= math.sqrt(5) / g + 1e-12)


def test_grid_route_examples():
    dep = place_grid(100, 1.0)
    r = 0.1
    same_row = grid_route(Flow(0, 3, (7,)), dep, r)
    assert same_row.hops == (3, 4, 5, 6, 7)
    assert grid_route(Flow(0, 0, (43,)), dep, r).transmissions == 7


def test_grid_route_mean_hops():
    m = 20
    dep = place_grid(m * m, 1.0)
    rng = np.random.default_rng(0)
    pairs = rng.integers(0, m * m, (4000, 2))
    hops = [grid_route(Flow(0, int(a), (int(b),)), dep, 1 / m).transmissions for a, b in pairs if a != b]
    # mean |dx| + |dy| of two uniform lattice points is 2 (m^2 - 1) / (3 m)
    assert np.mean(hops) == pytest.approx(2 * (m * m - 1) / (3 * m), rel=0.03)


def test_disjoint_crossings_small_cases():
    full = np.ones((7, 4), dtype=bool)
    assert len(disjoint_crossings(full)) == 4
    one_row = np.zeros((7, 4), dtype=bool)
    one_row[:, 2] = True
    paths = disjoint_crossings(one_row)
    assert len(paths) == 1 and paths[0] == [(i, 2) for i in range(7)]
    blocked = np.ones((7, 4), dtype=bool)
    blocked[3, :] = False
    assert disjoint_crossings(blocked) == []


def _nx_crossings(open_cells):
    w, h = open_cells.shape
    g = nx.Graph()
    for i in range(w):
        for j in range(h):
            if open_cells[i, j]:
                g.add_node((i, j))
                for a, b in ((i + 1, j), (i, j + 1)):
                    if a < w and b < h and open_cells[a, b]:
                        g.add_edge((i, j), (a, b))
    g.add_node("s")
    g.add_node("t")
    for j in range(h):
        if open_cells[0, j]:
            g.add_edge("s", (0, j))
        if open_cells[w - 1, j]:
            g.add_edge((w - 1, j), "t")
    if not nx.has_path(g, "s", "t"):
        return 0
    return len(list(nx.node_disjoint_paths(g, "s", "t")))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(1, 6), st.floats(0.4, 0.95), st.integers(0, 10**6))
def test_disjoint_crossings_against_networkx(w, h, p, seed):
    open_cells = np.random.default_rng(seed).random((w, h)) < p
    paths = disjoint_crossings(open_cells)
    assert len(paths) == _nx_crossings(open_cells)
    used = set()
    for path in paths:
        assert path[0][0] == 0 and path[-1][0] == w - 1
        assert all(open_cells[c] for c in path)
        for a, b in zip(path, path[1:]):
            assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1
        assert not used & set(path)
        used |= set(path)


def test_highway_system_and_routes():
    n = 2500
    dep = place_uniform(n, math.sqrt(n), 4)
    cg = build_cells(dep, 1.5)
    hw = find_highways(cg, 3.0, n)
    assert hw.empty_slabs == 0
    for slab in hw.horizontal_paths + hw.vertical_paths:
        cells = [c for p in slab for c in p]
        assert len(cells) == len(set(cells))
    assert set(hw.entry_map) == set(range(n)) == set(hw.exit_map)
    rng = np.random.default_rng(1)
    for _ in range(50):
        s, d = (int(v) for v in rng.choice(n, 2, replace=False))
        r = highway_route(Flow(0, s, (d,)), hw)
        labels = [st.label for st in r.steps]
        assert r.hops[0] == s and r.hops[-1] == d
        assert labels == sorted(labels)
        assert set(labels) <= {ACCESS, HORIZONTAL, VERTICAL, DELIVERY}
        pos = dep.positions[list(r.hops)]
        lengths = np.hypot(*np.diff(pos, axis=0).T)
        # hops along a highway join 4-adjacent cells
        mid = [L for L, lab in zip(lengths, labels) if lab in (HORIZONTAL, VERTICAL)]
        assert all(L <= math.sqrt(5) * 1.5 + 1e-9 for L in mid[1:])


def test_highway_route_minimal_cases():
    # a single full row of nodes: one horizontal and one vertical highway meeting in a corner
    pts = [[0.75 + 1.5 * i, 0.75] for i in range(4)] + [[0.75, 0.75 + 1.5 * j] for j in range(1, 4)]
    dep = _dep(pts, side=6.0)
    cg = build_cells(dep, 1.5)
    hw = find_highways(cg, 100.0, 16)
    r = highway_route(Flow(0, 0, (4,)), hw)
    assert r.transmissions == 1
    r = highway_route(Flow(0, 1, (4,)), hw)
    # node 1 relays its own cell, so the zero-length access hop is dropped
    assert [s.label for s in r.steps] == [HORIZONTAL, VERTICAL]


def test_highway_mean_hops_order_sqrt_n():
    n = 10**4
    dep = place_uniform(n, math.sqrt(n), 2)
    hw = find_highways(build_cells(dep, 1.5), 3.0, n)
    rng = np.random.default_rng(2)
    hops = []
    for _ in range(300):
        s, d = (int(v) for v in rng.choice(n, 2, replace=False))
        hops.append(highway_route(Flow(0, s, (d,)), hw).transmissions)
    root = math.sqrt(n) / 1.5
    assert 0.5 * root <= np.mean(hops) <= 4 * root


def test_cds_examples():
    pts = [[(i + 0.5) / 4, (j + 0.5) / 4] for i in range(4) for j in range(4)]
    dep = _dep(pts + [[0.1, 0.1]])
    cg = build_cells(dep, 0.25)
    cds = build_cds(cg)
    assert len(cds) == 16
    # nodes in adjacent cells are within sqrt(5) cell sides of each other
    r = math.sqrt(5) * 0.25
    for (i, j), v in cds.items():
        for a, b in cg.neighbors(i, j):
            assert np.hypot(*(dep.positions[v] - dep.positions[cds[(a, b)]])) <= r
    with pytest.raises(RoutingHole):
        build_cds(build_cells(_dep([[0.1, 0.1]]), 0.25))


def _mc_setup(n=1500, g=10, seed=0):
    dep = place_uniform(n, 1.0, seed)
    cg = build_cells(dep, 1 / g)
    assert cg.occupied.all()
    return dep, cg, build_cds(cg)


def test_multicast_l2_matches_cell_line():
    dep, cg, cds = _mc_setup()
    f = draw_multicast_flows(dep, 20, 2, 3)
    for flow in f:
        t = multicast_tree(flow, cds, cg)
        s, d = flow.source, flow.destinations[0]
        line = traverse_cells(cg.center(*cg.cell_of_node[s]), cg.center(*cg.cell_of_node[d]), cg.cell_side, cg.dims)
        assert list(t.hops) == line
        assert t.transmissions == max(1, len(line) - 1)


def test_multicast_duplicate_destination_cells():
    dep, cg, cds = _mc_setup()
    cell = tuple(cg.cell_of_node[5])
    same = [int(v) for v in cg.nodes_in(*cell) if v != 0][:2]
    assert len(same) == 2
    one = multicast_tree(Flow(0, 0, (same[0],), "multicast"), cds, cg)
    two = multicast_tree(Flow(0, 0, tuple(same), "multicast"), cds, cg)
    assert one.hops == two.hops and one.transmissions == two.transmissions


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 30))
def test_multicast_tree_spans_terminals(seed, l):
    dep, cg, cds = _mc_setup(seed=seed % 5)
    flow = draw_multicast_flows(dep, 1, l, seed)[0]
    t = multicast_tree(flow, cds, cg)
    reached = {flow.source}
    for s in t.steps:
        assert s.tx in reached
        reached |= set(s.receivers)
    assert set(flow.destinations) <= reached
    txs = [s.tx for s in t.steps]
    assert len(txs) == len(set(txs))
    cells = [tuple(cg.cell_of_node[v]) for v in txs]
    assert len(cells) == len(set(cells))
    for s in t.steps:
        for v in s.receivers:
            assert np.hypot(*(dep.positions[s.tx] - dep.positions[v])) <= math.sqrt(5) * cg.cell_side + 1e-12


def test_multicast_tree_size_grows_as_sqrt_l():
    dep = place_uniform(4000, 1.0, 0)
    g = 20
    cg = build_cells(dep, 1 / g)
    cds = build_cds(cg)
    ls = [4, 8, 16, 32, 64]
    sizes = []
    for l in ls:
        flows = draw_multicast_flows(dep, 100, l, l)
        sizes.append(np.mean([len(multicast_tree(f, cds, cg).hops) for f in flows]))
    slope = np.polyfit(np.log(ls), np.log(sizes), 1)[0]
    assert 0.35 <= slope <= 0.65


def test_hybrid_routes():
    n, M = 1000, 16
    dep = place_uniform(n, 1.0, 3).merged(place_infrastructure(M, 1.0, "grid"))
    r = 1 / math.sqrt(M)
    router = HybridRouter.build(dep, r)
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, d = (int(v) for v in rng.choice(n, 2, replace=False))
        rt = router.route(Flow(0, s, (d,)))
        assert rt.hops[0] == s and rt.hops[-1] == d
        direct = router.hops[s, d]
        assert rt.transmissions <= direct
        assert rt.transmissions <= direct + 2
        pos = dep.positions
        for st_ in rt.steps:
            if st_.label != BACKBONE:
                assert np.hypot(*(pos[st_.tx] - pos[st_.receivers[0]])) <= r + 1e-12
        if any(st_.label == BACKBONE for st_ in rt.steps):
            assert rt.transmissions == len(rt.steps) - 1


def test_hybrid_one_hop_access_gives_two_radio_hops():
    M = 64
    dep = place_uniform(500, 1.0, 1).merged(place_infrastructure(M, 1.0, "grid"))
    # range covers the half-diagonal of an infrastructure cell
    router = HybridRouter.build(dep, 0.75 / math.sqrt(M))
    assert np.all(router.infra_hops[:500] == 1)
    far = [Flow(0, s, (d,)) for s, d in [(0, 1), (2, 3), (4, 5)] if router.hops[s, d] > 2]
    for f in far:
        assert router.route(f).transmissions == 2


def test_hybrid_prefers_ad_hoc_when_shorter():
    pts = [[0.1, 0.1], [0.15, 0.1], [0.9, 0.9]]
    dep = _dep(pts).merged(place_infrastructure(1, 1.0, "grid"))
    router = HybridRouter.build(dep, 0.1)
    rt = router.route(Flow(0, 0, (1,)))
    assert rt.hops == (0, 1) and rt.transmissions == 1


def test_two_hop_policy():
    dest_of = [3, 2, 0, 1]
    holds = np.zeros((4, 4), dtype=int)
    assert two_hop_action(0, 3, dest_of, holds) == DIRECT
    assert two_hop_action(0, 1, dest_of, holds) == HANDOFF
    holds[1, 0] = 1
    assert two_hop_action(0, 1, dest_of, holds) == IDLE
    # node 1 relays a packet of flow 0 (destined to 3) and meets node 3
    assert two_hop_action(1, 3, dest_of, holds) == RELAY_DELIVER


def test_path_route_labels_and_errors():
    r = path_route(7, [1, 2, 3], [ACCESS, DELIVERY])
    assert r.transmissions == 2 and [s.children for s in r.steps] == [(1,), ()]
    with pytest.raises(RoutingHole):
        path_route(0, [1])


def outside_area(ux, uy, rho, c, m=48):
    """Area of the disk of radius ``rho`` at ``(ux, uy)`` lying outside the cell ``[0, c]^2``."""
    xg, wg = np.polynomial.legendre.leggauss(m)
    tot = 0.0
    cuts = sorted({ux - rho, ux + rho, *[b for b in (0.0, c) if ux - rho < b < ux + rho]})
    for a, b in zip(cuts, cuts[1:]):
        x = 0.5 * (b - a) * xg + 0.5 * (a + b)
        h = np.sqrt(np.maximum(rho**2 - (x - ux) ** 2, 0))
        inside = np.clip(np.minimum(uy + h, c) - np.maximum(uy - h, 0), 0, None)
        inside = np.where((x >= 0) & (x <= c), inside, 0)
        tot += 0.5 * (b - a) * np.sum(wg * (2 * h - inside))
    return tot


def isolated_fraction_exact(c, rho, m=24):
    """c^2 e^{-c^2} times the mean of exp(-|disk outside cell|) over a uniform point in the cell."""
    xg, wg = np.polynomial.legendre.leggauss(m)
    breaks = sorted({0.0, min(rho, c), max(c - rho, 0.0), c})
    pts, wts = [], []
    for a, b in zip(breaks, breaks[1:]):
        if b > a:
            pts += list(0.5 * (b - a) * xg + 0.5 * (a + b))
            wts += list(0.5 * (b - a) * wg)
    mean = sum(wi * wj * math.exp(-outside_area(x, y, rho, c))
               for x, wi in zip(pts, wts) for y, wj in zip(pts, wts)) / c**2
    return c * c * math.exp(-c * c) * mean


def test_outside_area_oracle():
    # disk well inside the cell, and disk centred on a corner (three quarters outside)
    assert outside_area(0.5, 0.5, 0.25, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert outside_area(0.0, 0.0, 0.25, 1.0) == pytest.approx(0.75 * math.pi / 16, rel=1e-5)
    assert outside_area(0.5, 0.0, 0.25, 1.0) == pytest.approx(0.5 * math.pi / 16, rel=1e-5)


def test_isolated_cell_fraction_quadrature():
    assert isolated_fraction_exact(1.0, 0.25) == pytest.approx(ISOLATED_EXACT, abs=1e-5)
    # the closed-form product treats the two events as independent; it undercounts
    product = math.exp(-1) * math.exp(-math.pi / 16)
    assert product == pytest.approx(0.3023, abs=1e-4)
    assert ISOLATED_EXACT > product


def test_isolated_cell_fraction_monte_carlo():
    got = isolated_cell_fraction(1.0, 0.25, 1000, 0)
    assert got == pytest.approx(ISOLATED_EXACT, abs=0.003)
    assert isolated_cell_fraction(1.0, 0.0, 400, 1) == pytest.approx(math.exp(-1), abs=0.005)
