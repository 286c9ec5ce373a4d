"""Route construction for each network family.

Routes are expressed as a tuple of :class:`Step` objects that the engine
executes. A step is one transmission (or a zero-cost backbone hand-off) and
names the steps that become eligible once it completes, which covers paths
and multicast trees uniformly.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import minimum_spanning_tree, shortest_path
from scipy.spatial import cKDTree, distance_matrix

from .deploy import Deployment, Flow
from .errors import InvalidScenario, RoutingHole
from .seeding import rng_for

# step labels
RADIO = 0
ACCESS, HORIZONTAL, VERTICAL, DELIVERY = 1, 2, 3, 4
BACKBONE = -1


@dataclass(frozen=True)
class Step:
    tx: int
    receivers: tuple
    children: tuple = ()
    label: int = RADIO

    @property
    def radio(self) -> bool:
        return self.label != BACKBONE


@dataclass(frozen=True)
class Route:
    flow_id: int
    kind: str  # path | tree | two-hop-policy
    hops: tuple = ()
    parent: dict = field(default_factory=dict)
    steps: tuple = ()

    @property
    def transmissions(self) -> int:
        """Radio transmissions needed to deliver one packet (backbone excluded)."""
        return sum(1 for s in self.steps if s.radio)

    @property
    def hop_count(self) -> int:
        return self.transmissions


def path_route(flow_id: int, hops: Sequence[int], labels: Optional[Sequence[int]] = None) -> Route:
    """Route along ``hops``; ``labels[i]`` tags the transmission ``hops[i] -> hops[i+1]``."""
    hops = tuple(int(h) for h in hops)
    if len(hops) < 2:
        raise RoutingHole("a path needs at least two nodes")
    m = len(hops) - 1
    labels = [RADIO] * m if labels is None else list(labels)
    steps = tuple(
        Step(hops[i], (hops[i + 1],), (i + 1,) if i + 1 < m else (), labels[i]) for i in range(m)
    )
    return Route(flow_id, "path", hops, {}, steps)


# ---------------------------------------------------------------- cell grids

@dataclass(frozen=True, eq=False)
class CellGraph:
    """Square cells of side ``cell_side`` covering ``[0, area_side]^2``."""

    cell_side: float
    dims: tuple
    cell_of_node: np.ndarray  # (n, 2) integer cell coordinates, -1 for excluded nodes
    members: tuple  # flat cell index -> sorted node ids
    adjacency: int = 4
    area_side: float = 1.0

    @property
    def n_cells(self) -> int:
        return self.dims[0] * self.dims[1]

    def flat(self, i, j):
        return np.asarray(i) * self.dims[1] + np.asarray(j)

    def unflat(self, f):
        return divmod(int(f), self.dims[1])

    def nodes_in(self, i: int, j: int) -> np.ndarray:
        return self.members[i * self.dims[1] + j]

    @property
    def occupancy(self) -> np.ndarray:
        return np.array([len(m) for m in self.members]).reshape(self.dims)

    @property
    def occupied(self) -> np.ndarray:
        return self.occupancy > 0

    def relay(self, i: int, j: int) -> int:
        m = self.nodes_in(i, j)
        if len(m) == 0:
            raise RoutingHole(f"cell ({i}, {j}) is empty")
        return int(m[0])

    def center(self, i, j) -> np.ndarray:
        return (np.array([i, j], dtype=float) + 0.5) * self.cell_side

    def neighbors(self, i: int, j: int):
        steps = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        if self.adjacency == 8:
            steps += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        nx, ny = self.dims
        for di, dj in steps:
            a, b = i + di, j + dj
            if 0 <= a < nx and 0 <= b < ny:
                yield a, b


def build_cells(dep: Deployment, cell_side: float, adjacency: int = 4,
                nodes: Optional[Sequence[int]] = None) -> CellGraph:
    """Bin nodes by floor division. ``nodes`` restricts binning (default: all nodes)."""
    if not cell_side > 0:
        raise InvalidScenario("cell side must be positive")
    if adjacency not in (4, 8):
        raise InvalidScenario("adjacency must be 4 or 8")
    g = max(1, math.ceil(dep.area_side / cell_side - 1e-9))
    ids = np.arange(dep.n) if nodes is None else np.asarray(nodes, dtype=np.int64)
    ij = np.minimum(np.floor(dep.positions[ids] / cell_side).astype(np.int64), g - 1)
    cell_of = np.full((dep.n, 2), -1, dtype=np.int64)
    cell_of[ids] = ij
    flat = ij[:, 0] * g + ij[:, 1]
    order = np.lexsort((ids, flat))
    bounds = np.searchsorted(flat[order], np.arange(g * g + 1))
    members = tuple(ids[order[bounds[f]:bounds[f + 1]]] for f in range(g * g))
    return CellGraph(cell_side, (g, g), cell_of, members, adjacency, dep.area_side)


def traverse_cells(p0, p1, cell_side: float, dims) -> list:
    """Cells crossed by the segment ``p0 -> p1``, in order, 4-connected.

    When the segment passes exactly through a cell corner the horizontal
    step is taken first.
    """
    nx, ny = dims
    p0 = np.asarray(p0, dtype=float) / cell_side
    p1 = np.asarray(p1, dtype=float) / cell_side
    i, j = min(int(p0[0]), nx - 1), min(int(p0[1]), ny - 1)
    ie, je = min(int(p1[0]), nx - 1), min(int(p1[1]), ny - 1)
    dx, dy = p1 - p0
    si = 1 if dx > 0 else -1
    sj = 1 if dy > 0 else -1
    # parametric distance to the next vertical / horizontal grid line
    if dx != 0:
        nxt = (i + 1) if si > 0 else i
        tmx, tdx = (nxt - p0[0]) / dx, abs(1.0 / dx)
    else:
        tmx, tdx = math.inf, math.inf
    if dy != 0:
        nxt = (j + 1) if sj > 0 else j
        tmy, tdy = (nxt - p0[1]) / dy, abs(1.0 / dy)
    else:
        tmy, tdy = math.inf, math.inf
    cells = [(i, j)]
    for _ in range(abs(ie - i) + abs(je - j)):
        if (tmx <= tmy and i != ie) or j == je:
            i += si
            tmx += tdx
        else:
            j += sj
            tmy += tdy
        cells.append((i, j))
    return cells


def cell_line(c0, c1, cellgraph: CellGraph) -> list:
    """Cells on the segment between the centres of cells ``c0`` and ``c1``."""
    return traverse_cells(cellgraph.center(*c0), cellgraph.center(*c1), cellgraph.cell_side, cellgraph.dims)


def straight_line_route(flow: Flow, cellgraph: CellGraph, positions) -> Route:
    """Relay through the lowest-id node of every cell the source-destination segment crosses."""
    s, d = flow.source, flow.destinations[0]
    cells = traverse_cells(positions[s], positions[d], cellgraph.cell_side, cellgraph.dims)
    relays = [cellgraph.relay(i, j) for i, j in cells[1:-1]]
    return path_route(flow.flow_id, [s, *relays, d])


def grid_route(flow: Flow, dep: Deployment, r: float) -> Route:
    """L-shaped route on a lattice placement: along the source row, then along the destination column."""
    side = math.ceil(math.sqrt(dep.n))
    step = dep.area_side / side
    if step > r * (1 + 1e-9):
        raise InvalidScenario("lattice spacing exceeds the transmission range")
    s, d = flow.source, flow.destinations[0]
    (sx, sy), (dx, dy) = (divmod(s, side)[::-1], divmod(d, side)[::-1])
    hops = [(x, sy) for x in _span(sx, dx)] + [(dx, y) for y in _span(sy, dy)[1:]]
    ids = []
    for x, y in hops:
        v = y * side + x
        if v >= dep.n:
            raise RoutingHole(f"no lattice node at ({x}, {y})")
        ids.append(v)
    return path_route(flow.flow_id, ids)


def _span(a: int, b: int) -> list:
    return list(range(a, b + 1)) if b >= a else list(range(a, b - 1, -1))


# ---------------------------------------------------------------- highways

@dataclass
class HighwaySystem:
    slab_count: int
    slab_height: float
    horizontal_paths: list  # per slab: list of paths, each a list of (i, j) cells
    vertical_paths: list
    cellgraph: CellGraph
    entry_map: dict = field(default_factory=dict)  # node -> (path_key, position on path)
    exit_map: dict = field(default_factory=dict)

    @property
    def crossings_per_slab(self) -> list:
        return [len(p) for p in self.horizontal_paths] + [len(p) for p in self.vertical_paths]

    @property
    def empty_slabs(self) -> int:
        return sum(1 for c in self.crossings_per_slab if c == 0)

    @property
    def crossing_fraction(self) -> float:
        c = self.crossings_per_slab
        return sum(1 for x in c if x > 0) / len(c)

    def path(self, key):
        kind, slab, idx = key
        return (self.horizontal_paths if kind == "h" else self.vertical_paths)[slab][idx]


def disjoint_crossings(open_cells: np.ndarray) -> list:
    """Maximum set of vertex-disjoint 4-connected left-to-right paths through ``open_cells``.

    ``open_cells`` is a boolean ``(width, height)`` array indexed ``[i, j]``
    with ``i`` the horizontal coordinate. Unit vertex capacities are
    modelled by splitting each cell; augmenting paths are found by BFS.
    """
    w, h = open_cells.shape
    if w == 0 or h == 0:
        return []
    ncell = w * h
    src, snk = 2 * ncell, 2 * ncell + 1
    # residual graph as adjacency dict with capacity map
    cap = {}
    orig = set()
    adj = [[] for _ in range(2 * ncell + 2)]

    def add(u, v):
        if (u, v) not in cap:
            cap[(u, v)] = 0
            cap.setdefault((v, u), 0)
            adj[u].append(v)
            adj[v].append(u)
        cap[(u, v)] += 1
        orig.add((u, v))

    def cid(i, j):
        return i * h + j

    for i in range(w):
        for j in range(h):
            if not open_cells[i, j]:
                continue
            c = cid(i, j)
            add(2 * c, 2 * c + 1)  # in -> out
            if i == 0:
                add(src, 2 * c)
            if i == w - 1:
                add(2 * c + 1, snk)
            for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
                if 0 <= a < w and 0 <= b < h and open_cells[a, b]:
                    add(2 * c + 1, 2 * cid(a, b))
    while True:
        prev = {src: src}
        q = deque([src])
        while q and snk not in prev:
            u = q.popleft()
            for v in adj[u]:
                if v not in prev and cap[(u, v)] > 0:
                    prev[v] = u
                    q.append(v)
        if snk not in prev:
            break
        v = snk
        while v != src:
            u = prev[v]
            cap[(u, v)] -= 1
            cap[(v, u)] += 1
            v = u
    # decompose: each used cell carries one unit, so following flow edges is unambiguous
    paths = []
    for j in range(h):
        if not open_cells[0, j] or cap[(src, 2 * cid(0, j))] != 0:
            continue
        c = cid(0, j)
        path = [(0, j)]
        while not (c // h == w - 1 and cap.get((2 * c + 1, snk), 1) == 0):
            out = 2 * c + 1
            nxt = [v // 2 for v in adj[out] if v < src and v % 2 == 0 and v != 2 * c
                   and (out, v) in orig and cap[(out, v)] == 0]
            c = nxt[0]
            path.append(divmod(c, h))
        paths.append(path)
    return paths


def slab_of_rows(n_rows: int, n_slabs: int) -> np.ndarray:
    return (np.arange(n_rows) * n_slabs) // n_rows


def find_highways(cellgraph: CellGraph, kappa: float = 1.0, n: Optional[int] = None) -> HighwaySystem:
    """Disjoint crossings in each horizontal and vertical slab of height about ``kappa ln sqrt(n)``."""
    occ = cellgraph.occupied
    nx, ny = cellgraph.dims
    if n is None:
        n = int(occ.size and sum(len(m) for m in cellgraph.members))
    root = math.sqrt(n)
    L = max(1, math.ceil(root / (kappa * math.log(root))))
    L = min(L, nx, ny)
    hp, vp = [], []
    rows = slab_of_rows(ny, L)
    for s in range(L):
        js = np.flatnonzero(rows == s)
        paths = disjoint_crossings(occ[:, js])
        hp.append([[(i, int(js[b])) for i, b in p] for p in paths])
    cols = slab_of_rows(nx, L)
    for s in range(L):
        is_ = np.flatnonzero(cols == s)
        paths = disjoint_crossings(occ[is_, :].T)
        vp.append([[(int(is_[b]), j) for j, b in p] for p in paths])
    hw = HighwaySystem(L, cellgraph.area_side / L, hp, vp, cellgraph)
    _attach_entries(hw)
    return hw


def _attach_entries(hw: HighwaySystem) -> None:
    cg = hw.cellgraph
    nodes = np.flatnonzero(cg.cell_of_node[:, 0] >= 0)
    for attr, paths, kind in (("entry_map", hw.horizontal_paths, "h"), ("exit_map", hw.vertical_paths, "v")):
        keys, cells = [], []
        for s, slab in enumerate(paths):
            for k, p in enumerate(slab):
                for pos, c in enumerate(p):
                    keys.append(((kind, s, k), pos))
                    cells.append(c)
        if not cells:
            continue
        centers = (np.array(cells, dtype=float) + 0.5) * cg.cell_side
        node_pos = (cg.cell_of_node[nodes] + 0.5) * cg.cell_side
        _, idx = cKDTree(centers).query(node_pos)
        setattr(hw, attr, {int(v): keys[i] for v, i in zip(nodes, idx)})


def highway_route(flow: Flow, hw: HighwaySystem, positions=None) -> Route:
    """Access hop, horizontal highway, vertical highway, delivery hop.

    The transfer cell is the shared cell of the two highways that minimises
    the number of highway hops.
    """
    cg = hw.cellgraph
    s, d = flow.source, flow.destinations[0]
    if s not in hw.entry_map or d not in hw.exit_map:
        raise RoutingHole("no highway reachable")
    hkey, hpos = hw.entry_map[s]
    vkey, vpos = hw.exit_map[d]
    hpath, vpath = hw.path(hkey), hw.path(vkey)
    vindex = {c: k for k, c in enumerate(vpath)}
    best = None
    for k, c in enumerate(hpath):
        if c in vindex:
            cost = abs(k - hpos) + abs(vindex[c] - vpos)
            if best is None or cost < best[0]:
                best = (cost, k, vindex[c])
    if best is None:
        raise RoutingHole("horizontal and vertical highway do not meet")
    _, hk, vk = best
    hcells = hpath[hpos:hk + 1] if hk >= hpos else hpath[hk:hpos + 1][::-1]
    vcells = vpath[vk:vpos + 1] if vpos >= vk else vpath[vpos:vk + 1][::-1]
    nodes = [s]
    labels = []
    for cells, lab in ((hcells, HORIZONTAL), (vcells[1:], VERTICAL)):
        for c in cells:
            labels.append(lab)
            nodes.append(cg.relay(*c))
    labels[0] = ACCESS
    nodes.append(d)
    labels.append(DELIVERY)
    # labels[i] tags hop nodes[i] -> nodes[i+1]; drop zero-length hops
    hops, hl = [nodes[0]], []
    for v, lab in zip(nodes[1:], labels):
        if v == hops[-1]:
            continue
        hops.append(v)
        hl.append(lab)
    if len(hops) < 2:
        raise RoutingHole("degenerate highway route")
    return path_route(flow.flow_id, hops, hl)


# ---------------------------------------------------------------- multicast

def build_cds(cellgraph: CellGraph) -> dict:
    """One dominating node (lowest id) per cell; every cell must be occupied."""
    cds = {}
    nx, ny = cellgraph.dims
    for i in range(nx):
        for j in range(ny):
            cds[(i, j)] = cellgraph.relay(i, j)
    return cds


def multicast_tree(flow: Flow, cds: dict, cellgraph: CellGraph) -> Route:
    """Broadcast tree over cells spanning the source cell and every destination cell.

    Terminal cells are joined along a Euclidean minimum spanning tree, each
    edge realised as the straight cell line between cell centres; the union
    is reduced to a BFS tree from the source cell and pruned of
    non-terminal leaves. The source transmits in its own cell and the
    dominating node transmits in every other cell that has children.
    Destinations are reached by the broadcast of their parent cell (or of
    the source, when they share its cell).
    """
    cof = cellgraph.cell_of_node
    src = flow.source
    root = tuple(int(x) for x in cof[src])
    dest_cells = {}
    for v in flow.destinations:
        dest_cells.setdefault(tuple(int(x) for x in cof[v]), []).append(v)
    terminals = [root] + sorted(c for c in dest_cells if c != root)
    adj = {root: set()}
    if len(terminals) > 1:
        pts = np.array(terminals, dtype=float)
        mst = minimum_spanning_tree(csr_matrix(np.triu(distance_matrix(pts, pts) + 1e-12, 1))).tocoo()
        for a, b in zip(mst.row, mst.col):
            line = cell_line(terminals[a], terminals[b], cellgraph)
            for u, v in zip(line, line[1:]):
                adj.setdefault(u, set()).add(v)
                adj.setdefault(v, set()).add(u)
    parent = {root: None}
    order = [root]
    q = deque([root])
    while q:
        u = q.popleft()
        for v in sorted(adj.get(u, ())):
            if v not in parent:
                parent[v] = u
                order.append(v)
                q.append(v)
    keep_terms = set(terminals)
    children = {c: [] for c in order}
    for c in order[1:]:
        children[parent[c]].append(c)
    # prune leaves that are not terminals, deepest first
    for c in reversed(order):
        if c not in keep_terms and not children[c] and parent[c] is not None:
            children[parent[c]].remove(c)
            del parent[c]
    cells = [c for c in order if c in parent]
    tx_cells = [c for c in cells if c == root or children[c]]
    step_of = {c: k for k, c in enumerate(tx_cells)}
    steps = []
    for c in tx_cells:
        tx = src if c == root else cds[c]
        recv = []
        for ch in children[c]:
            if ch in step_of:
                recv.append(cds[ch])
            recv.extend(dest_cells.get(ch, []))
        if c == root:
            recv.extend(v for v in dest_cells.get(root, []))
        recv = tuple(sorted(set(v for v in recv if v != tx)))
        kids = tuple(step_of[ch] for ch in children[c] if ch in step_of)
        steps.append(Step(int(tx), tuple(int(v) for v in recv), kids, RADIO))
    tree_parent = {c: parent[c] for c in cells}
    return Route(flow.flow_id, "tree", tuple(cells), tree_parent, tuple(steps))


# ---------------------------------------------------------------- hybrid

@dataclass
class HybridRouter:
    """Shortest-hop routing in the disk graph with an infrastructure shortcut."""

    dep: Deployment
    r: float
    hops: np.ndarray  # (n, n) hop distances; inf where disconnected
    pred: np.ndarray
    infra_hops: np.ndarray  # hop distance of every node to its nearest infrastructure node
    infra_of: np.ndarray  # that infrastructure node

    @classmethod
    def build(cls, dep: Deployment, r: float) -> "HybridRouter":
        infra = dep.infrastructure
        if len(infra) == 0:
            raise InvalidScenario("hybrid routing needs infrastructure nodes")
        pairs = cKDTree(dep.positions).query_pairs(r, output_type="ndarray")
        # infrastructure nodes are ordinary vertices of the disk graph, so they may also relay radio hops
        n = dep.n
        graph = csr_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        dist, pred = shortest_path(graph, directed=False, unweighted=True, return_predecessors=True)
        sub = dist[:, infra]
        best = np.argmin(sub, axis=1)
        return cls(dep, r, dist, pred, sub[np.arange(n), best], infra[best])

    def _path(self, a: int, b: int) -> list:
        if not np.isfinite(self.hops[a, b]):
            raise RoutingHole(f"node {b} unreachable from {a}")
        out = [b]
        while out[-1] != a:
            out.append(int(self.pred[a, out[-1]]))
        return out[::-1]

    def route(self, flow: Flow) -> Route:
        s, d = flow.source, flow.destinations[0]
        up, down = self.infra_hops[s], self.infra_hops[d]
        direct = self.hops[s, d]
        if np.isfinite(up + down) and not direct < up + down:
            a, b = int(self.infra_of[s]), int(self.infra_of[d])
            if a == b:
                nodes = self._path(s, a) + self._path(a, d)[1:]
                return path_route(flow.flow_id, nodes)
            up_path, down_path = self._path(s, a), self._path(b, d)
            nodes = up_path + down_path
            labels = [RADIO] * (len(up_path) - 1) + [BACKBONE] + [RADIO] * (len(down_path) - 1)
            return path_route(flow.flow_id, nodes, labels)
        if not np.isfinite(direct):
            raise RoutingHole(f"flow {flow.flow_id} has no route")
        return path_route(flow.flow_id, self._path(s, d))


def hybrid_route(flow: Flow, dep: Deployment, r: float, router: Optional[HybridRouter] = None) -> Route:
    return (router or HybridRouter.build(dep, r)).route(flow)


# ---------------------------------------------------------------- mobile two-hop

IDLE, DIRECT, HANDOFF, RELAY_DELIVER = 0, 1, 2, 3


def two_hop_action(sender: int, receiver: int, dest_of: Sequence[int], relay_holds) -> int:
    """Next action of a scheduled sender toward its paired receiver.

    ``dest_of[v]`` is the destination of node ``v``'s own flow and
    ``relay_holds[v, f]`` counts packets of the flow sourced at ``f`` that
    node ``v`` holds as a relay. Relayed packets for the receiver go first,
    then direct delivery, then a hand-off of a fresh packet to a relay.
    Relays never pass packets to other relays.
    """
    flow_to_rx = _source_for_destination(receiver, dest_of)
    if flow_to_rx is not None and flow_to_rx != sender and relay_holds[sender, flow_to_rx] > 0:
        return RELAY_DELIVER
    if dest_of[sender] == receiver:
        return DIRECT
    if relay_holds[receiver, sender] == 0:
        return HANDOFF
    return IDLE


def _source_for_destination(v: int, dest_of: Sequence[int]):
    for f, d in enumerate(dest_of):
        if d == v:
            return f
    return None


def two_hop_route(flow: Flow) -> Route:
    return Route(flow.flow_id, "two-hop-policy", (flow.source, flow.destinations[0]))


# ---------------------------------------------------------------- diagnostics

def isolated_cell_fraction(c: float, c1: float, cells_per_side: int, seed: int) -> float:
    """Fraction of cells holding exactly one node that has no other node within ``c1``.

    Unit-density Poisson points on a torus of ``cells_per_side**2`` cells of
    side ``c`` (the torus removes boundary effects).
    """
    rng = rng_for(seed, 0x4953)
    side = cells_per_side * c
    n = rng.poisson(side * side)
    pts = rng.random((n, 2)) * side
    cell = np.minimum((pts // c).astype(np.int64), cells_per_side - 1)
    flat = cell[:, 0] * cells_per_side + cell[:, 1]
    counts = np.bincount(flat, minlength=cells_per_side**2)
    lonely = counts[flat] == 1
    tree = cKDTree(pts, boxsize=side)
    nn, _ = tree.query(pts[lonely], k=2)
    isolated = nn[:, 1] >= c1
    return float(isolated.sum()) / cells_per_side**2
