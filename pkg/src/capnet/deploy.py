"""Node placement, mobility and traffic generation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidScenario
from .seeding import rng_for

ORDINARY = 0
INFRASTRUCTURE = 1
KIND_NAMES = {ORDINARY: "ordinary", INFRASTRUCTURE: "infrastructure"}
KIND_CODES = {v: k for k, v in KIND_NAMES.items()}


@dataclass(frozen=True, eq=False)
class Deployment:
    """Nodes on the square ``[0, area_side]^2``.

    Node ids are the row indices of ``positions``; ordinary nodes always come
    before infrastructure nodes.
    """

    area_side: float
    positions: np.ndarray
    kinds: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        kinds = np.asarray(self.kinds, dtype=np.int8).reshape(-1)
        if len(pos) != len(kinds):
            raise InvalidScenario("positions and kinds differ in length")
        if np.any(pos < 0) or np.any(pos > self.area_side):
            raise InvalidScenario("node outside the deployment square")
        infra = np.flatnonzero(kinds == INFRASTRUCTURE)
        if len(infra) and infra[0] < np.count_nonzero(kinds == ORDINARY):
            raise InvalidScenario("infrastructure nodes must follow ordinary nodes")
        pos.setflags(write=False)
        kinds.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "kinds", kinds)

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def n_ordinary(self) -> int:
        return int(np.count_nonzero(self.kinds == ORDINARY))

    @property
    def ordinary(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == ORDINARY)

    @property
    def infrastructure(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == INFRASTRUCTURE)

    def with_positions(self, positions) -> "Deployment":
        return Deployment(self.area_side, positions, self.kinds, self.rng_seed)

    def merged(self, other: "Deployment") -> "Deployment":
        """Append ``other``'s nodes (typically an infrastructure fragment)."""
        if not math.isclose(other.area_side, self.area_side):
            raise InvalidScenario("cannot merge deployments on different squares")
        return Deployment(
            self.area_side,
            np.vstack([self.positions, other.positions]),
            np.concatenate([self.kinds, other.kinds]),
            self.rng_seed,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "x", "y", "kind"])
        for i, ((x, y), k) in enumerate(zip(self.positions, self.kinds)):
            w.writerow([i, repr(float(x)), repr(float(y)), KIND_NAMES[int(k)]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, area_side: float, rng_seed: int = 0) -> "Deployment":
        rows = list(csv.DictReader(io.StringIO(text)))
        ids = [int(r["node_id"]) for r in rows]
        if ids != list(range(len(rows))):
            raise InvalidScenario("node ids must be contiguous from 0")
        pos = [(float(r["x"]), float(r["y"])) for r in rows]
        kinds = [KIND_CODES[r["kind"]] for r in rows]
        return cls(area_side, np.array(pos), np.array(kinds), rng_seed)


@dataclass(frozen=True)
class MobilityModel:
    kind: str = "static"  # static | iid-reshuffle

    def __post_init__(self):
        if self.kind not in ("static", "iid-reshuffle"):
            raise InvalidScenario(f"unknown mobility model {self.kind!r}")


@dataclass(frozen=True)
class Flow:
    flow_id: int
    source: int
    destinations: tuple
    kind: str = "unicast"


@dataclass(frozen=True)
class FlowSet:
    flows: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.flows)

    def __iter__(self):
        return iter(self.flows)

    def __getitem__(self, i):
        return self.flows[i]

    @property
    def sources(self) -> np.ndarray:
        return np.array([f.source for f in self.flows], dtype=np.int64)

    def validate(self, dep: Deployment) -> None:
        ordinary = set(dep.ordinary.tolist())
        for f in self.flows:
            if not f.destinations:
                raise InvalidScenario(f"flow {f.flow_id} has no destination")
            if f.source in f.destinations:
                raise InvalidScenario(f"flow {f.flow_id} sends to itself")
            if f.kind == "unicast" and len(f.destinations) != 1:
                raise InvalidScenario(f"unicast flow {f.flow_id} has several destinations")
            if f.source not in ordinary or not ordinary.issuperset(f.destinations):
                raise InvalidScenario(f"flow {f.flow_id} touches a non-ordinary node")


def place_uniform(n: int, area_side: float, seed: int) -> Deployment:
    """``n`` ordinary nodes i.i.d. uniform on the square."""
    if n < 2:
        raise InvalidScenario("need at least two nodes")
    if area_side <= 0:
        raise InvalidScenario("area_side must be positive")
    rng = rng_for(seed, 0x504C)
    pos = rng.random((n, 2)) * area_side
    return Deployment(area_side, pos, np.zeros(n, dtype=np.int8), seed)


def place_grid(n: int, area_side: float) -> Deployment:
    """Ordinary nodes on the centres of a ``ceil(sqrt n)`` lattice (first ``n`` sites).

    This is the optimally placed arbitrary network used for L-shaped routing.
    """
    if n < 2:
        raise InvalidScenario("need at least two nodes")
    pos = _lattice_centres(n, area_side)
    return Deployment(area_side, pos, np.zeros(n, dtype=np.int8), 0)


def _lattice_centres(m: int, area_side: float) -> np.ndarray:
    side = math.ceil(math.sqrt(m))
    step = area_side / side
    idx = np.arange(m)
    return np.column_stack([(idx % side + 0.5) * step, (idx // side + 0.5) * step])


def place_infrastructure(m: int, area_side: float, mode: str = "grid", seed: int = 0) -> Deployment:
    """Infrastructure fragment: lattice centres (row-major, first ``m`` cells) or i.i.d."""
    if m < 1:
        raise InvalidScenario("need at least one infrastructure node")
    if mode == "grid":
        pos = _lattice_centres(m, area_side)
    elif mode == "uniform":
        pos = rng_for(seed, 0x494E).random((m, 2)) * area_side
    else:
        raise InvalidScenario(f"unknown infrastructure mode {mode!r}")
    return Deployment(area_side, pos, np.full(m, INFRASTRUCTURE, dtype=np.int8), seed)


def draw_unicast_flows(dep: Deployment, seed: int, permutation: bool = False) -> FlowSet:
    """One flow per ordinary node.

    By default each destination is uniform over the other ordinary nodes,
    independently. With ``permutation=True`` destinations form a random
    derangement, so every node is the destination of exactly one flow.
    """
    nodes = dep.ordinary
    m = len(nodes)
    if m < 2:
        raise InvalidScenario("need at least two ordinary nodes for unicast traffic")
    rng = rng_for(seed, 0x5543)
    if permutation:
        dest_idx = _derangement(m, rng)
    else:
        # uniform over the m-1 others: draw from m-1 and skip self
        dest_idx = rng.integers(0, m - 1, size=m)
        dest_idx = dest_idx + (dest_idx >= np.arange(m))
    flows = tuple(
        Flow(i, int(nodes[i]), (int(nodes[dest_idx[i]]),), "unicast") for i in range(m)
    )
    return FlowSet(flows)


def _derangement(m: int, rng: np.random.Generator) -> np.ndarray:
    # Sattolo's algorithm: a uniformly random single cycle, hence fixed-point free
    perm = np.arange(m)
    for i in range(m - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def draw_multicast_flows(dep: Deployment, n_s: int, l: int, seed: int) -> FlowSet:
    """``n_s`` multicast sessions, each to the nearest nodes of ``l - 1`` random points.

    Duplicate destinations collapse. If a point's nearest node is the source,
    the second nearest node is used instead.
    """
    nodes = dep.ordinary
    m = len(nodes)
    if l < 2:
        raise InvalidScenario("multicast group size l must be at least 2")
    if l > m:
        raise InvalidScenario("multicast group size l exceeds the number of nodes")
    if not 1 <= n_s <= m:
        raise InvalidScenario("number of multicast sources must be in [1, n]")
    rng = rng_for(seed, 0x4D43)
    tree = cKDTree(dep.positions[nodes])
    sources = rng.choice(m, size=n_s, replace=False)
    flows = []
    for fid, s in enumerate(sources):
        pts = rng.random((l - 1, 2)) * dep.area_side
        _, idx = tree.query(pts, k=2)
        pick = np.where(idx[:, 0] == s, idx[:, 1], idx[:, 0])
        dests = tuple(int(nodes[i]) for i in np.unique(pick))
        flows.append(Flow(fid, int(nodes[s]), dests, "multicast"))
    return FlowSet(tuple(flows))


def step_mobility(dep: Deployment, model: MobilityModel, seed: int, slot_index: int) -> Deployment:
    if model.kind == "static":
        return dep
    rng = rng_for(seed, 0x4D4F, slot_index)
    pos = np.array(dep.positions)
    ordinary = dep.kinds == ORDINARY
    pos[ordinary] = rng.random((int(ordinary.sum()), 2)) * dep.area_side
    return dep.with_positions(pos)


def critical_range(n: float, margin: float | None = None) -> float:
    """Connectivity range ``sqrt((ln n + margin) / (pi n))``; margin defaults to ``ln ln n``."""
    if n < 2:
        raise InvalidScenario("critical_range needs n >= 2")
    if margin is None:
        margin = math.log(math.log(n))
    arg = (math.log(n) + margin) / (math.pi * n)
    if arg <= 0:
        raise InvalidScenario("log n + margin must be positive")
    return math.sqrt(arg)

