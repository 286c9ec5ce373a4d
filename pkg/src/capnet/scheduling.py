"""Per-slot link selection: spatial TDMA, a greedy packer, an exhaustive oracle
and the random sender selection used in mobile networks."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidScenario, OracleSizeError
from .interference import Link, Model, PhysicalParams, feasible_arrays, sinr_vector
from .seeding import rng_for

ORACLE_LIMIT = 20


@dataclass(frozen=True)
class LinkSet:
    slot_index: int
    active: tuple = ()
    carrying: tuple = ()

    @property
    def Y(self) -> int:
        return len(self.carrying)


@dataclass(frozen=True)
class TdmaSchedule:
    """Cells coloured with ``l*l`` phases, ``l = 2(d+1)``, so equal colours are ``(l-1)`` cells apart."""

    cell_side: float
    reuse_parameter: int
    grid_dims: tuple

    @property
    def reuse_factor(self) -> int:
        return 2 * (self.reuse_parameter + 1)

    @property
    def cycle_length(self) -> int:
        return self.reuse_factor**2

    def phase_of_cell(self, i, j):
        l = self.reuse_factor
        return (np.asarray(i) % l) * l + (np.asarray(j) % l)

    def phase_of_slot(self, slot: int) -> int:
        return slot % self.cycle_length

    def phase_grid(self) -> np.ndarray:
        nx, ny = self.grid_dims
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        return self.phase_of_cell(ii, jj)

    def cells_in_phase(self, phase: int) -> np.ndarray:
        """``(m, 2)`` array of cell indices that may transmit in ``phase``."""
        return np.argwhere(self.phase_grid() == phase)


def build_cell_tdma(area_side: float, cell_side: float, d: int) -> TdmaSchedule:
    if not cell_side > 0:
        raise InvalidScenario("cell side must be positive")
    if d < 1:
        raise InvalidScenario("reuse parameter d must be >= 1")
    l = 2 * (d + 1)
    if area_side < l * cell_side * (1 - 1e-12):
        raise InvalidScenario(
            f"area side {area_side} cannot hold one reuse block of {l} cells of side {cell_side}")
    g = max(1, math.ceil(area_side / cell_side - 1e-9))
    return TdmaSchedule(cell_side, d, (g, g))


def tdma_slot_links(schedule: TdmaSchedule, slot: int, cellgraph, queues: Mapping[int, int],
                    next_hop: Callable[[int], int], positions) -> LinkSet:
    """One link per firing cell: the node with the longest queue (lowest id on ties)."""
    phase = schedule.phase_of_slot(slot)
    links = []
    for i, j in schedule.cells_in_phase(phase):
        best = None
        for v in cellgraph.nodes_in(int(i), int(j)):
            qv = queues.get(int(v), 0)
            if qv > 0 and (best is None or qv > best[0]):
                best = (qv, int(v))
        if best is not None:
            tx = best[1]
            links.append(Link.between(tx, next_hop(tx), positions))
    links = tuple(links)
    return LinkSet(slot, links, links)


def _order(candidates, tiebreak, queue_len, seed):
    idx = list(range(len(candidates)))
    if tiebreak == "longest-queue":
        ql = queue_len or {}
        idx.sort(key=lambda i: (-ql.get(candidates[i].tx, 0), candidates[i].tx, candidates[i].rx))
    elif tiebreak == "random":
        idx = list(rng_for(seed, 0x4752).permutation(len(candidates)))
    else:
        raise ValueError(f"unknown tiebreak {tiebreak!r}")
    return idx


def greedy_feasible_set(candidates: Sequence[Link], positions, model: Model,
                        tiebreak: str = "longest-queue", seed: int = 0,
                        queue_len: Optional[Mapping[int, int]] = None, slot_index: int = 0) -> LinkSet:
    """Scan candidates in priority order, keeping each one that leaves the set feasible.

    Feasibility is monotone under removal in both models, so a rejected
    candidate stays rejected and the result is maximal.
    """
    chosen = []
    used = set()
    for i in _order(candidates, tiebreak, queue_len, seed):
        link = candidates[i]
        if link.tx in used:
            continue
        trial = chosen + [link]
        if feasible_arrays([l.tx for l in trial], [l.rx for l in trial], positions, model):
            chosen = trial
            used.add(link.tx)
    chosen = tuple(chosen)
    return LinkSet(slot_index, chosen, chosen)


def max_feasible_set_bruteforce(candidates: Sequence[Link], positions, model: Model) -> LinkSet:
    """Largest feasible subset by exhaustive enumeration (first found in lexicographic order)."""
    m = len(candidates)
    if m > ORACLE_LIMIT:
        raise OracleSizeError(f"{m} candidates exceed the oracle limit of {ORACLE_LIMIT}")
    for size in range(m, 0, -1):
        for combo in itertools.combinations(range(m), size):
            txs = [candidates[i].tx for i in combo]
            if len(set(txs)) < size:
                continue
            if feasible_arrays(txs, [candidates[i].rx for i in combo], positions, model):
                chosen = tuple(candidates[i] for i in combo)
                return LinkSet(0, chosen, chosen)
    return LinkSet(0, (), ())


@dataclass(frozen=True)
class TwoHopParams:
    sender_density: float = 0.2
    phys: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self):
        if not 0 < self.sender_density < 0.5:
            raise InvalidScenario("sender density must lie in (0, 0.5)")


def two_hop_pairs(positions: np.ndarray, params: TwoHopParams, rng: np.random.Generator):
    """Propose senders, pair each with its nearest non-sender, keep pairs clearing the SINR threshold.

    Returns ``(tx, rx, retained_mask)``. Retention is judged with every
    proposed sender transmitting, whether or not it is retained.
    """
    n = len(positions)
    s = int(math.floor(params.sender_density * n))
    if s == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0, dtype=bool)
    perm = rng.permutation(n)
    tx = np.sort(perm[:s])
    others = np.setdiff1d(np.arange(n), tx)
    _, nn = cKDTree(positions[others]).query(positions[tx], k=1)
    rx = others[nn]
    sinr = sinr_vector(tx, rx, positions, params.phys)
    return tx, rx, sinr >= params.phys.sinr_threshold


def two_hop_select(dep, flows, queues, params: TwoHopParams, seed: int, slot_index: int = 0) -> LinkSet:
    """Retained sender/receiver pairs for one slot of a mobile network.

    ``active`` holds every retained pair; ``carrying`` is filled in by the
    engine once the relay policy decides which pairs move a packet.
    """
    rng = rng_for(seed, 0x5448, slot_index)
    tx, rx, keep = two_hop_pairs(dep.positions, params, rng)
    links = tuple(Link.between(int(a), int(b), dep.positions) for a, b in zip(tx[keep], rx[keep]))
    return LinkSet(slot_index, links, ())
