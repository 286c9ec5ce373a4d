"""Feasibility of simultaneous transmissions under the protocol and SINR models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidScenario, MalformedSchedule, SingularGeometry

# relative slack for boundary comparisons; constructions sit exactly on them
_EPS = 1e-9


@dataclass(frozen=True)
class ProtocolParams:
    range: float
    guard: float

    def __post_init__(self):
        if not self.range > 0:
            raise InvalidScenario("protocol range must be positive")
        if not self.guard > 0:
            raise InvalidScenario("protocol guard must be positive (a zero guard removes the exclusion zone)")

    @property
    def exclusion(self) -> float:
        """Minimum distance from a receiver to any other transmitter."""
        return (1.0 + self.guard) * self.range


@dataclass(frozen=True)
class PhysicalParams:
    """SINR model parameters.

    ``gain_model`` selects the pure power law ``d**-alpha`` with processing
    gain ``1/L`` on interference ("power-law") or the clamped attenuation
    ``min(1, exp(-gamma d) / d**alpha)`` without processing gain
    ("attenuation").
    """

    power: float = 1.0
    noise: float = 1e-9
    processing_gain: float = 1.0
    sinr_threshold: float = 1.0
    path_loss_exponent: float = 4.0
    absorption: float = 0.0
    gain_model: str = "power-law"

    def __post_init__(self):
        if not self.power > 0:
            raise InvalidScenario("power must be positive")
        if not self.noise > 0:
            raise InvalidScenario("noise must be positive")
        if not self.processing_gain >= 1:
            raise InvalidScenario("processing gain must be >= 1")
        if not self.sinr_threshold > 0:
            raise InvalidScenario("SINR threshold must be positive")
        if not self.path_loss_exponent > 2:
            raise InvalidScenario("path-loss exponent must exceed 2")
        if not self.absorption >= 0:
            raise InvalidScenario("absorption must be nonnegative")
        if self.gain_model not in ("power-law", "attenuation"):
            raise InvalidScenario(f"unknown gain model {self.gain_model!r}")


Model = Union[ProtocolParams, PhysicalParams]


@dataclass(frozen=True)
class Link:
    tx: int
    rx: int
    length: float
    broadcast: bool = False

    def __post_init__(self):
        if self.tx == self.rx:
            raise MalformedSchedule("link transmitter equals receiver")
        if self.length < 0:
            raise MalformedSchedule("negative link length")

    @classmethod
    def between(cls, tx: int, rx: int, positions, broadcast: bool = False) -> "Link":
        d = float(np.hypot(*(np.asarray(positions[tx]) - np.asarray(positions[rx]))))
        return cls(int(tx), int(rx), d, broadcast)


def protocol_compliant(link: Link, other_tx_positions, p: ProtocolParams, rx_position=None) -> bool:
    """True iff the link is within range and every other transmitter clears the guard zone.

    ``rx_position`` is needed whenever ``other_tx_positions`` is nonempty.
    """
    if link.length > p.range * (1 + _EPS):
        return False
    others = np.asarray(other_tx_positions, dtype=float).reshape(-1, 2)
    if len(others) == 0:
        return True
    if rx_position is None:
        raise ValueError("rx_position is required when other transmitters are given")
    d = np.hypot(*(others - np.asarray(rx_position, dtype=float)).T)
    return bool(np.all(d >= p.exclusion * (1 - _EPS)))


def attenuation(d, alpha: float, gamma: float = 0.0):
    """Clamped path gain ``min(1, exp(-gamma d) / d**alpha)``; 1 at ``d == 0``."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        g = np.exp(-gamma * d) / d**alpha
    g = np.minimum(1.0, np.where(d == 0, 1.0, g))
    return float(g) if g.ndim == 0 else g


def _gain(d2: np.ndarray, phys: PhysicalParams) -> np.ndarray:
    """Path gain from squared distances (avoids a square root in the power-law case)."""
    a = phys.path_loss_exponent
    with np.errstate(divide="ignore"):
        if phys.gain_model == "power-law":
            return d2 ** (-a / 2)
        return attenuation(np.sqrt(d2), a, phys.absorption)


def sinr_vector(tx: np.ndarray, rx: np.ndarray, positions: np.ndarray, phys: PhysicalParams) -> np.ndarray:
    """SINR of every link ``tx[i] -> rx[i]`` with all of ``tx`` active at once."""
    tx = np.asarray(tx, dtype=np.int64)
    rx = np.asarray(rx, dtype=np.int64)
    if len(tx) == 0:
        return np.zeros(0)
    pos = np.asarray(positions, dtype=float)
    diff = pos[rx][:, None, :] - pos[tx][None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    own = np.arange(len(tx))
    cross = d2.copy()
    cross[own, own] = np.inf
    if np.any(cross == 0):
        raise SingularGeometry("a receiver coincides with an interfering transmitter")
    g = _gain(d2, phys)
    signal = phys.power * g[own, own]
    g[own, own] = 0.0
    interf = phys.power * g.sum(axis=1)
    if phys.gain_model == "power-law":
        interf = interf / phys.processing_gain
    with np.errstate(divide="ignore"):
        return signal / (phys.noise + interf)


def sinr(link: Link, active: Sequence[Link], positions, phys: PhysicalParams) -> float:
    """SINR of ``link`` when every transmitter in ``active`` is on (``link.tx`` excluded)."""
    txs = [link.tx] + [l.tx for l in active if l.tx != link.tx]
    rxs = [link.rx] + [l.rx for l in active if l.tx != link.tx]
    if link.tx not in {l.tx for l in active}:
        raise MalformedSchedule("link is not part of the active set")
    return float(sinr_vector(np.array(txs), np.array(rxs), positions, phys)[0])


def shannon_rate(link: Link, active: Sequence[Link], positions, phys: PhysicalParams) -> float:
    """``log(1 + SINR)`` in nats; SINR taken under the clamped attenuation gain."""
    if phys.gain_model != "attenuation":
        phys = PhysicalParams(
            phys.power, phys.noise, phys.processing_gain, phys.sinr_threshold,
            phys.path_loss_exponent, phys.absorption, "attenuation",
        )
    return math.log1p(sinr(link, active, positions, phys))


def _check_structure(tx: np.ndarray, rx: np.ndarray) -> bool:
    """Raise on duplicated transmitters; return False on a half-duplex violation."""
    if len(np.unique(tx)) != len(tx):
        raise MalformedSchedule("a transmitter appears in more than one link")
    return not np.intersect1d(tx, rx).size


def protocol_ok_vector(tx, rx, positions, p: ProtocolParams) -> np.ndarray:
    """Per-link protocol compliance against all other transmitters in the set."""
    tx = np.asarray(tx, dtype=np.int64)
    rx = np.asarray(rx, dtype=np.int64)
    if len(tx) == 0:
        return np.zeros(0, dtype=bool)
    pos = np.asarray(positions, dtype=float)
    diff = pos[rx][:, None, :] - pos[tx][None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    own = np.arange(len(tx))
    in_range = d2[own, own] <= (p.range * (1 + _EPS)) ** 2
    d2[own, own] = np.inf
    clear = d2.min(axis=1) >= (p.exclusion * (1 - _EPS)) ** 2
    return in_range & clear


def feasible_arrays(tx, rx, positions, model: Model) -> bool:
    tx = np.asarray(tx, dtype=np.int64)
    rx = np.asarray(rx, dtype=np.int64)
    if len(tx) == 0:
        return True
    if not _check_structure(tx, rx):
        return False
    if isinstance(model, ProtocolParams):
        return bool(protocol_ok_vector(tx, rx, positions, model).all())
    s = sinr_vector(tx, rx, positions, model)
    return bool(np.all(s >= model.sinr_threshold * (1 - _EPS)))


def feasible_set(links: Sequence[Link], positions, model: Model) -> bool:
    """Whether all ``links`` can be active in the same slot.

    Broadcast links are checked against their designated receiver; the
    broadcast audience is given by :func:`broadcast_receivers`.
    """
    tx = np.array([l.tx for l in links], dtype=np.int64)
    rx = np.array([l.rx for l in links], dtype=np.int64)
    return feasible_arrays(tx, rx, positions, model)


def broadcast_receivers(tx: int, active_tx: Sequence[int], positions, p: ProtocolParams) -> np.ndarray:
    """Nodes that decode a broadcast from ``tx`` while ``active_tx`` all transmit."""
    pos = np.asarray(positions, dtype=float)
    d_own = np.hypot(*(pos - pos[tx]).T)
    ok = d_own <= p.range * (1 + _EPS)
    others = [k for k in active_tx if k != tx]
    if others:
        d_oth = np.hypot(*(pos[:, None, :] - pos[others][None, :, :]).transpose(2, 0, 1))
        ok &= d_oth.min(axis=1) >= p.exclusion * (1 - _EPS)
    ok[list(active_tx) + [tx]] = False
    return np.flatnonzero(ok)


def transmitter_ok(tx, receivers, positions, model: Model) -> np.ndarray:
    """Per-transmitter verdict for a slot where every node in ``tx`` transmits.

    ``receivers[k]`` lists the intended receivers of ``tx[k]`` (several for a
    broadcast). A transmitter passes iff every one of its receivers decodes
    it and none of them is itself transmitting.
    """
    tx = np.asarray(tx, dtype=np.int64)
    if len(tx) == 0:
        return np.zeros(0, dtype=bool)
    owner = np.concatenate([np.full(len(r), k, dtype=np.int64) for k, r in enumerate(receivers)])
    rx = np.concatenate([np.asarray(r, dtype=np.int64) for r in receivers])
    ok = np.ones(len(tx), dtype=bool)
    if len(rx) == 0:
        return ok
    pos = np.asarray(positions, dtype=float)
    diff = pos[rx][:, None, :] - pos[tx][None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    rows = np.arange(len(rx))
    own = d2[rows, owner]
    busy = np.isin(rx, tx)
    if isinstance(model, ProtocolParams):
        d2[rows, owner] = np.inf
        pair_ok = (own <= (model.range * (1 + _EPS)) ** 2) & (
            d2.min(axis=1) >= (model.exclusion * (1 - _EPS)) ** 2)
    else:
        cross = d2.copy()
        cross[rows, owner] = np.inf
        if np.any(cross == 0):
            raise SingularGeometry("a receiver coincides with an interfering transmitter")
        g = _gain(d2, model)
        signal = model.power * g[rows, owner]
        g[rows, owner] = 0.0
        interf = model.power * g.sum(axis=1)
        if model.gain_model == "power-law":
            interf = interf / model.processing_gain
        with np.errstate(divide="ignore"):
            pair_ok = signal / (model.noise + interf) >= model.sinr_threshold * (1 - _EPS)
    pair_ok &= ~busy
    np.logical_and.at(ok, owner, pair_ok)
    return ok
