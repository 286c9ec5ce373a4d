"""Closed-form bound calculators and the throughput identity eta = Y W / k."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

from .errors import InvalidInput, MetricsUndefined

ORDER_LABEL = "order estimate"


def theorem1_estimate(Y: float, k: float, W: float = 1.0) -> float:
    """Transport capacity implied by mean concurrency ``Y``, mean hop count ``k`` and link rate ``W``."""
    if not k >= 1:
        raise InvalidInput(f"mean hop count must be >= 1, got {k}")
    if Y < 0:
        raise InvalidInput("Y must be nonnegative")
    if not W > 0:
        raise InvalidInput("W must be positive")
    return Y * W / k


def identity_residual(metrics) -> float:
    """Relative gap ``|eta - Y W / k| / eta`` for any object with eta, Y, k, W."""
    if not metrics.eta > 0:
        raise MetricsUndefined("residual undefined for zero throughput")
    return abs(metrics.eta - theorem1_estimate(metrics.Y, metrics.k, metrics.W)) / metrics.eta


def packing_upper_bound(guard: float, r: float, area: float = 1.0) -> float:
    """Most simultaneous protocol-model transmissions: each one clears a quarter disk of radius guard*r/2."""
    if not guard > 0:
        raise InvalidInput("guard must be positive under the protocol model")
    if not r > 0:
        raise InvalidInput("range must be positive")
    return 16.0 * area / (math.pi * guard**2 * r**2)


def corner_k_min(r: float, side: float = 1.0) -> float:
    """Weak lower bound on the mean hop count from corner-to-corner pairs."""
    if not r > 0:
        raise InvalidInput("range must be positive")
    return math.sqrt(2) * side / (256.0 * r)


def gk_lambda_upper(n: int, r: float, guard: float, W: float = 1.0) -> float:
    """Per-node throughput ceiling for a random network under the protocol model."""
    if n < 2:
        raise InvalidInput("n must be at least 2")
    if not r > 0 or not guard > 0:
        raise InvalidInput("range and guard must be positive")
    return 2048.0 * math.sqrt(2) / (math.pi * guard**2) * W / (n * r)


def hybrid_eta_estimate(n: int, M: int, r: Optional[float] = None, W: float = 1.0,
                        regime: str = "fixed-range") -> float:
    """Unit-constant order estimate of the hybrid network's transport capacity.

    ``r`` is accepted for symmetry with the other calculators; the order
    estimates depend on it only through the regime.
    """
    if M < 1:
        raise InvalidInput("need at least one infrastructure node")
    if regime == "fixed-range":
        if n < 2:
            raise InvalidInput("n must be at least 2")
        ad_hoc = n / math.log(n)
        return (math.sqrt(ad_hoc) + min(M, ad_hoc)) * W
    if regime == "shrunk-range":
        return M * W
    raise InvalidInput(f"unknown regime {regime!r}")


@dataclass
class BoundReport:
    n: int
    r: float
    guard: Optional[float]
    W: float
    M: int = 0
    area: float = 1.0
    packing_Y_max: Optional[float] = None
    corner_k_min: Optional[float] = None
    gk_lambda_upper: Optional[float] = None
    hybrid_eta_estimate: Optional[float] = None
    hybrid_regime: Optional[str] = None

    @classmethod
    def compute(cls, n, r, guard=None, W=1.0, M=0, area=1.0, regime="fixed-range"):
        rep = cls(n=n, r=r, guard=guard, W=W, M=M, area=area)
        rep.corner_k_min = corner_k_min(r, math.sqrt(area))
        if guard is not None:
            rep.packing_Y_max = packing_upper_bound(guard, r, area)
            rep.gk_lambda_upper = gk_lambda_upper(n, r, guard, W)
        if M:
            rep.hybrid_eta_estimate = hybrid_eta_estimate(n, M, r, W, regime)
            rep.hybrid_regime = regime
        return rep

    def to_dict(self) -> dict:
        d = asdict(self)
        d["provenance"] = {
            "packing_Y_max": "16 area / (pi guard^2 r^2)",
            "corner_k_min": "sqrt(2) side / (256 r)",
            "gk_lambda_upper": "2048 sqrt(2) / (pi guard^2) * W / (n r)",
            "hybrid_eta_estimate": ORDER_LABEL + ", unit constants",
        }
        return d
