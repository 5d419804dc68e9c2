"""Regulation bids, merit-order clearing and proportional disaggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abstraction import MicrogridAbstraction, NodeCost
from .errors import AllMileagesZero, InsufficientCapacity, ZeroCapacity

CAP_TOL = 1e-9


@dataclass(frozen=True)
class RegulationBid:
    aggregator: int
    capacity: float
    mileage: float
    capacity_price: float
    k: float = 1.0
    market: str = "up"

    def __post_init__(self):
        if self.capacity < 0 or self.mileage < 0 or self.capacity_price < 0:
            raise ValueError("bid quantities must be nonnegative")
        if not np.isfinite(self.capacity_price):
            raise ValueError("capacity price must be finite")

    def to_json(self) -> dict:
        return dict(aggregator=self.aggregator, capacity=self.capacity, mileage=self.mileage,
                    capacity_price=self.capacity_price, k=self.k, market=self.market)

    @classmethod
    def from_json(cls, d: dict) -> "RegulationBid":
        return cls(int(d["aggregator"]), float(d["capacity"]), float(d["mileage"]),
                   float(d["capacity_price"]), float(d.get("k", 1.0)), d.get("market", "up"))


def make_bid(abs_: MicrogridAbstraction, cost: NodeCost | None = None, k: float = 1.0,
             aggregator: int = 0, market: str = "up") -> RegulationBid:
    """Capacity, mileage and capacity price from an abstraction.

    The up bid uses the stored maximum-generation profile g_up.  The down bid
    mirrors it at the other end of the interval using the sampled f and R.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if market == "up":
        cap = abs(abs_.up)
        if cap <= CAP_TOL:
            raise ZeroCapacity("no up-regulation capacity to bid")
        h_up = cost(abs_.g_up) if cost is not None else abs_.cost_up
        return RegulationBid(aggregator, cap, k * abs_.ramp_up, max(h_up, 0.0) / cap, k, market)
    if market == "down":
        cap = abs_.down
        if cap <= CAP_TOL:
            raise ZeroCapacity("no down-regulation capacity to bid")
        return RegulationBid(aggregator, cap, k * float(abs_.R(cap)),
                             max(float(abs_.f(cap)), 0.0) / cap, k, market)
    raise ValueError(f"unknown market '{market}'")


@dataclass(frozen=True)
class MarketAward:
    aggregators: tuple[int, ...]
    cleared_capacity: np.ndarray
    cleared_mileage: np.ndarray
    clearing_price: float
    market: str = "up"

    def to_json(self) -> dict:
        return {
            "market": self.market,
            "clearing_price": self.clearing_price,
            "awards": [{"aggregator": a, "capacity": float(c), "mileage": float(m)}
                       for a, c, m in zip(self.aggregators, self.cleared_capacity, self.cleared_mileage)],
        }

    @classmethod
    def from_json(cls, d: dict) -> "MarketAward":
        aw = d["awards"]
        return cls(tuple(int(a["aggregator"]) for a in aw),
                   np.array([a["capacity"] for a in aw], dtype=float),
                   np.array([a["mileage"] for a in aw], dtype=float),
                   float(d["clearing_price"]), d.get("market", "up"))


def clear_market(bids, requirement: float) -> MarketAward:
    """Merit order by capacity price (ties by aggregator id), uniform marginal price."""
    bids = list(bids)
    if not bids:
        raise InsufficientCapacity("no bids")
    total = sum(b.capacity for b in bids)
    if total < requirement - CAP_TOL * max(1.0, requirement):
        raise InsufficientCapacity(f"offered {total} kW < required {requirement} kW")
    cleared = np.zeros(len(bids))
    price = 0.0
    remaining = max(float(requirement), 0.0)
    for i in sorted(range(len(bids)), key=lambda i: (bids[i].capacity_price, bids[i].aggregator)):
        if remaining <= 0:
            break
        take = min(bids[i].capacity, remaining)
        if take <= 0:
            continue
        cleared[i] = take
        remaining -= take
        price = bids[i].capacity_price
    caps = np.array([b.capacity for b in bids])
    miles = np.array([b.mileage for b in bids])
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(caps > 0, cleared / np.where(caps > 0, caps, 1.0), 0.0)
    return MarketAward(tuple(b.aggregator for b in bids), cleared, miles * frac, price,
                       bids[0].market)


@dataclass(frozen=True)
class Allocation:
    setpoints: np.ndarray
    residual: float  # requested minus allocated


def current_practice_allocation(award: MarketAward, agc_total: float, x_prev=None,
                                capacity=None) -> Allocation:
    """Split agc_total in proportion to cleared mileage, redistributing overshoot.

    Setpoints above a resource's capacity are capped and the excess goes to
    the uncapped resources in proportion to their mileage; each round caps at
    least one resource, so at most N rounds run.  ``x_prev`` is accepted for
    interface symmetry; the rule itself is memoryless.
    """
    w = np.asarray(award.cleared_mileage, dtype=float)
    cap = np.asarray(award.cleared_capacity if capacity is None else capacity, dtype=float)
    if w.size == 0 or not np.any(w > 0):
        raise AllMileagesZero("every cleared mileage is zero")
    sign = -1.0 if agc_total < 0 else 1.0
    total = abs(float(agc_total))
    x = total * w / w.sum()
    fixed = np.zeros(w.size, dtype=bool)
    residual = 0.0
    for _ in range(w.size + 1):
        over = (x > cap) & ~fixed
        if not np.any(over):
            break
        excess = float(np.sum(x[over] - cap[over]))
        x[over] = cap[over]
        fixed |= over
        free = ~fixed & (w > 0)
        if not np.any(free):
            residual = excess
            break
        x[free] += excess * w[free] / w[free].sum()
    # residual absorbs rounding so the books balance
    residual = total - float(np.sum(x)) if residual > 0 else residual
    return Allocation(sign * x, sign * residual)
