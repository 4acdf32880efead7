"""Scenario risk characteristics: VaR, CVaR, standard deviation.

Sign convention: entries of a loss distribution are losses, positive numbers
are losses. All estimators are empirical (no distributional assumption).
VaR uses the lower inverse-CDF convention: the ceil(level * n)-th smallest
loss; CVaR averages the tail at or above that threshold.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDistribution, InsufficientData, InvalidArgument


@dataclass(frozen=True)
class PnlDistribution:
    """Losses of one horizon: loss = base_price - scenario price."""

    losses: np.ndarray
    horizon_index: int | None = None
    base_price: float | None = None

    def __post_init__(self):
        losses = np.asarray(self.losses, dtype=np.float64).ravel()
        if losses.size and not np.all(np.isfinite(losses)):
            raise InvalidArgument("losses must be finite")
        losses.flags.writeable = False
        object.__setattr__(self, "losses", losses)

    @classmethod
    def from_prices(cls, base_price: float, prices, horizon_index: int | None = None):
        prices = np.asarray(prices, dtype=np.float64)
        return cls(base_price - prices, horizon_index, base_price)


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise InvalidArgument(f"level must be in (0, 1), got {level}")


def _quantile_index(level: float, n: int) -> int:
    # ceil(level*n) with a guard against float products like 0.95*100
    # landing an ulp above the integer
    k = math.ceil(level * n * (1.0 - 1e-12))
    return min(max(k, 1), n)


def value_at_risk(dist: PnlDistribution, level: float) -> float:
    """Empirical loss quantile (lower inverse-CDF convention)."""
    _check_level(level)
    n = dist.losses.size
    if n == 0:
        raise EmptyDistribution("no losses")
    k = _quantile_index(level, n)
    return float(np.partition(dist.losses, k - 1)[k - 1])


def conditional_value_at_risk(dist: PnlDistribution, level: float) -> float:
    """Mean of the losses at or above the VaR (tail includes the VaR sample)."""
    var = value_at_risk(dist, level)
    tail = dist.losses[dist.losses >= var]
    return float(tail.mean())


def std_dev(dist: PnlDistribution) -> float:
    """Unbiased (n-1) sample standard deviation of the losses."""
    if dist.losses.size < 2:
        raise InsufficientData("standard deviation needs at least 2 samples")
    return float(dist.losses.std(ddof=1))


def risk_summary(dist: PnlDistribution, level: float) -> dict:
    """The per-distribution JSON record emitted by the CLI."""
    return {
        "level": level,
        "var": value_at_risk(dist, level),
        "cvar": conditional_value_at_risk(dist, level),
        "std": std_dev(dist) if dist.losses.size >= 2 else None,
        "n": int(dist.losses.size),
    }
