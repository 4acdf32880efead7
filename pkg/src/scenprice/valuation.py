"""Discounting and accumulation of remaining cash flows."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgument
from .grids import TimeGrid
from .products import CashFlowTable


class DiscountBase(str, Enum):
    # discount every remaining flow to the valuation time t (price in t-money)
    VALUATION_TIME = "valuation_time"
    # discount every remaining flow to the first grid time
    INITIAL_TIME = "initial_time"


@dataclass(frozen=True)
class DiscountModel:
    """Deterministic flat short rate, continuous compounding.

    The factor API takes (t_from, t_to) so path-dependent curves can slot in
    later without signature changes; only the flat model ships.
    """

    rate: float
    kind: str = "flat"

    def __post_init__(self):
        if self.kind != "flat":
            raise InvalidArgument(f"unsupported discount model kind {self.kind!r}")
        if not math.isfinite(self.rate):
            raise InvalidArgument("discount rate must be finite")


def discount_factor(model: DiscountModel, t_from: float, t_to: float) -> float:
    """d(t_from, t_to) = exp(-rate * (t_to - t_from)); requires t_from <= t_to."""
    if t_from > t_to:
        raise InvalidArgument(f"t_from {t_from} exceeds t_to {t_to}")
    return math.exp(-model.rate * (t_to - t_from))


@dataclass(frozen=True)
class ValueTable:
    """Discounted remaining value per (time, scenario) on the active region."""

    grid: TimeGrid
    values: np.ndarray  # (n_times, n_scenarios)
    activation: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        act = np.asarray(self.activation, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] != len(self.grid) or act.shape != (v.shape[1],):
            raise InvalidArgument("value table shape does not match grid/scenarios")
        v.flags.writeable = False
        act.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "activation", act)


def accumulate_remaining_value(cashflows: CashFlowTable, model: DiscountModel,
                               base: DiscountBase = DiscountBase.VALUATION_TIME) -> ValueTable:
    """Sum the discounted remaining flows at every active (time, scenario).

    VALUATION_TIME discounts each flow to the valuation time (backward
    recursion ``V_k = C_k + d(t_k, t_{k+1}) V_{k+1}``); INITIAL_TIME
    discounts every flow to the first grid time instead. With a zero rate
    the two coincide.
    """
    base = DiscountBase(base)
    times = cashflows.grid.times
    C = cashflows.values
    T, n = C.shape
    V = np.full((T, n), np.nan, dtype=np.float64)
    active = np.isfinite(C)
    last = np.where(active[T - 1], C[T - 1], np.nan)
    if base == DiscountBase.INITIAL_TIME:
        last = last * discount_factor(model, float(times[0]), float(times[T - 1]))
    V[T - 1] = last
    for k in range(T - 2, -1, -1):
        if base == DiscountBase.VALUATION_TIME:
            step = discount_factor(model, float(times[k]), float(times[k + 1]))
            row = C[k] + step * V[k + 1]
        else:
            d0 = discount_factor(model, float(times[0]), float(times[k]))
            row = d0 * C[k] + V[k + 1]
        V[k] = np.where(active[k], row, np.nan)
    return ValueTable(cashflows.grid, V, cashflows.activation)
