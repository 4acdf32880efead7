"""Independent reference prices: Black-Scholes closed forms and brute-force
nested Monte Carlo (the quadratic-cost baseline the smoothing pipeline
replaces, kept as an oracle and benchmark counterpart)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InvalidArgument, ShapeError
from .grids import TimeGrid
from .products import ProductKind, ProductSpec, terminal_payoff
from .scenarios import GbmParams
from .valuation import DiscountModel, discount_factor

# Normal CDF route, recorded in reports: the platform error-function
# primitive (C library erf via math.erf), |error| well below 1e-12.
NORMAL_CDF_IMPL = "math.erf"


def norm_cdf(x):
    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))
    return float(out) if out.ndim == 0 else out


def _check_bs_inputs(spot, strike, volatility, time_to_maturity):
    if np.any(np.asarray(spot) <= 0):
        raise InvalidArgument("spot must be positive")
    if strike <= 0:
        raise InvalidArgument("strike must be positive")
    if volatility <= 0:
        raise InvalidArgument("volatility must be positive")
    if time_to_maturity <= 0:
        raise InvalidArgument("time_to_maturity must be positive")


def black_scholes_call(spot, strike: float, rate: float, volatility: float,
                       time_to_maturity: float):
    """Black-Scholes European call value (scalar or vectorized over spot)."""
    _check_bs_inputs(spot, strike, volatility, time_to_maturity)
    s = np.asarray(spot, dtype=np.float64)
    sq = volatility * math.sqrt(time_to_maturity)
    d1 = (np.log(s / strike) + (rate + 0.5 * volatility**2) * time_to_maturity) / sq
    d2 = d1 - sq
    out = s * norm_cdf(d1) - strike * math.exp(-rate * time_to_maturity) * norm_cdf(d2)
    return float(out) if out.ndim == 0 else out


def black_scholes_put(spot, strike: float, rate: float, volatility: float,
                      time_to_maturity: float):
    """Black-Scholes European put value."""
    _check_bs_inputs(spot, strike, volatility, time_to_maturity)
    s = np.asarray(spot, dtype=np.float64)
    sq = volatility * math.sqrt(time_to_maturity)
    d1 = (np.log(s / strike) + (rate + 0.5 * volatility**2) * time_to_maturity) / sq
    d2 = d1 - sq
    out = strike * math.exp(-rate * time_to_maturity) * norm_cdf(-d2) - s * norm_cdf(-d1)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NestedMcConfig:
    """Inner-simulation setup for the nested baseline."""

    inner_paths: int
    seed: int
    gbm: GbmParams

    def __post_init__(self):
        if int(self.inner_paths) < 1:
            raise InvalidArgument("inner_paths must be at least 1")
        object.__setattr__(self, "inner_paths", int(self.inner_paths))


@dataclass(frozen=True)
class NestedMcResult:
    estimate: float
    stderr: float
    n_paths: int
    n_steps: int  # simulated path-steps, for operation counting


def nested_mc_price(t_index: int, x, state: tuple, product: ProductSpec,
                    grid: TimeGrid, config: NestedMcConfig,
                    discount: DiscountModel) -> NestedMcResult:
    """Price one (time, factors, state) cell by a fresh inner simulation.

    Launches `inner_paths` GBM paths from `x` over the grid times from
    t_index to maturity, continues the path state from `state`, and returns
    the sample mean of discounted payoffs with its standard error (both in
    t_index-money).
    """
    m_idx = product.maturity_index
    if t_index > m_idx:
        raise InvalidArgument("cell time is after product maturity")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    t_now = float(grid.times[t_index])
    t_mat = float(grid.times[m_idx])
    df = discount_factor(discount, t_now, t_mat)
    steps = m_idx - t_index

    if steps == 0:
        payoff = terminal_payoff(product, x[None, product.underlying_factor],
                                 np.asarray(state, dtype=np.float64).reshape(1, -1))
        return NestedMcResult(float(payoff[0]), 0.0, config.inner_paths, 0)

    n = config.inner_paths
    s = config.gbm.n_factors
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    z = rng.standard_normal((steps, n, s))
    if config.gbm.correlation is not None:
        z = z @ config.gbm.mixing_matrix().T
    dts = np.diff(grid.times[t_index:m_idx + 1])
    drift = (config.gbm.drift - 0.5 * config.gbm.volatility**2)[None, :] * dts[:, None]
    vol = config.gbm.volatility[None, :] * np.sqrt(dts)[:, None]
    starts = np.broadcast_to(x, (n, s)).copy()
    paths = _kernels.get().gbm_paths(starts, np.ascontiguousarray(z), drift, vol)
    spots = paths[:, :, product.underlying_factor]  # (steps+1, n)

    if product.kind in (ProductKind.ASIAN_CALL, ProductKind.ASIAN_PUT):
        # direct-mean continuation: (count*avg + sum of new fixings) / total
        count = t_index + 1
        avg0 = float(state[0])
        total = count * avg0 + spots[1:].sum(axis=0)
        state_T = (total / (count + steps))[:, None]
    elif product.kind == ProductKind.BARRIER_KNOCK_OUT_CALL:
        alive0 = float(state[0])
        survived = np.all(spots[1:] < product.barrier_level, axis=0)
        state_T = (alive0 * survived.astype(np.float64))[:, None]
    else:
        state_T = np.zeros((n, 0))
    payoff = terminal_payoff(product, spots[-1], state_T)
    est = df * float(payoff.mean())
    se = df * float(payoff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return NestedMcResult(est, se, n, steps * n)


@dataclass(frozen=True)
class CompareReport:
    """Deterministic error report between a price table and oracle prices."""

    max_abs_error: float
    rmse: float
    n_cells: int
    z_scores: np.ndarray | None
    normal_cdf_impl: str = NORMAL_CDF_IMPL

    def to_dict(self) -> dict:
        return {
            "max_abs_error": self.max_abs_error,
            "rmse": self.rmse,
            "n_cells": self.n_cells,
            "max_abs_z": float(np.max(np.abs(self.z_scores)))
            if self.z_scores is not None and self.z_scores.size else None,
            "normal_cdf_impl": self.normal_cdf_impl,
        }


def compare(prices: np.ndarray, oracle_prices: np.ndarray,
            oracle_stderr: np.ndarray | None = None) -> CompareReport:
    """Max-abs error, RMSE and, where standard errors are available,
    per-cell z-scores of a price table against oracle values."""
    prices = np.asarray(prices, dtype=np.float64)
    oracle_prices = np.asarray(oracle_prices, dtype=np.float64)
    if prices.shape != oracle_prices.shape:
        raise ShapeError(f"shape mismatch: {prices.shape} vs {oracle_prices.shape}")
    err = prices - oracle_prices
    z = None
    if oracle_stderr is not None:
        oracle_stderr = np.asarray(oracle_stderr, dtype=np.float64)
        if oracle_stderr.shape != prices.shape:
            raise ShapeError("stderr shape does not match prices")
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(oracle_stderr > 0, err / oracle_stderr, 0.0)
    return CompareReport(
        max_abs_error=float(np.max(np.abs(err))) if err.size else 0.0,
        rmse=float(np.sqrt(np.mean(err**2))) if err.size else 0.0,
        n_cells=int(err.size),
        z_scores=z,
    )
