"""Product payoffs and path-dependent state.

The path state A is the minimal per-path memory that, together with the
current risk factors, suffices to price the product: the running average for
Asian options, the knock-out flag for barrier options, nothing for European
options. State tables are computed by an initialization rule at each path's
activation time followed by a per-fixing update, exactly mirroring the
per-scenario recurrence used for single states.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import GridMismatch, InvalidArgument, UninitializableForkState
from .grids import TimeGrid
from .scenarios import ScenarioKind, ScenarioSet, match_physical_path


class ProductKind(str, Enum):
    EUROPEAN_CALL = "european_call"
    EUROPEAN_PUT = "european_put"
    ASIAN_CALL = "asian_call"
    ASIAN_PUT = "asian_put"
    BARRIER_KNOCK_OUT_CALL = "barrier_knock_out_call"


_ASIAN = (ProductKind.ASIAN_CALL, ProductKind.ASIAN_PUT)
_BARRIER = (ProductKind.BARRIER_KNOCK_OUT_CALL,)


@dataclass(frozen=True)
class ProductSpec:
    """A payoff definition on the risk-neutral grid.

    maturity_index indexes the risk-neutral grid; the fixing schedule is
    every grid time from a path's first fixing up to maturity. Barrier
    products monitor at fixings only (discrete monitoring, up-and-out:
    knocked out once the underlying is at or above barrier_level).
    """

    kind: ProductKind
    strike: float
    maturity_index: int
    underlying_factor: int = 0
    barrier_level: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ProductKind(self.kind))
        if not np.isfinite(self.strike) or self.strike <= 0:
            raise InvalidArgument("product.strike must be positive")
        if int(self.maturity_index) < 0:
            raise InvalidArgument("product.maturity_index must be non-negative")
        if int(self.underlying_factor) < 0:
            raise InvalidArgument("product.underlying_factor must be non-negative")
        if self.kind in _BARRIER:
            if self.barrier_level is None or not np.isfinite(self.barrier_level) \
                    or self.barrier_level <= 0:
                raise InvalidArgument("product.barrier_level must be positive")
        elif self.barrier_level is not None:
            raise InvalidArgument("product.barrier_level only applies to barrier products")
        object.__setattr__(self, "maturity_index", int(self.maturity_index))
        object.__setattr__(self, "underlying_factor", int(self.underlying_factor))

    @property
    def state_dim(self) -> int:
        """Dimension of the path state: 1 for Asian (running average) and
        barrier (alive flag) products, 0 for European ones."""
        if self.kind in _ASIAN or self.kind in _BARRIER:
            return 1
        return 0

    @property
    def is_path_dependent(self) -> bool:
        return self.state_dim > 0


@dataclass(frozen=True)
class PathStateTable:
    """Path state per (time, scenario), defined on the active region only."""

    grid: TimeGrid
    values: np.ndarray  # (n_times, n_scenarios, state_dim)
    activation: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        act = np.asarray(self.activation, dtype=np.int64)
        if v.ndim != 3 or v.shape[0] != len(self.grid) or act.shape != (v.shape[1],):
            raise InvalidArgument("state table shape does not match grid/scenarios")
        v.flags.writeable = False
        act.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "activation", act)

    @property
    def n_scenarios(self) -> int:
        return int(self.values.shape[1])

    @property
    def state_dim(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True)
class CashFlowTable:
    """Cash amounts per (time, scenario): zero where no flow occurs, NaN
    before activation (absent)."""

    grid: TimeGrid
    values: np.ndarray  # (n_times, n_scenarios)
    activation: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        act = np.asarray(self.activation, dtype=np.int64)
        if v.ndim != 2 or v.shape[0] != len(self.grid) or act.shape != (v.shape[1],):
            raise InvalidArgument("cash flow table shape does not match grid/scenarios")
        v.flags.writeable = False
        act.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "activation", act)


def init_state(product: ProductSpec, t0: float, x0) -> tuple:
    """Initial path state from the first fixing.

    Asian: the running average equals the underlying's value (one fixing
    absorbed). Barrier: alive iff the underlying starts strictly below the
    barrier. European: empty.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    spot = float(x0[product.underlying_factor])
    if product.kind in _ASIAN:
        return (spot,)
    if product.kind in _BARRIER:
        return (1.0 if spot < product.barrier_level else 0.0,)
    return ()


def update_state(product: ProductSpec, prev_state: tuple, t_i: float, x_i,
                 fixing_count: int) -> tuple:
    """Advance the path state by one fixing.

    fixing_count is the number of fixings already absorbed into prev_state
    (>= 1). The Asian update keeps the exact recurrence
    ``new = (count * prev + x) / (count + 1)``; the barrier flag clears
    permanently once breached.
    """
    if fixing_count < 1:
        raise InvalidArgument("fixing_count must be at least 1")
    x_i = np.atleast_1d(np.asarray(x_i, dtype=np.float64))
    spot = float(x_i[product.underlying_factor])
    if product.kind in _ASIAN:
        (prev,) = prev_state
        return ((fixing_count * prev + spot) / (fixing_count + 1),)
    if product.kind in _BARRIER:
        (alive,) = prev_state
        return (alive if spot < product.barrier_level else 0.0,)
    return ()


@dataclass(frozen=True)
class ForkInitializer:
    """Initial states for paths forked mid-grid from a physical scenario.

    method 'copy' takes the physical state at the fork time bit-for-bit;
    method 'replay' re-runs the state recurrence along the donor physical
    path's prefix (numerically identical to 'copy' by construction, kept as
    an independently computed route). The donor is located by exact value
    match at the fork time; no match raises UninitializableForkState.
    """

    physical: ScenarioSet
    physical_states: PathStateTable
    method: str = "copy"

    def __post_init__(self):
        if self.method not in ("copy", "replay"):
            raise InvalidArgument("fork initializer method must be 'copy' or 'replay'")

    def initial_state(self, product: ProductSpec, riskneutral: ScenarioSet,
                      scenario: int) -> tuple[tuple, int]:
        """Returns (state tuple, fixings absorbed) at the scenario's activation."""
        p_scen, p_idx = match_physical_path(riskneutral, scenario, self.physical)
        count = p_idx + 1
        if self.method == "copy":
            return tuple(self.physical_states.values[p_idx, p_scen]), count
        state = init_state(product, float(self.physical.grid.times[0]),
                           self.physical.values[0, p_scen])
        for k in range(1, p_idx + 1):
            state = update_state(product, state, float(self.physical.grid.times[k]),
                                 self.physical.values[k, p_scen], k)
        return state, count


def compute_state_table(product: ProductSpec, scenarios: ScenarioSet,
                        initializer: ForkInitializer | None = None) -> PathStateTable:
    """Path state over every active (time, scenario) cell.

    Paths active from the first grid time are initialized by `init_state`;
    paths activating later are fork paths and require `initializer`.
    """
    T = len(scenarios.grid)
    n = scenarios.n_scenarios
    s_a = product.state_dim
    if s_a == 0:
        return PathStateTable(scenarios.grid, np.empty((T, n, 0)), scenarios.activation)

    spot = scenarios.values[:, :, product.underlying_factor]  # (T, n)
    act = scenarios.activation
    init_val = np.empty(n, dtype=np.float64)
    init_count = np.empty(n, dtype=np.int64)
    for w in range(n):
        a = int(act[w])
        if a == 0:
            state = init_state(product, float(scenarios.grid.times[0]), scenarios.values[0, w])
            count = 1
        else:
            if initializer is None:
                raise UninitializableForkState(
                    f"scenario {w} activates mid-grid and no fork initializer is configured"
                )
            state, count = initializer.initial_state(product, scenarios, w)
        init_val[w] = state[0]
        init_count[w] = count

    kern = _kernels.get()
    if product.kind in _ASIAN:
        table = kern.running_average(np.ascontiguousarray(spot), act, init_val, init_count)
    else:
        table = kern.barrier_alive(np.ascontiguousarray(spot), act, init_val,
                                   float(product.barrier_level))
    return PathStateTable(scenarios.grid, table[:, :, None], scenarios.activation)


def terminal_payoff(product: ProductSpec, spot_at_maturity: np.ndarray,
                    state_at_maturity: np.ndarray) -> np.ndarray:
    """Payoff per scenario from maturity spot and state."""
    k = product.strike
    s = np.asarray(spot_at_maturity, dtype=np.float64)
    if product.kind == ProductKind.EUROPEAN_CALL:
        return np.maximum(s - k, 0.0)
    if product.kind == ProductKind.EUROPEAN_PUT:
        return np.maximum(k - s, 0.0)
    if product.kind == ProductKind.ASIAN_CALL:
        return np.maximum(state_at_maturity[:, 0] - k, 0.0)
    if product.kind == ProductKind.ASIAN_PUT:
        return np.maximum(k - state_at_maturity[:, 0], 0.0)
    # up-and-out call: pays only if never knocked out
    return np.maximum(s - k, 0.0) * state_at_maturity[:, 0]


def compute_cashflows(product: ProductSpec, scenarios: ScenarioSet,
                      states: PathStateTable) -> CashFlowTable:
    """Cash flow table: a single flow at maturity for all supported products."""
    m = product.maturity_index
    if m >= len(scenarios.grid):
        raise GridMismatch(
            f"maturity index {m} is outside the grid of {len(scenarios.grid)} times"
        )
    if states.n_scenarios != scenarios.n_scenarios or len(states.grid) != len(scenarios.grid):
        raise InvalidArgument("state table does not match the scenario set")
    if np.any(scenarios.activation > m):
        raise InvalidArgument("a scenario activates after product maturity")
    T, n = len(scenarios.grid), scenarios.n_scenarios
    values = np.where(scenarios.active_mask, 0.0, np.nan)
    payoff = terminal_payoff(product, scenarios.values[m, :, product.underlying_factor],
                             states.values[m])
    values[m, :] = payoff
    return CashFlowTable(scenarios.grid, values, scenarios.activation)
