"""Physical and risk-neutral scenario sets.

A scenario set couples a time grid with a dense ``(time, scenario, factor)``
value array and a per-scenario activation index: path ``w`` carries values
from its activation time onward, earlier cells are absent (stored as NaN and
never exposed as data). Physical sets are always active from the first grid
time; risk-neutral sets may contain paths forked mid-grid from a physical
scenario.

Three generation modes are provided, all exact log-Euler geometric Brownian
motion with one independent random substream per scenario (so path ``w`` does
not depend on how many scenarios are requested):

* fixed start: every path starts at the same value at the first grid time,
* dispersed start: one path per caller-supplied initial value,
* forked: paths branch off a physical scenario at a mid-grid time, copying
  the physical value bit-exactly.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    GridMismatch,
    InvalidArgument,
    InvalidTimeGrid,
    InvalidValue,
    MalformedScenarioData,
    UninitializableForkState,
)
from .grids import TimeGrid


class ScenarioKind(str, Enum):
    PHYSICAL = "physical"
    RISK_NEUTRAL = "risk_neutral"


NO_FORK = -1


@dataclass(frozen=True)
class ScenarioSet:
    """Immutable set of scenario paths over a common time grid.

    Attributes
    ----------
    grid : TimeGrid
    values : ndarray, shape (n_times, n_scenarios, n_factors)
        Risk-factor values; NaN before a scenario's activation index.
    activation : ndarray, shape (n_scenarios,), int64
        First grid index at which each path is defined (the map I).
    kind : ScenarioKind
    fork_origin : ndarray, shape (n_scenarios, 2), int64, optional
        Provenance of forked paths as (physical scenario index, physical
        time index); (-1, -1) for paths that were not forked.
    """

    grid: TimeGrid
    values: np.ndarray
    activation: np.ndarray
    kind: ScenarioKind
    fork_origin: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        act = np.asarray(self.activation, dtype=np.int64)
        if v.ndim != 3:
            raise InvalidArgument("values must have shape (n_times, n_scenarios, n_factors)")
        if v.shape[0] != len(self.grid):
            raise InvalidTimeGrid("values time axis does not match the grid")
        if act.shape != (v.shape[1],):
            raise InvalidArgument("one activation index per scenario required")
        if v.shape[1] < 1 or v.shape[2] < 1:
            raise InvalidArgument("need at least one scenario and one factor")
        if np.any(act < 0) or np.any(act >= v.shape[0]):
            raise InvalidArgument("activation index outside the grid")
        if self.kind == ScenarioKind.PHYSICAL and np.any(act != 0):
            raise InvalidArgument("physical scenarios must be active from the first grid time")
        mask = self.active_mask_for(act, v.shape[0])
        if not np.all(np.isfinite(v[mask])):
            raise InvalidValue("non-finite value inside the active region")
        origin = self.fork_origin
        if origin is None:
            origin = np.full((v.shape[1], 2), NO_FORK, dtype=np.int64)
        else:
            origin = np.asarray(origin, dtype=np.int64)
            if origin.shape != (v.shape[1], 2):
                raise InvalidArgument("fork_origin must have shape (n_scenarios, 2)")
        for a in (v, act, origin):
            a.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "activation", act)
        object.__setattr__(self, "fork_origin", origin)

    @staticmethod
    def active_mask_for(act: np.ndarray, n_times: int) -> np.ndarray:
        return np.arange(n_times)[:, None] >= act[None, :]

    @property
    def n_scenarios(self) -> int:
        return int(self.values.shape[1])

    @property
    def n_factors(self) -> int:
        return int(self.values.shape[2])

    @property
    def active_mask(self) -> np.ndarray:
        """(n_times, n_scenarios) boolean mask of defined cells."""
        return self.active_mask_for(self.activation, len(self.grid))

    def value_at(self, time_index: int, scenario: int) -> np.ndarray:
        """Factor vector at an active cell; InvalidArgument if inactive."""
        if time_index < self.activation[scenario]:
            raise InvalidArgument(
                f"scenario {scenario} is not active at time index {time_index}"
            )
        return self.values[time_index, scenario]

    def is_forked(self) -> np.ndarray:
        return self.fork_origin[:, 0] != NO_FORK


@dataclass(frozen=True)
class GbmParams:
    """Geometric Brownian motion parameters (per factor where vectors).

    drift is per year; for risk-neutral sets it is the risk-free rate.
    volatility is per sqrt(year) and must be positive. correlation, when
    given, must be symmetric PSD with unit diagonal; PSD repair is not
    attempted (non-PSD input is an error).
    """

    initial_value: np.ndarray
    drift: np.ndarray
    volatility: np.ndarray
    correlation: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        iv = np.atleast_1d(np.asarray(self.initial_value, dtype=np.float64))
        dr = np.atleast_1d(np.asarray(self.drift, dtype=np.float64))
        vo = np.atleast_1d(np.asarray(self.volatility, dtype=np.float64))
        s = max(iv.size, dr.size, vo.size)
        try:
            iv, dr, vo = (np.broadcast_to(a, (s,)).copy() for a in (iv, dr, vo))
        except ValueError:
            raise InvalidArgument("initial_value/drift/volatility sizes are inconsistent")
        if not (np.all(np.isfinite(iv)) and np.all(np.isfinite(dr)) and np.all(np.isfinite(vo))):
            raise InvalidValue("GBM parameters must be finite")
        if np.any(iv <= 0):
            raise InvalidArgument("initial_value must be positive")
        if np.any(vo <= 0):
            raise InvalidArgument("volatility must be positive")
        corr = self.correlation
        if corr is not None:
            corr = np.asarray(corr, dtype=np.float64)
            if corr.shape != (s, s):
                raise InvalidArgument(f"correlation must be {s}x{s}")
            if not np.allclose(corr, corr.T, atol=1e-12):
                raise InvalidArgument("correlation must be symmetric")
            if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
                raise InvalidArgument("correlation must have unit diagonal")
            corr = 0.5 * (corr + corr.T)
            w = np.linalg.eigvalsh(corr)
            if w.min() < -1e-10 * max(1.0, float(w.max())):
                raise InvalidArgument("correlation matrix is not positive semidefinite")
            corr.flags.writeable = False
        if not (0 <= int(self.seed) < 2**64):
            raise InvalidArgument("seed must fit in an unsigned 64-bit integer")
        for a in (iv, dr, vo):
            a.flags.writeable = False
        object.__setattr__(self, "initial_value", iv)
        object.__setattr__(self, "drift", dr)
        object.__setattr__(self, "volatility", vo)
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def n_factors(self) -> int:
        return int(self.volatility.size)

    def mixing_matrix(self) -> np.ndarray:
        """Factor loading L with L @ L.T = correlation (identity if none).
        Cholesky when positive definite, eigenfactor for the PSD-singular case."""
        if self.correlation is None:
            return np.eye(self.n_factors)
        try:
            return np.linalg.cholesky(self.correlation)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(self.correlation)
            return v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _scenario_normals(params: GbmParams, steps: np.ndarray, stream_offset: int) -> list[np.ndarray]:
    """One (steps[i], s) matrix of standard normals per scenario, each drawn
    from an independent substream of params.seed. Substream i is keyed by the
    global scenario index, so adding scenarios never changes existing paths."""
    n = steps.size
    children = np.random.SeedSequence(params.seed).spawn(stream_offset + n)[stream_offset:]
    s = params.n_factors
    return [
        np.random.Generator(np.random.PCG64(ss)).standard_normal((int(m), s))
        for m, ss in zip(steps, children)
    ]


def _simulate(
    params: GbmParams,
    grid: TimeGrid,
    starts: np.ndarray,
    activation: np.ndarray,
    stream_offset: int = 0,
) -> np.ndarray:
    """Simulate GBM forward from (starts, activation) on the grid.

    Returns the dense (T, n, s) value array with NaN before activation.
    Stepping is the exact per-step GBM transition
    ``S' = S * exp((mu - sigma^2/2) dt + sigma sqrt(dt) Z)``,
    so coarse grids carry no discretization bias.
    """
    T = len(grid)
    n, s = starts.shape
    kern = _kernels.get()
    L = params.mixing_matrix()
    steps = (T - 1) - activation
    z_per_scenario = _scenario_normals(params, steps, stream_offset)
    values = np.full((T, n, s), np.nan, dtype=np.float64)
    for act in np.unique(activation):
        idx = np.nonzero(activation == act)[0]
        m = T - 1 - int(act)
        if m == 0:
            values[act, idx, :] = starts[idx]
            continue
        z = np.stack([z_per_scenario[i] for i in idx], axis=1)  # (m, len(idx), s)
        if params.correlation is not None:
            z = z @ L.T
        dts = np.diff(grid.times[act:])
        drift = (params.drift - 0.5 * params.volatility**2)[None, :] * dts[:, None]
        vol = params.volatility[None, :] * np.sqrt(dts)[:, None]
        values[act:, idx, :] = kern.gbm_paths(
            np.ascontiguousarray(starts[idx]), np.ascontiguousarray(z), drift, vol
        )
    return values


def generate_gbm_fixed(params: GbmParams, grid: TimeGrid, n_scenarios: int,
                       stream_offset: int = 0) -> ScenarioSet:
    """Risk-neutral paths all starting at params.initial_value at the first
    grid time. Identical (params, grid, n_scenarios) give bit-identical output."""
    if n_scenarios < 1:
        raise InvalidArgument("n_scenarios must be at least 1")
    starts = np.broadcast_to(params.initial_value, (n_scenarios, params.n_factors)).copy()
    activation = np.zeros(n_scenarios, dtype=np.int64)
    values = _simulate(params, grid, starts, activation, stream_offset)
    return ScenarioSet(grid, values, activation, ScenarioKind.RISK_NEUTRAL)


def generate_gbm_dispersed(params: GbmParams, grid: TimeGrid, starts,
                           stream_offset: int = 0) -> ScenarioSet:
    """One risk-neutral path per entry of `starts`, starting there at the
    first grid time. `starts` is (n,) for one factor or (n, s) generally."""
    st = np.asarray(starts, dtype=np.float64)
    if st.size == 0:
        raise InvalidArgument("starts must be non-empty")
    if st.ndim == 1:
        st = st[:, None]
    if st.ndim != 2 or st.shape[1] != params.n_factors:
        raise InvalidArgument("starts must be (n,) or (n, n_factors)")
    if not np.all(np.isfinite(st)):
        raise InvalidValue("starts must be finite")
    if np.any(st <= 0):
        raise InvalidArgument("starts must be positive")
    activation = np.zeros(st.shape[0], dtype=np.int64)
    values = _simulate(params, grid, st, activation, stream_offset)
    return ScenarioSet(grid, values, activation, ScenarioKind.RISK_NEUTRAL)


def generate_gbm_forked(
    params: GbmParams,
    grid: TimeGrid,
    physical: ScenarioSet,
    fork_spec,
    prefix: str = "absent",
    stream_offset: int = 0,
) -> ScenarioSet:
    """Risk-neutral paths branching off physical scenarios mid-grid.

    fork_spec is an iterable of (physical scenario index, grid time index,
    count): `count` paths fork the given physical scenario at grid.times of
    the given index, starting bit-exactly at the physical value there.

    prefix: 'absent' leaves cells before the fork undefined (activation is
    the fork time); 'replay' backfills them with the donor physical path so
    the fork path carries a full synthetic history (activation moves to the
    first grid time). Every grid time before the fork must then exist on the
    physical grid.
    """
    if prefix not in ("absent", "replay"):
        raise InvalidArgument("prefix must be 'absent' or 'replay'")
    spec = list(fork_spec)
    if not spec:
        raise InvalidArgument("fork_spec must be non-empty")
    starts, acts, origins = [], [], []
    s = params.n_factors
    for p_scen, q_idx, count in spec:
        p_scen, q_idx, count = int(p_scen), int(q_idx), int(count)
        if count < 1:
            raise InvalidArgument("fork count must be at least 1")
        if not 0 <= q_idx < len(grid):
            raise GridMismatch(f"fork time index {q_idx} outside the grid")
        t_fork = float(grid.times[q_idx])
        if not physical.grid.contains(t_fork):
            raise GridMismatch(f"fork time {t_fork} is not on the physical grid")
        p_idx = physical.grid.index_of(t_fork)
        if not 0 <= p_scen < physical.n_scenarios:
            raise InvalidArgument(f"physical scenario index {p_scen} out of range")
        fork_value = physical.values[p_idx, p_scen, :]
        if fork_value.size != s:
            raise InvalidArgument("physical factor count does not match GBM parameters")
        for _ in range(count):
            starts.append(fork_value.copy())
            acts.append(q_idx)
            origins.append((p_scen, p_idx))
    starts = np.asarray(starts, dtype=np.float64)
    activation = np.asarray(acts, dtype=np.int64)
    origin = np.asarray(origins, dtype=np.int64)
    values = _simulate(params, grid, starts, activation, stream_offset)
    out = ScenarioSet(grid, values, activation, ScenarioKind.RISK_NEUTRAL, origin)
    if prefix == "replay":
        out = backfill_fork_prefixes(out, physical)
    return out


def concat(sets: list[ScenarioSet]) -> ScenarioSet:
    """Concatenate scenario sets sharing one grid and kind."""
    if not sets:
        raise InvalidArgument("nothing to concatenate")
    first = sets[0]
    for other in sets[1:]:
        if len(other.grid) != len(first.grid) or not np.array_equal(
            other.grid.times, first.grid.times
        ):
            raise GridMismatch("scenario sets live on different grids")
        if other.kind != first.kind:
            raise InvalidArgument("scenario sets have different kinds")
        if other.n_factors != first.n_factors:
            raise InvalidArgument("scenario sets have different factor counts")
    return ScenarioSet(
        first.grid,
        np.concatenate([s.values for s in sets], axis=1),
        np.concatenate([s.activation for s in sets]),
        first.kind,
        np.concatenate([s.fork_origin for s in sets], axis=0),
    )


def match_physical_path(riskneutral: ScenarioSet, scenario: int,
                        physical: ScenarioSet) -> tuple[int, int]:
    """Locate the physical path a fork scenario branched from.

    Matches by exact value equality at the scenario's activation time, per
    the fork-exactness guarantee. Returns (physical scenario index, physical
    time index); UninitializableForkState when no physical path matches.
    """
    act = int(riskneutral.activation[scenario])
    t = float(riskneutral.grid.times[act])
    if not physical.grid.contains(t):
        raise UninitializableForkState(
            f"activation time {t} of scenario {scenario} is not on the physical grid"
        )
    p_idx = physical.grid.index_of(t)
    target = riskneutral.values[act, scenario, :]
    hits = np.nonzero(np.all(physical.values[p_idx] == target[None, :], axis=1))[0]
    if hits.size == 0:
        raise UninitializableForkState(
            f"no physical path matches scenario {scenario} at time {t}"
        )
    return int(hits[0]), p_idx


def backfill_fork_prefixes(riskneutral: ScenarioSet, physical: ScenarioSet) -> ScenarioSet:
    """Give forked paths a full synthetic history (the donor physical path).

    For every scenario activating after the first grid time, the cells before
    activation are filled with the matching physical path's values and the
    activation index moves to 0. Risk-neutral grid times before the fork must
    all exist on the physical grid.
    """
    values = riskneutral.values.copy()
    activation = riskneutral.activation.copy()
    for w in np.nonzero(riskneutral.activation > 0)[0]:
        p_scen, _ = match_physical_path(riskneutral, int(w), physical)
        for k in range(int(riskneutral.activation[w])):
            t = float(riskneutral.grid.times[k])
            if not physical.grid.contains(t):
                raise GridMismatch(
                    f"grid time {t} before the fork is not on the physical grid"
                )
            values[k, w, :] = physical.values[physical.grid.index_of(t), p_scen, :]
        activation[w] = 0
    return ScenarioSet(riskneutral.grid, values, activation, riskneutral.kind,
                       riskneutral.fork_origin)


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AlignmentReport:
    """Whether physical pricing times are contained in the valuation grid."""

    aligned: bool
    missing_times: tuple[float, ...]
    time_index_map: dict[int, int]  # physical index -> risk-neutral index


def validate_alignment(physical: ScenarioSet, riskneutral: ScenarioSet,
                       maturity_time: float | None = None) -> AlignmentReport:
    """Report which physical times (up to `maturity_time`, default all) are
    present on the risk-neutral grid. Report-only; the pricing engine refuses
    to price at missing times."""
    missing: list[float] = []
    mapping: dict[int, int] = {}
    for i, t in enumerate(physical.grid.times):
        if maturity_time is not None and t > maturity_time + 1e-12:
            continue
        if riskneutral.grid.contains(float(t)):
            mapping[i] = riskneutral.grid.index_of(float(t))
        else:
            missing.append(float(t))
    return AlignmentReport(not missing, tuple(missing), mapping)


# ---------------------------------------------------------------------------
# import / export
# ---------------------------------------------------------------------------

_HEADER_PREFIX = ["scenario", "time_index"]


def _rows_to_set(rows, grid: TimeGrid, kind: ScenarioKind, n_factors: int) -> ScenarioSet:
    """Assemble a ScenarioSet from (scenario_id, time_index, factors) rows.

    Scenario ids must be 1-based and contiguous. Physical sets require every
    (scenario, time) cell; risk-neutral sets may omit a leading block of
    times per scenario (that defines the activation index), but gaps are
    rejected.
    """
    if not rows:
        raise MalformedScenarioData("no scenario rows")
    ids = sorted({r[0] for r in rows})
    if ids[0] != 1 or ids != list(range(1, len(ids) + 1)):
        raise MalformedScenarioData("scenario ids must be contiguous integers from 1")
    n = len(ids)
    T = len(grid)
    values = np.full((T, n, n_factors), np.nan, dtype=np.float64)
    seen = np.zeros((T, n), dtype=bool)
    for sid, tidx, factors in rows:
        w = sid - 1
        if not 0 <= tidx < T:
            raise MalformedScenarioData(f"time_index {tidx} outside the grid")
        if seen[tidx, w]:
            raise MalformedScenarioData(f"duplicate cell (scenario {sid}, time {tidx})")
        if len(factors) != n_factors:
            raise MalformedScenarioData(
                f"scenario {sid} time {tidx}: expected {n_factors} factor values"
            )
        for x in factors:
            if not np.isfinite(x):
                raise InvalidValue(f"non-finite value at (scenario {sid}, time {tidx})")
        seen[tidx, w] = True
        values[tidx, w, :] = factors
    activation = np.zeros(n, dtype=np.int64)
    for w in range(n):
        present = np.nonzero(seen[:, w])[0]
        if present.size == 0:
            raise MalformedScenarioData(f"scenario {w + 1} has no rows")
        act = int(present[0])
        if not np.array_equal(present, np.arange(act, T)):
            raise MalformedScenarioData(
                f"scenario {w + 1} has missing cells inside its active range"
            )
        if kind == ScenarioKind.PHYSICAL and act != 0:
            raise MalformedScenarioData(f"physical scenario {w + 1} is missing cells")
        activation[w] = act
    return ScenarioSet(grid, values, activation, kind)


def _parse_csv(path, grid: TimeGrid, kind: ScenarioKind) -> ScenarioSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedScenarioData(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header[:2] != _HEADER_PREFIX or len(header) < 3:
            raise MalformedScenarioData(
                f"{path}: header must be 'scenario,time_index,factor_0[,factor_1,...]'"
            )
        n_factors = len(header) - 2
        for j, name in enumerate(header[2:]):
            if name != f"factor_{j}":
                raise MalformedScenarioData(f"{path}: unexpected column '{name}'")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise MalformedScenarioData(f"{path}:{lineno}: wrong number of columns")
            if any(not c.strip() for c in rec):
                raise MalformedScenarioData(f"{path}:{lineno}: blank cell")
            try:
                sid = int(rec[0])
                tidx = int(rec[1])
                factors = [float(c) for c in rec[2:]]
            except ValueError:
                raise MalformedScenarioData(f"{path}:{lineno}: unparseable cell")
            rows.append((sid, tidx, factors))
    return _rows_to_set(rows, grid, kind, n_factors)


def _parse_json_doc(doc: dict, grid: TimeGrid | None, kind: ScenarioKind) -> ScenarioSet:
    if "grid" not in doc or "times" not in doc["grid"]:
        raise MalformedScenarioData("JSON scenario document must carry grid.times")
    inline_grid = TimeGrid(np.asarray(doc["grid"]["times"], dtype=np.float64),
                           tuple(doc["grid"]["labels"]) if doc["grid"].get("labels") else None)
    if grid is not None and not np.array_equal(grid.times, inline_grid.times):
        raise MalformedScenarioData("inline grid does not match the supplied grid")
    raw = doc.get("rows")
    if not isinstance(raw, list):
        raise MalformedScenarioData("JSON scenario document must carry a 'rows' list")
    rows = []
    n_factors = None
    for rec in raw:
        if not isinstance(rec, list) or len(rec) < 3:
            raise MalformedScenarioData(f"malformed row {rec!r}")
        if any(v is None for v in rec):
            raise MalformedScenarioData(f"blank cell in row {rec!r}")
        sid, tidx, factors = int(rec[0]), int(rec[1]), [float(v) for v in rec[2:]]
        if n_factors is None:
            n_factors = len(factors)
        elif len(factors) != n_factors:
            raise MalformedScenarioData("rows carry inconsistent factor counts")
        rows.append((sid, tidx, factors))
    return _rows_to_set(rows, inline_grid, kind, n_factors or 1)


def import_scenarios(source, grid: TimeGrid | None = None,
                     kind: ScenarioKind = ScenarioKind.PHYSICAL) -> ScenarioSet:
    """Import a scenario set from CSV (grid required), a JSON file, or an
    already-parsed JSON document (grid inline)."""
    if isinstance(source, dict):
        return _parse_json_doc(source, grid, kind)
    path = Path(source)
    if path.suffix.lower() == ".json":
        with open(path) as fh:
            return _parse_json_doc(json.load(fh), grid, kind)
    if grid is None:
        raise InvalidArgument("CSV scenario import needs an explicit grid")
    return _parse_csv(path, grid, kind)


def import_physical(source, grid: TimeGrid | None = None) -> ScenarioSet:
    """Import physical scenarios; every (scenario, time, factor) cell must be
    present and finite, and activation is the first grid time for all paths."""
    return import_scenarios(source, grid, ScenarioKind.PHYSICAL)


def export_csv(path, scenarios: ScenarioSet) -> None:
    """Write the active cells of a scenario set, full precision, 1-based ids."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER_PREFIX + [f"factor_{j}" for j in range(scenarios.n_factors)])
        for w in range(scenarios.n_scenarios):
            for k in range(int(scenarios.activation[w]), len(scenarios.grid)):
                writer.writerow([w + 1, k] + [repr(float(x)) for x in scenarios.values[k, w]])
