"""The seven-stage pricing pipeline and run persistence.

Stages: import physical scenarios, build the risk-neutral set, compute both
path-state tables, accumulate discounted values, fit the price function, and
evaluate it at every physical (time, scenario) cell. Stage failures are
re-raised as PipelineError naming the stage. Outputs are deterministic given
the configuration (including seeds).
"""
from __future__ import annotations

import csv
import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import RunConfig, RiskNeutralConfig
from .errors import (
    GridMismatch,
    IncompatibleArtifact,
    InvalidArgument,
    MalformedScenarioData,
    PipelineError,
)
from .grids import TimeGrid
from .products import (
    CashFlowTable,
    ForkInitializer,
    PathStateTable,
    ProductSpec,
    compute_cashflows,
    compute_state_table,
)
from .scenarios import (
    ScenarioKind,
    ScenarioSet,
    backfill_fork_prefixes,
    concat,
    export_csv,
    generate_gbm_dispersed,
    generate_gbm_fixed,
    generate_gbm_forked,
    import_physical,
    import_scenarios,
    validate_alignment,
)
from .smoothing import (
    Smoother,
    SmootherKind,
    fit,
    load_smoother,
    smoother_from_dict,
    smoother_to_dict,
    write_json_atomic,
)
from .valuation import DiscountBase, DiscountModel, ValueTable, accumulate_remaining_value

ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class PriceTable:
    """Prices per physical (time, scenario) with evaluation flags."""

    grid: TimeGrid
    values: np.ndarray          # (n_times, n_scenarios)
    extrapolated: np.ndarray    # same shape, bool: query left the sample box
    metadata: dict = field(default_factory=dict)

    @property
    def n_scenarios(self) -> int:
        return int(self.values.shape[1])


@dataclass
class OpCounters:
    """Work counters backing the complexity contract: simulation work is
    O(n_q * T_q) regardless of the physical count, evaluation is
    O(n_p * T_p * basis size)."""

    sim_steps: int = 0        # GBM path-steps simulated
    fit_rows: int = 0         # sample rows consumed by fits
    fit_basis_evals: int = 0  # rows x basis columns over all fits
    eval_points: int = 0      # physical cells evaluated
    eval_basis_evals: int = 0

    def total(self) -> int:
        return self.sim_steps + self.fit_basis_evals + self.eval_basis_evals


@dataclass(frozen=True)
class PipelineResult:
    price_table: PriceTable
    smoother: Smoother
    q_scenarios: ScenarioSet
    q_states: PathStateTable
    cashflows: CashFlowTable
    value_table: ValueTable
    counters: OpCounters
    stage_timings_ms: dict
    config_digest: str
    seed: int | None


def _build_riskneutral(rn: RiskNeutralConfig, grid_q: TimeGrid,
                       physical: ScenarioSet) -> ScenarioSet:
    if rn.mode == "import":
        out = import_scenarios(rn.source, grid_q, ScenarioKind.RISK_NEUTRAL)
        if not np.array_equal(out.grid.times, grid_q.times):
            raise GridMismatch("imported risk-neutral grid does not match grid_q")
    elif rn.mode == "fixed":
        out = generate_gbm_fixed(rn.gbm, grid_q, rn.n_scenarios)
    elif rn.mode == "dispersed":
        out = generate_gbm_dispersed(rn.gbm, grid_q, rn.starts)
    else:
        blocks = []
        offset = 0
        if rn.fixed_count:
            blocks.append(generate_gbm_fixed(rn.gbm, grid_q, rn.fixed_count))
            offset = rn.fixed_count
        # config fork entries use 1-based physical scenario ids
        spec = [(scen - 1, t_idx, count) for scen, t_idx, count in rn.forks]
        blocks.append(generate_gbm_forked(rn.gbm, grid_q, physical, spec,
                                          stream_offset=offset))
        out = concat(blocks) if len(blocks) > 1 else blocks[0]
    if rn.fork_prefix == "replay":
        out = backfill_fork_prefixes(out, physical)
    return out


@contextmanager
def _stage(name: str, timings: dict):
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, str(exc)) from exc
    finally:
        timings[name] = (time.perf_counter() - t0) * 1000.0


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Execute the full pipeline for a parsed configuration."""
    timings: dict[str, float] = {}
    counters = OpCounters()

    def stage(name: str):
        return _stage(name, timings)

    with stage("import_physical"):
        physical = import_physical(config.physical_source, config.grid_p)

    with stage("generate_riskneutral"):
        q = _build_riskneutral(config.riskneutral, config.grid_q, physical)
        counters.sim_steps += int(np.sum(len(q.grid) - 1 - q.activation))
        maturity_time = float(config.grid_q.times[config.product.maturity_index])
        report = validate_alignment(physical, q, maturity_time)
        if not report.aligned:
            raise GridMismatch(
                "physical times missing from the risk-neutral grid: "
                f"{report.missing_times}"
            )

    with stage("physical_state"):
        p_states = compute_state_table(config.product, physical)

    with stage("riskneutral_state"):
        initializer = None
        if np.any(q.activation > 0):
            initializer = ForkInitializer(physical, p_states, config.fork_state_method)
        q_states = compute_state_table(config.product, q, initializer)

    with stage("valuation"):
        cashflows = compute_cashflows(config.product, q, q_states)
        values = accumulate_remaining_value(cashflows, config.discount,
                                            config.discount_base)

    with stage("fit"):
        priced = sorted(report.time_index_map.items())  # (p index, q index)
        fit_times = [qi for _, qi in priced]
        smoother = fit(q, q_states, values, config.smoother_kind,
                       basis=config.basis, times=fit_times,
                       bandwidth=config.bandwidth)
        n_basis = (config.basis.n_basis(len(smoother.fits[0].feature_indices))
                   if config.smoother_kind != SmootherKind.KERNEL_PER_TIMESTEP else 1)
        for f in smoother.fits:
            counters.fit_rows += f.n_samples
            counters.fit_basis_evals += f.n_samples * n_basis

    with stage("evaluate"):
        T_p, n_p = len(physical.grid), physical.n_scenarios
        prices = np.zeros((T_p, n_p), dtype=np.float64)
        extrapolated = np.zeros((T_p, n_p), dtype=bool)
        for p_idx, _q_idx in priced:
            t = float(physical.grid.times[p_idx])
            row, extra, _uf = smoother.evaluate_batch(
                t, physical.values[p_idx], p_states.values[p_idx])
            prices[p_idx] = row
            extrapolated[p_idx] = extra
            counters.eval_points += n_p
            counters.eval_basis_evals += n_p * n_basis
        # physical times after maturity: the product has expired, price 0

    metadata = {
        "tool_version": __version__,
        "config_digest": config.digest(),
        "seed": config.riskneutral.gbm.seed if config.riskneutral.gbm else None,
        "backend": _kernels.default_backend(),
        "priced_time_indices": [p for p, _ in priced],
        "fit_diagnostics": [
            {"time_index": f.time_index, "n_samples": f.n_samples,
             **({"rank": f.rank, "cond": f.cond} if hasattr(f, "rank") else {})}
            for f in smoother.fits
        ],
    }
    table = PriceTable(physical.grid, prices, extrapolated, metadata)
    return PipelineResult(table, smoother, q, q_states, cashflows, values,
                          counters, timings, config.digest(),
                          metadata["seed"])


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _write_state_csv(path, states: PathStateTable, activation) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "time_index"]
                        + [f"state_{j}" for j in range(states.state_dim)])
        for w in range(states.n_scenarios):
            for k in range(int(activation[w]), len(states.grid)):
                writer.writerow([w + 1, k] + [repr(float(v)) for v in states.values[k, w]])


def _read_state_csv(path, grid: TimeGrid, n_scenarios: int) -> PathStateTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        s_a = len(header) - 2
        values = np.full((len(grid), n_scenarios, s_a), np.nan)
        seen = np.zeros((len(grid), n_scenarios), dtype=bool)
        for rec in reader:
            w, k = int(rec[0]) - 1, int(rec[1])
            values[k, w, :] = [float(v) for v in rec[2:]]
            seen[k, w] = True
    activation = np.empty(n_scenarios, dtype=np.int64)
    for w in range(n_scenarios):
        present = np.nonzero(seen[:, w])[0]
        if present.size == 0:
            raise MalformedScenarioData(f"persisted state table misses scenario {w + 1}")
        activation[w] = present[0]
    return PathStateTable(grid, values, activation)


def persist_run(q_scenarios: ScenarioSet, q_states: PathStateTable,
                smoother: Smoother, directory, manifest_extra: dict | None = None) -> None:
    """Write the reusable run artifact: q_scenarios.csv, a_q.csv,
    smoother.json, manifest.json. Values round-trip bit-exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    export_csv(directory / "q_scenarios.csv", q_scenarios)
    _write_state_csv(directory / "a_q.csv", q_states, q_scenarios.activation)
    write_json_atomic(directory / "smoother.json", smoother_to_dict(smoother))
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "tool_version": __version__,
        "grid_q": [float(t) for t in q_scenarios.grid.times],
        "n_scenarios": q_scenarios.n_scenarios,
        "n_factors": q_scenarios.n_factors,
        "state_dim": q_states.state_dim,
        "kind": q_scenarios.kind.value,
    }
    manifest.update(manifest_extra or {})
    write_json_atomic(directory / "manifest.json", manifest)


@dataclass(frozen=True)
class LoadedRun:
    q_scenarios: ScenarioSet
    q_states: PathStateTable
    smoother: Smoother
    manifest: dict


def load_run(directory) -> LoadedRun:
    """Reload a persisted run artifact; checks the artifact version."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("artifact_version") != ARTIFACT_VERSION:
        raise IncompatibleArtifact(
            f"artifact version {manifest.get('artifact_version')!r} unsupported "
            f"(expected {ARTIFACT_VERSION})"
        )
    grid = TimeGrid(np.asarray(manifest["grid_q"], dtype=np.float64))
    kind = ScenarioKind(manifest.get("kind", "risk_neutral"))
    q = import_scenarios(str(directory / "q_scenarios.csv"), grid, kind)
    states = _read_state_csv(directory / "a_q.csv", grid, q.n_scenarios)
    smoother = load_smoother(directory / "smoother.json")
    return LoadedRun(q, states, smoother, manifest)


def refit_from_artifact(loaded: LoadedRun, product: ProductSpec,
                        discount: DiscountModel,
                        base: DiscountBase = DiscountBase.VALUATION_TIME,
                        mode: SmootherKind = SmootherKind.POLYNOMIAL_PER_TIMESTEP,
                        basis=None, times=None, bandwidth=None) -> Smoother:
    """Fit a new price function from persisted scenarios and states without
    re-simulating: cash flows and values are recomputed, paths are not."""
    cashflows = compute_cashflows(product, loaded.q_scenarios, loaded.q_states)
    values = accumulate_remaining_value(cashflows, discount, base)
    return fit(loaded.q_scenarios, loaded.q_states, values, mode,
               basis=basis, times=times, bandwidth=bandwidth)


def write_price_table_csv(path, table: PriceTable) -> None:
    """Human-oriented CSV: scenario,time_index,price with six decimals."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "time_index", "price"])
        for w in range(table.n_scenarios):
            for k in range(len(table.grid)):
                writer.writerow([w + 1, k, f"{table.values[k, w]:.6f}"])


def read_price_table_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a price table CSV into (scenario ids, time indices, prices)."""
    scen, tidx, price = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["scenario", "time_index", "price"]:
            raise MalformedScenarioData(f"{path}: expected header scenario,time_index,price")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            try:
                scen.append(int(rec[0]))
                tidx.append(int(rec[1]))
                price.append(float(rec[2]))
            except (ValueError, IndexError):
                raise MalformedScenarioData(f"{path}:{lineno}: unparseable row")
    if not scen:
        raise MalformedScenarioData(f"{path}: no data rows")
    return np.asarray(scen), np.asarray(tidx), np.asarray(price)
