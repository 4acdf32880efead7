"""Desk-scale benchmark: one smoothing pipeline versus nested Monte Carlo.

The physical book is a GBM fan of n_p scenarios over n_steps time steps up
to `horizon`; the product matures at `maturity` on the extended valuation
grid. The nested baseline launches a fresh inner simulation at every
physical (time, scenario) cell; the pipeline prices all cells from one
risk-neutral simulation of n_q paths. The report carries wall-clock times,
operation counts (simulated path-steps plus basis evaluations) and the
per-cell deviation between the two methods measured against their combined
standard errors.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import BenchmarkConfig, RunConfig, RiskNeutralConfig
from .engine import run_pipeline
from .grids import TimeGrid
from .oracle import NORMAL_CDF_IMPL, NestedMcConfig, nested_mc_price
from .products import ProductSpec, compute_state_table
from .scenarios import GbmParams, generate_gbm_fixed
from .smoothing import SmootherKind
from .valuation import DiscountBase


@dataclass(frozen=True)
class BenchmarkReport:
    n_p: int
    n_steps: int
    n_q: int
    inner_paths: int
    pipeline_wall_s: float
    nested_wall_s: float
    speedup: float
    pipeline_ops: int
    nested_ops: int
    op_ratio: float
    max_abs_deviation: float
    frac_within_3se: float
    n_cells: int
    backend: str
    high_variance_nested: bool
    normal_cdf_impl: str = NORMAL_CDF_IMPL

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _physical_csv_rows(values: np.ndarray) -> dict:
    T, n = values.shape[:2]
    rows = [[w + 1, k] + [float(v) for v in values[k, w]]
            for w in range(n) for k in range(T)]
    return rows


def run_benchmark(cfg: BenchmarkConfig, progress=None) -> BenchmarkReport:
    p_times = np.linspace(0.0, cfg.horizon, cfg.n_steps + 1)
    grid_p = TimeGrid(p_times)
    grid_q = TimeGrid(np.append(p_times, cfg.maturity))
    maturity_index = len(grid_q) - 1
    product = ProductSpec(cfg.product_kind, cfg.strike, maturity_index)

    # physical fan under the real-world drift, separate substream block
    p_params = dataclasses.replace(cfg.gbm, drift=np.full_like(cfg.gbm.drift,
                                                               cfg.physical_drift),
                                   seed=cfg.seed + 1)
    physical = generate_gbm_fixed(p_params, grid_p, cfg.n_p)

    physical_doc = {
        "grid": {"times": [float(t) for t in grid_p.times]},
        "rows": _physical_csv_rows(physical.values),
    }
    run_cfg = RunConfig(
        grid_p=grid_p,
        grid_q=grid_q,
        physical_source=physical_doc,
        riskneutral=RiskNeutralConfig(mode="fixed", gbm=cfg.gbm, n_scenarios=cfg.n_q),
        product=product,
        discount=cfg.discount,
        discount_base=cfg.discount_base,
        smoother_kind=SmootherKind.POLYNOMIAL_PER_TIMESTEP,
        basis=cfg.basis,
        bandwidth=None,
        fork_state_method="copy",
        output_dir=None,
        persist_run=False,
        raw=cfg.raw,
    )

    t0 = time.perf_counter()
    result = run_pipeline(run_cfg)
    pipeline_wall = time.perf_counter() - t0
    pipeline_ops = result.counters.total()

    # nested Monte Carlo over every physical cell at t1..t_n
    p_states = compute_state_table(product, physical)
    cell_times = list(range(1, cfg.n_steps + 1))
    n_cells = len(cell_times) * cfg.n_p
    seeds = np.random.SeedSequence(cfg.seed + 2).generate_state(n_cells, dtype=np.uint64)

    nested_est = np.empty((len(cell_times), cfg.n_p))
    nested_se = np.empty_like(nested_est)
    nested_ops = 0
    t0 = time.perf_counter()
    cell = 0
    for i, k in enumerate(cell_times):
        for w in range(cfg.n_p):
            mc_cfg = NestedMcConfig(cfg.inner_paths, int(seeds[cell]), cfg.gbm)
            r = nested_mc_price(k, physical.values[k, w],
                                tuple(p_states.values[k, w]), product,
                                grid_q, mc_cfg, cfg.discount)
            nested_est[i, w] = r.estimate
            nested_se[i, w] = r.stderr
            nested_ops += r.n_steps
            cell += 1
        if progress is not None:
            progress(k, cfg.n_steps)
    nested_wall = time.perf_counter() - t0

    # per-cell deviation vs combined standard error
    dev = np.empty_like(nested_est)
    comb = np.empty_like(nested_est)
    for i, k in enumerate(cell_times):
        t = float(grid_p.times[k])
        fitted = result.smoother._fit_for_time(t)
        rows = np.column_stack([np.full(cfg.n_p, t),
                                physical.values[k],
                                p_states.values[k]])
        pred_se = fitted.prediction_stderr(rows)
        dev[i] = np.abs(result.price_table.values[k] - nested_est[i])
        comb[i] = np.sqrt(nested_se[i] ** 2 + pred_se ** 2)
    with np.errstate(invalid="ignore"):
        within = dev <= 3.0 * comb
    frac_within = float(np.mean(within))

    return BenchmarkReport(
        n_p=cfg.n_p,
        n_steps=cfg.n_steps,
        n_q=cfg.n_q,
        inner_paths=cfg.inner_paths,
        pipeline_wall_s=pipeline_wall,
        nested_wall_s=nested_wall,
        speedup=nested_wall / pipeline_wall if pipeline_wall > 0 else float("inf"),
        pipeline_ops=pipeline_ops,
        nested_ops=nested_ops,
        op_ratio=nested_ops / pipeline_ops if pipeline_ops else float("inf"),
        max_abs_deviation=float(dev.max()),
        frac_within_3se=frac_within,
        n_cells=n_cells,
        backend=_kernels.default_backend(),
        high_variance_nested=cfg.inner_paths < 100,
    )
