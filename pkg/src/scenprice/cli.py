"""scenprice command line.

Subcommands: reproduce-paper, price, benchmark, risk. Exit codes: 0 success,
1 runtime/pipeline failure, 2 usage or configuration failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .benchmark import run_benchmark
from .config import parse_benchmark_config, parse_config
from .engine import (
    persist_run,
    read_price_table_csv,
    run_pipeline,
    write_price_table_csv,
)
from .errors import ConfigError, MalformedScenarioData, PipelineError, ScenpriceError
from .refdata import VARIANTS
from .reproduce import run_variant
from .risk import PnlDistribution, risk_summary
from .smoothing import save_smoother, write_json_atomic


def _global_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--threads", default="auto",
                        help="worker threads for the numba backend (n or 'auto')")
    parser.add_argument("--quiet", action="store_true", help="suppress tables on stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenprice",
        description="Scenario pricing by smoothed risk-neutral Monte Carlo",
    )
    parser.add_argument("--version", action="version", version=f"scenprice {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reproduce-paper", help="run the built-in reference cases")
    p.add_argument("variant", choices=VARIANTS)
    _global_flags(p)

    p = sub.add_parser("price", help="run the pricing pipeline from a config")
    _global_flags(p)

    p = sub.add_parser("benchmark", help="smoothing pipeline vs nested Monte Carlo")
    _global_flags(p)

    p = sub.add_parser("risk", help="VaR/CVaR/std from a price table CSV")
    p.add_argument("--table", required=True, help="price table CSV")
    p.add_argument("--level", type=float, required=True, help="confidence level in (0,1)")
    p.add_argument("--base", type=float, required=True,
                   help="base price; loss = base - scenario price")
    _global_flags(p)

    return parser


def _apply_threads(threads: str) -> None:
    if threads == "auto":
        return
    try:
        n = int(threads)
    except ValueError:
        raise ConfigError("'--threads' must be an integer or 'auto'")
    if n < 1:
        raise ConfigError("'--threads' must be positive")
    if _kernels.default_backend() == "numba":
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _override_seed(doc: dict, seed: int) -> dict:
    doc = json.loads(json.dumps(doc))
    rn = doc.get("riskneutral")
    if isinstance(rn, dict) and isinstance(rn.get("gbm"), dict):
        rn["gbm"]["seed"] = seed
    if isinstance(doc.get("benchmark"), dict):
        doc["benchmark"]["seed"] = seed
    return doc


def _load_config_doc(args) -> dict:
    if not args.config:
        raise ConfigError("missing required flag '--config'")
    try:
        with open(args.config) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {args.config}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if args.seed is not None:
        doc = _override_seed(doc, args.seed)
    return doc


def cmd_reproduce(args) -> int:
    report = run_variant(args.variant)
    if not args.quiet:
        width = max(len(r.label) for r in report.rows)
        print(f"variant: {report.variant}")
        for r in report.rows:
            mark = "PASS" if r.passed else "FAIL"
            print(f"  {r.label:<{width}}  computed {r.computed: 14.6f}  "
                  f"expected {r.expected: 14.6f}  tol {r.tolerance:g}  {mark}")
        for note in report.notes:
            print(f"  note: {note}")
        n_pass = sum(r.passed for r in report.rows)
        print(f"{n_pass}/{len(report.rows)} checks passed")
    return 0 if report.all_passed else 1


def cmd_price(args) -> int:
    doc = _load_config_doc(args)
    config = parse_config(doc)
    out_dir = Path(args.out or config.output_dir or "out")
    result = run_pipeline(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_price_table_csv(out_dir / "price_table.csv", result.price_table)
    save_smoother(out_dir / "smoother.json", result.smoother)
    manifest = {
        "tool_version": __version__,
        "config_digest": result.config_digest,
        "seed": result.seed,
        "stage_timings_ms": result.stage_timings_ms,
        "backend": _kernels.default_backend(),
        "counters": {
            "sim_steps": result.counters.sim_steps,
            "fit_rows": result.counters.fit_rows,
            "fit_basis_evals": result.counters.fit_basis_evals,
            "eval_points": result.counters.eval_points,
            "eval_basis_evals": result.counters.eval_basis_evals,
        },
        "n_extrapolated": int(result.price_table.extrapolated.sum()),
    }
    write_json_atomic(out_dir / "manifest.json", manifest)
    if config.persist_run:
        persist_run(result.q_scenarios, result.q_states, result.smoother,
                    out_dir / "artifact",
                    {"seed": result.seed, "config_digest": result.config_digest,
                     "product": config.raw.get("product"),
                     "discount": config.raw.get("discount")})
    if not args.quiet:
        print(f"price table: {out_dir / 'price_table.csv'}")
        print(f"smoother:    {out_dir / 'smoother.json'}")
        print(f"manifest:    {out_dir / 'manifest.json'}")
    return 0


def cmd_benchmark(args) -> int:
    doc = _load_config_doc(args)
    cfg = parse_benchmark_config(doc)
    progress = None
    if not args.quiet:
        def progress(step, total):
            print(f"  nested MC: time step {step}/{total}", file=sys.stderr)
    report = run_benchmark(cfg, progress=progress)
    out_dir = Path(args.out or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json_atomic(out_dir / "benchmark.json", report.to_dict())
    if not args.quiet:
        d = report.to_dict()
        for key in ("n_p", "n_steps", "n_q", "inner_paths", "backend"):
            print(f"{key:>22}: {d[key]}")
        print(f"{'pipeline wall':>22}: {report.pipeline_wall_s:.3f} s")
        print(f"{'nested wall':>22}: {report.nested_wall_s:.3f} s")
        print(f"{'speedup':>22}: {report.speedup:.1f}x")
        print(f"{'pipeline ops':>22}: {report.pipeline_ops}")
        print(f"{'nested ops':>22}: {report.nested_ops}")
        print(f"{'op ratio':>22}: {report.op_ratio:.1f}x")
        print(f"{'max abs deviation':>22}: {report.max_abs_deviation:.4f}")
        print(f"{'within 3 combined SE':>22}: {100 * report.frac_within_3se:.2f}% "
              f"of {report.n_cells} cells")
        if report.high_variance_nested:
            print(f"{'warning':>22}: nested estimates are high-variance "
                  f"(inner_paths={report.inner_paths}); deviations are noise-dominated")
    return 0


def cmd_risk(args) -> int:
    if not 0.0 < args.level < 1.0:
        raise ConfigError("'--level' must be strictly between 0 and 1")
    scen, tidx, price = read_price_table_csv(args.table)
    per_step = []
    for k in sorted(set(int(t) for t in tidx)):
        sel = tidx == k
        dist = PnlDistribution.from_prices(args.base, price[sel], horizon_index=k)
        entry = {"time_index": k}
        entry.update(risk_summary(dist, args.level))
        per_step.append(entry)
    doc = {
        "level": args.level,
        "base": args.base,
        "loss_convention": "positive numbers are losses (base - price)",
        "per_time_step": per_step,
    }
    out = json.dumps(doc, indent=1)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_json_atomic(out_dir / "risk.json", doc)
    if not args.quiet:
        print(out)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_threads(args.threads)
        if args.command == "reproduce-paper":
            return cmd_reproduce(args)
        if args.command == "price":
            return cmd_price(args)
        if args.command == "benchmark":
            return cmd_benchmark(args)
        return cmd_risk(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MalformedScenarioData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ScenpriceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
