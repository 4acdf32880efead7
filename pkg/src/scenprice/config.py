"""JSON run configuration: parsing, validation, digests.

One JSON document configures a whole pipeline run. Validation errors name
the offending field (dotted path) so the CLI can exit with a usable message.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .grids import TimeGrid
from .products import ProductSpec
from .scenarios import GbmParams
from .smoothing import BasisSpec, SmootherKind
from .valuation import DiscountBase, DiscountModel


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise ConfigError(f"missing field '{path}.{key}'" if path else f"missing field '{key}'")
    return doc[key]


def _field(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _number(doc: dict, key: str, path: str, *, positive=False, nonneg=False, default=None):
    if key not in doc:
        if default is not None or key in doc:
            return default
        raise ConfigError(f"missing field '{_field(path, key)}'")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{_field(path, key)}' must be a number")
    if positive and not v > 0:
        raise ConfigError(f"'{_field(path, key)}' must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"'{_field(path, key)}' must be non-negative")
    return v


def _integer(doc: dict, key: str, path: str, *, positive=False, default=None):
    if key not in doc and default is not None:
        return default
    v = _number(doc, key, path, positive=positive)
    if int(v) != v:
        raise ConfigError(f"'{_field(path, key)}' must be an integer")
    return int(v)


def parse_grid(doc, path: str) -> TimeGrid:
    if not isinstance(doc, dict) or "times" not in doc:
        raise ConfigError(f"'{path}' must be an object with a 'times' list")
    try:
        return TimeGrid(np.asarray(doc["times"], dtype=np.float64),
                        tuple(doc["labels"]) if doc.get("labels") else None)
    except Exception as exc:
        raise ConfigError(f"'{path}.times' invalid: {exc}")


def parse_product(doc, path: str = "product") -> ProductSpec:
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    kind = _require(doc, "kind", path)
    try:
        return ProductSpec(
            kind=kind,
            strike=_number(doc, "strike", path, positive=True),
            maturity_index=_integer(doc, "maturity_index", path),
            underlying_factor=_integer(doc, "underlying_factor", path, default=0),
            barrier_level=doc.get("barrier_level"),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"'{path}' invalid: {exc}")


def parse_discount(doc, path: str = "discount") -> tuple[DiscountModel, DiscountBase]:
    doc = doc or {"kind": "flat", "rate": 0.0}
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    kind = doc.get("kind", "flat")
    if kind != "flat":
        raise ConfigError(f"'{_field(path, 'kind')}' must be 'flat'")
    rate = _number(doc, "rate", path, default=0.0)
    base_raw = doc.get("base", "valuation_time")
    try:
        base = DiscountBase(base_raw)
    except ValueError:
        raise ConfigError(f"'{_field(path, 'base')}' must be "
                          f"'valuation_time' or 'initial_time'")
    return DiscountModel(rate=float(rate)), base


def parse_basis(doc, path: str) -> BasisSpec:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    dims = doc.get("dimensions")
    try:
        return BasisSpec(
            degree=_integer(doc, "degree", path, default=2),
            cross_terms=bool(doc.get("cross_terms", True)),
            dimensions=tuple(dims) if dims is not None else None,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"'{path}' invalid: {exc}")


def parse_smoother(doc, path: str = "smoother") -> tuple[SmootherKind, BasisSpec, float | None]:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    kind_raw = doc.get("kind", "polynomial_per_timestep")
    try:
        kind = SmootherKind(kind_raw)
    except ValueError:
        raise ConfigError(f"'{_field(path, 'kind')}' unknown: {kind_raw!r}")
    basis = parse_basis(doc.get("basis"), _field(path, "basis"))
    bandwidth = doc.get("bandwidth")
    if bandwidth is not None:
        bandwidth = _number(doc, "bandwidth", path, positive=True)
    return kind, basis, bandwidth


def parse_gbm(doc, path: str) -> GbmParams:
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    try:
        return GbmParams(
            initial_value=np.asarray(_require(doc, "initial_value", path), dtype=np.float64),
            drift=np.asarray(doc.get("drift", 0.0), dtype=np.float64),
            volatility=np.asarray(_require(doc, "volatility", path), dtype=np.float64),
            correlation=np.asarray(doc["correlation"], dtype=np.float64)
            if doc.get("correlation") is not None else None,
            seed=_integer(doc, "seed", path, default=0),
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(f"'{path}' invalid: {exc}")


@dataclass(frozen=True)
class RiskNeutralConfig:
    mode: str  # fixed | dispersed | forked | import
    gbm: GbmParams | None = None
    n_scenarios: int | None = None
    starts: np.ndarray | None = None
    fixed_count: int = 0
    forks: tuple | None = None  # (physical scenario id 1-based, time index, count)
    fork_prefix: str = "absent"
    source: object | None = None  # path or inline document for mode 'import'


def parse_riskneutral(doc, path: str = "riskneutral") -> RiskNeutralConfig:
    if not isinstance(doc, dict):
        raise ConfigError(f"'{path}' must be an object")
    mode = _require(doc, "mode", path)
    if mode not in ("fixed", "dispersed", "forked", "import"):
        raise ConfigError(f"'{_field(path, 'mode')}' must be one of "
                          f"fixed, dispersed, forked, import")
    prefix = doc.get("fork_prefix", "absent")
    if prefix not in ("absent", "replay"):
        raise ConfigError(f"'{_field(path, 'fork_prefix')}' must be 'absent' or 'replay'")
    if mode == "import":
        if "file" not in doc and "inline" not in doc:
            raise ConfigError(f"'{path}' import mode needs 'file' or 'inline'")
        return RiskNeutralConfig(mode=mode, source=doc.get("file") or doc.get("inline"),
                                 fork_prefix=prefix)
    gbm = parse_gbm(_require(doc, "gbm", path), _field(path, "gbm"))
    if mode == "fixed":
        return RiskNeutralConfig(mode=mode, gbm=gbm, fork_prefix=prefix,
                                 n_scenarios=_integer(doc, "n_scenarios", path, positive=True))
    if mode == "dispersed":
        starts = _require(doc, "starts", path)
        if not isinstance(starts, list) or not starts:
            raise ConfigError(f"'{_field(path, 'starts')}' must be a non-empty list")
        return RiskNeutralConfig(mode=mode, gbm=gbm, fork_prefix=prefix,
                                 starts=np.asarray(starts, dtype=np.float64))
    forks_raw = _require(doc, "forks", path)
    if not isinstance(forks_raw, list) or not forks_raw:
        raise ConfigError(f"'{_field(path, 'forks')}' must be a non-empty list")
    forks = []
    for i, f in enumerate(forks_raw):
        fp = f"{path}.forks[{i}]"
        if not isinstance(f, dict):
            raise ConfigError(f"'{fp}' must be an object")
        forks.append((
            _integer(f, "scenario", fp, positive=True),   # 1-based physical id
            _integer(f, "time_index", fp),
            _integer(f, "count", fp, positive=True),
        ))
    return RiskNeutralConfig(mode=mode, gbm=gbm, fork_prefix=prefix,
                             fixed_count=_integer(doc, "fixed_count", path, default=0),
                             forks=tuple(forks))


@dataclass(frozen=True)
class RunConfig:
    grid_p: TimeGrid
    grid_q: TimeGrid
    physical_source: object  # path or inline document
    riskneutral: RiskNeutralConfig
    product: ProductSpec
    discount: DiscountModel
    discount_base: DiscountBase
    smoother_kind: SmootherKind
    basis: BasisSpec
    bandwidth: float | None
    fork_state_method: str
    output_dir: str | None
    persist_run: bool
    raw: dict

    def digest(self) -> str:
        return sha256_digest(self.raw)


def sha256_digest(doc: dict) -> str:
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def parse_config(doc_or_path) -> RunConfig:
    """Parse and validate a pipeline config document or file path."""
    if isinstance(doc_or_path, (str, Path)):
        try:
            with open(doc_or_path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {doc_or_path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    else:
        doc = doc_or_path
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")

    grid_q = parse_grid(_require(doc, "grid_q", ""), "grid_q")
    physical = _require(doc, "physical", "")
    if not isinstance(physical, dict) or ("file" not in physical and "inline" not in physical):
        raise ConfigError("'physical' must carry 'file' or 'inline'")
    grid_p = parse_grid(_require(doc, "grid_p", ""), "grid_p") if "grid_p" in doc else None
    if grid_p is None:
        inline = physical.get("inline")
        if not (isinstance(inline, dict) and "grid" in inline):
            raise ConfigError("missing field 'grid_p' (required unless physical.inline "
                              "carries its own grid)")
        grid_p = parse_grid(inline["grid"], "physical.inline.grid")

    product = parse_product(_require(doc, "product", ""))
    if product.maturity_index >= len(grid_q):
        raise ConfigError("'product.maturity_index' is outside grid_q")
    discount, base = parse_discount(doc.get("discount"))
    kind, basis, bandwidth = parse_smoother(doc.get("smoother"))
    fork_state_method = doc.get("fork_state_method", "copy")
    if fork_state_method not in ("copy", "replay"):
        raise ConfigError("'fork_state_method' must be 'copy' or 'replay'")
    output = doc.get("output") or {}
    if not isinstance(output, dict):
        raise ConfigError("'output' must be an object")

    return RunConfig(
        grid_p=grid_p,
        grid_q=grid_q,
        physical_source=physical.get("file") or physical.get("inline"),
        riskneutral=parse_riskneutral(_require(doc, "riskneutral", "")),
        product=product,
        discount=discount,
        discount_base=base,
        smoother_kind=kind,
        basis=basis,
        bandwidth=bandwidth,
        fork_state_method=fork_state_method,
        output_dir=output.get("dir"),
        persist_run=bool(output.get("persist_run", False)),
        raw=doc,
    )


@dataclass(frozen=True)
class BenchmarkConfig:
    n_p: int
    n_steps: int
    horizon: float
    maturity: float
    n_q: int
    inner_paths: int
    physical_drift: float
    gbm: GbmParams
    product_kind: str
    strike: float
    discount: DiscountModel
    discount_base: DiscountBase
    basis: BasisSpec
    seed: int
    raw: dict

    def digest(self) -> str:
        return sha256_digest(self.raw)


def parse_benchmark_config(doc_or_path) -> BenchmarkConfig:
    """Benchmark configs are self-contained: grids are derived from
    (n_steps, horizon, maturity) and the physical fan is generated."""
    if isinstance(doc_or_path, (str, Path)):
        try:
            with open(doc_or_path) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {doc_or_path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    else:
        doc = doc_or_path
    bench = _require(doc, "benchmark", "")
    if not isinstance(bench, dict):
        raise ConfigError("'benchmark' must be an object")
    path = "benchmark"
    horizon = _number(bench, "horizon", path, positive=True, default=0.5)
    maturity = _number(bench, "maturity", path, positive=True, default=1.0)
    if maturity <= horizon:
        raise ConfigError("'benchmark.maturity' must exceed 'benchmark.horizon'")
    rn = doc.get("riskneutral") or {}
    gbm = parse_gbm(_require(rn, "gbm", "riskneutral"), "riskneutral.gbm")
    prod = doc.get("product") or {}
    kind = prod.get("kind", "european_call")
    strike = _number(prod, "strike", "product", positive=True, default=100.0)
    discount, base = parse_discount(doc.get("discount"))
    _, basis, _ = parse_smoother(doc.get("smoother"))
    return BenchmarkConfig(
        n_p=_integer(bench, "n_p", path, positive=True, default=1000),
        n_steps=_integer(bench, "n_steps", path, positive=True, default=10),
        horizon=float(horizon),
        maturity=float(maturity),
        n_q=_integer(bench, "n_q", path, positive=True, default=10_000),
        inner_paths=_integer(bench, "inner_paths", path, positive=True, default=10_000),
        physical_drift=float(_number(bench, "physical_drift", path, default=0.08)),
        gbm=gbm,
        product_kind=kind,
        strike=float(strike),
        discount=discount,
        discount_base=base,
        basis=basis,
        seed=_integer(bench, "seed", path, default=gbm.seed),
        raw=doc,
    )
