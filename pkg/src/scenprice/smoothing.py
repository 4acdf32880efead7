"""Sample sets and the smoothed price function.

Samples pair X = (time, risk factors, path state) with Y = discounted
remaining value, taken over active (time, scenario) cells of a risk-neutral
simulation. Two smoothing families turn samples into a price function:

* polynomial least squares, fitted per time step or globally (with time as a
  regression dimension). Rank-deficient designs are resolved by the
  minimal-Euclidean-norm solution via SVD with singular values below
  ``max_sv * 1e-10`` treated as zero; predictions at query points inside the
  design's row space do not depend on that choice.
* Gaussian-kernel smoothing (Nadaraya-Watson), one smoother per time step,
  with per-dimension Silverman bandwidths unless given explicitly.

Polynomial bases enumerate monomials in a fixed order: the constant first,
then by total degree, ties broken lexicographically by the index tuple of
the participating features (e.g. for two features: 1, x1, x2, x1^2, x1*x2,
x2^2). ``cross_terms=False`` keeps only single-feature powers.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations_with_replacement
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (
    EmptySampleSet,
    GridMismatch,
    InsufficientSamples,
    InvalidArgument,
    ShapeError,
    UnsupportedTimestep,
)
from .products import PathStateTable
from .scenarios import ScenarioSet
from .valuation import ValueTable

RANK_TOLERANCE = 1e-10
TIME_EVAL_TOL = 1e-12


class SmootherKind(str, Enum):
    POLYNOMIAL_PER_TIMESTEP = "polynomial_per_timestep"
    POLYNOMIAL_GLOBAL = "polynomial_global"
    KERNEL_PER_TIMESTEP = "kernel_per_timestep"


@dataclass(frozen=True)
class SampleSet:
    """(X, Y) pairs with provenance.

    x rows are laid out as (time value, factor_0..factor_{s-1},
    state_0..state_{s_a-1}); provenance keeps the originating scenario and
    time indices. Only active cells ever become samples.
    """

    x: np.ndarray  # (N, 1 + n_factors + n_state)
    y: np.ndarray  # (N,)
    scenario_idx: np.ndarray
    time_idx: np.ndarray
    n_factors: int
    n_state: int

    def __len__(self) -> int:
        return int(self.y.size)


def build_sample_set(scenarios: ScenarioSet, states: PathStateTable, values: ValueTable,
                     times=None, paths=None) -> SampleSet:
    """Collect one sample per active (time, scenario) cell in the subsets.

    times/paths are grid/scenario indices (None means all). Inactive cells
    are excluded; a time index outside the grid raises GridMismatch.
    """
    T = len(scenarios.grid)
    n = scenarios.n_scenarios
    if len(states.grid) != T or states.n_scenarios != n:
        raise ShapeError("state table does not match the scenario set")
    if len(values.grid) != T or values.values.shape[1] != n:
        raise ShapeError("value table does not match the scenario set")
    if times is None:
        t_sel = np.arange(T)
    else:
        t_sel = np.asarray(sorted(set(int(t) for t in times)), dtype=np.int64)
        if t_sel.size and (t_sel.min() < 0 or t_sel.max() >= T):
            raise GridMismatch("requested time index outside the grid")
    if paths is None:
        w_sel = np.arange(n)
    else:
        w_sel = np.asarray(sorted(set(int(w) for w in paths)), dtype=np.int64)
        if w_sel.size and (w_sel.min() < 0 or w_sel.max() >= n):
            raise InvalidArgument("requested scenario index out of range")

    s, s_a = scenarios.n_factors, states.state_dim
    rows_t, rows_w = [], []
    for t in t_sel:
        active = w_sel[scenarios.activation[w_sel] <= t]
        rows_t.append(np.full(active.size, t, dtype=np.int64))
        rows_w.append(active)
    t_idx = np.concatenate(rows_t) if rows_t else np.empty(0, dtype=np.int64)
    w_idx = np.concatenate(rows_w) if rows_w else np.empty(0, dtype=np.int64)
    x = np.empty((t_idx.size, 1 + s + s_a), dtype=np.float64)
    x[:, 0] = scenarios.grid.times[t_idx]
    x[:, 1:1 + s] = scenarios.values[t_idx, w_idx, :]
    if s_a:
        x[:, 1 + s:] = states.values[t_idx, w_idx, :]
    y = values.values[t_idx, w_idx]
    return SampleSet(x, y, w_idx, t_idx, s, s_a)


# ---------------------------------------------------------------------------
# polynomial basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BasisSpec:
    """Monomial basis specification.

    dimensions selects which X components enter the regression, as indices
    into the (time, factors..., states...) layout; None means every non-time
    component (the global fit adds the time column itself).
    """

    degree: int = 2
    cross_terms: bool = True
    dimensions: tuple[int, ...] | None = None

    def __post_init__(self):
        if int(self.degree) < 0:
            raise InvalidArgument("basis degree must be non-negative")
        object.__setattr__(self, "degree", int(self.degree))
        if self.dimensions is not None:
            dims = tuple(int(d) for d in self.dimensions)
            if len(set(dims)) != len(dims) or any(d < 0 for d in dims):
                raise InvalidArgument("basis dimensions must be distinct and non-negative")
            object.__setattr__(self, "dimensions", dims)

    def monomials(self, n_features: int) -> list[tuple[int, ...]]:
        """Exponent tuples (as repeated feature indices), documented order."""
        out: list[tuple[int, ...]] = []
        for deg in range(self.degree + 1):
            for combo in combinations_with_replacement(range(n_features), deg):
                if not self.cross_terms and len(set(combo)) > 1:
                    continue
                out.append(combo)
        return out

    def n_basis(self, n_features: int) -> int:
        return len(self.monomials(n_features))

    def expand(self, features: np.ndarray) -> np.ndarray:
        """Design matrix for (N, n_features) inputs."""
        features = np.atleast_2d(np.asarray(features, dtype=np.float64))
        cols = []
        for combo in self.monomials(features.shape[1]):
            col = np.ones(features.shape[0], dtype=np.float64)
            for j in combo:
                col = col * features[:, j]
            cols.append(col)
        return np.column_stack(cols)

    def resolve_features(self, n_factors: int, n_state: int, include_time: bool) -> tuple[int, ...]:
        if self.dimensions is not None:
            return self.dimensions
        base = tuple(range(1, 1 + n_factors + n_state))
        return ((0,) + base) if include_time else base


# ---------------------------------------------------------------------------
# fitted pieces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyFit:
    """One least-squares fit plus diagnostics.

    singular_values/vt/sigma2 support prediction standard errors and are not
    persisted; a reloaded fit predicts identically but reports no errors.
    """

    coefficients: np.ndarray
    rank: int
    cond: float
    residual_norm: float
    n_samples: int
    basis: BasisSpec
    feature_indices: tuple[int, ...]
    x_min: np.ndarray
    x_max: np.ndarray
    time_index: int | None = None
    time: float | None = None
    singular_values: np.ndarray | None = field(default=None, repr=False)
    vt: np.ndarray | None = field(default=None, repr=False)
    sigma2: float | None = field(default=None, repr=False)

    def design(self, x_rows: np.ndarray) -> np.ndarray:
        return self.basis.expand(x_rows[:, self.feature_indices])

    def predict(self, x_rows: np.ndarray) -> np.ndarray:
        return self.design(x_rows) @ self.coefficients

    def prediction_stderr(self, x_rows: np.ndarray) -> np.ndarray:
        """Standard error of the fitted mean at query rows (homoskedastic
        OLS formula on the rank-truncated factorization)."""
        if self.singular_values is None or self.vt is None or self.sigma2 is None:
            raise InvalidArgument("prediction errors unavailable on a reloaded fit")
        b = self.design(x_rows)
        proj = (b @ self.vt[: self.rank].T) / self.singular_values[: self.rank]
        return np.sqrt(self.sigma2 * np.sum(proj * proj, axis=1))

    def extrapolates(self, x_rows: np.ndarray) -> np.ndarray:
        f = x_rows[:, self.feature_indices]
        return np.any((f < self.x_min[None, :]) | (f > self.x_max[None, :]), axis=1)


@dataclass(frozen=True)
class KernelFit:
    """Retained samples plus bandwidths for Nadaraya-Watson prediction."""

    x_samples: np.ndarray  # (N, d) selected feature columns
    y_samples: np.ndarray
    bandwidths: np.ndarray  # (d,)
    n_samples: int
    feature_indices: tuple[int, ...]
    x_min: np.ndarray
    x_max: np.ndarray
    time_index: int | None = None
    time: float | None = None

    def predict(self, x_rows: np.ndarray, with_flags: bool = False):
        q = np.ascontiguousarray(x_rows[:, self.feature_indices], dtype=np.float64)
        pred, underflow = _kernels.get().nw_predict(
            self.x_samples, self.y_samples, 1.0 / self.bandwidths, q
        )
        if with_flags:
            return pred, underflow.astype(bool)
        return pred

    def extrapolates(self, x_rows: np.ndarray) -> np.ndarray:
        f = x_rows[:, self.feature_indices]
        return np.any((f < self.x_min[None, :]) | (f > self.x_max[None, :]), axis=1)


def fit_polynomial(samples: SampleSet, basis: BasisSpec, solver: str = "svd") -> PolyFit:
    """Least-squares coefficients for the basis over the sample set.

    solver 'svd' (default) returns the minimal-norm solution on
    rank-deficient designs; solver 'normal' solves the normal equations
    ``(B'B) c = B'Y`` directly and requires a full-rank design. Diagnostics
    (rank, condition estimate, residual norm) always come from the SVD.
    """
    if len(samples) == 0:
        raise EmptySampleSet("cannot fit on an empty sample set")
    if solver not in ("svd", "normal"):
        raise InvalidArgument("solver must be 'svd' or 'normal'")
    feat_idx = basis.resolve_features(samples.n_factors, samples.n_state, include_time=False)
    if max(feat_idx, default=0) >= samples.x.shape[1]:
        raise ShapeError("basis dimensions exceed the sample layout")
    features = samples.x[:, feat_idx]
    B = basis.expand(features)
    y = samples.y

    u, s, vt = np.linalg.svd(B, full_matrices=False)
    rank = int(np.sum(s > s[0] * RANK_TOLERANCE)) if s.size else 0
    if solver == "normal":
        try:
            coeff = np.linalg.solve(B.T @ B, B.T @ y)
        except np.linalg.LinAlgError:
            raise InvalidArgument("normal equations are singular; use the svd solver")
    else:
        coeff = vt[:rank].T @ ((u[:, :rank].T @ y) / s[:rank])
    resid = B @ coeff - y
    sse = float(resid @ resid)
    return PolyFit(
        coefficients=coeff,
        rank=rank,
        cond=float(s[0] / s[rank - 1]) if rank else math.inf,
        residual_norm=math.sqrt(sse),
        n_samples=len(samples),
        basis=basis,
        feature_indices=feat_idx,
        x_min=features.min(axis=0),
        x_max=features.max(axis=0),
        singular_values=s,
        vt=vt,
        sigma2=sse / max(len(samples) - rank, 1),
    )


def silverman_bandwidths(x: np.ndarray) -> np.ndarray:
    """Per-dimension rule-of-thumb bandwidths
    ``h_j = std_j * (4 / ((d + 2) n))^(1 / (d + 4))`` with a unit fallback
    for degenerate (constant or single-sample) dimensions."""
    n, d = x.shape
    if n < 2:
        return np.ones(d)
    std = x.std(axis=0, ddof=1)
    factor = (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
    h = std * factor
    h[~(h > 0)] = 1.0
    return h


def fit_kernel(samples: SampleSet, bandwidth=None, dimensions=None) -> KernelFit:
    """Nadaraya-Watson smoother state over the samples.

    bandwidth: positive scalar or per-dimension array; None selects
    Silverman's rule per dimension.
    """
    if len(samples) == 0:
        raise EmptySampleSet("cannot fit on an empty sample set")
    basis = BasisSpec(dimensions=tuple(dimensions) if dimensions is not None else None)
    feat_idx = basis.resolve_features(samples.n_factors, samples.n_state, include_time=False)
    x = np.ascontiguousarray(samples.x[:, feat_idx], dtype=np.float64)
    d = x.shape[1]
    if bandwidth is None:
        h = silverman_bandwidths(x)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (d,)).copy()
        if np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise InvalidArgument("bandwidth must be positive")
    return KernelFit(
        x_samples=x,
        y_samples=np.ascontiguousarray(samples.y, dtype=np.float64),
        bandwidths=h,
        n_samples=len(samples),
        feature_indices=feat_idx,
        x_min=x.min(axis=0),
        x_max=x.max(axis=0),
    )


# ---------------------------------------------------------------------------
# the price function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Smoother:
    """The fitted price function F(time, risk factors, path state).

    Per-timestep kinds hold one fit per supported time step and refuse
    evaluation elsewhere; the global kind holds a single fit with time as a
    regression dimension.
    """

    kind: SmootherKind
    n_factors: int
    n_state: int
    basis: BasisSpec | None
    fits: tuple  # PolyFit/KernelFit, per-timestep entries carry time_index/time
    diagnostics: dict = field(default_factory=dict)

    def _fit_for_time(self, t: float):
        if self.kind == SmootherKind.POLYNOMIAL_GLOBAL:
            return self.fits[0]
        for f in self.fits:
            if abs(f.time - t) <= TIME_EVAL_TOL * max(1.0, abs(t)):
                return f
        raise UnsupportedTimestep(f"no fit for time {t}")

    @property
    def fitted_time_indices(self) -> tuple[int, ...]:
        return tuple(f.time_index for f in self.fits if f.time_index is not None)

    def _check_shapes(self, x: np.ndarray, a: np.ndarray) -> None:
        if x.shape[1] != self.n_factors:
            raise ShapeError(f"expected {self.n_factors} risk factors, got {x.shape[1]}")
        if a.shape[1] != self.n_state:
            raise ShapeError(f"expected {self.n_state} state components, got {a.shape[1]}")

    def evaluate(self, t: float, x, a=()) -> float:
        """Price estimate at one (time, factors, state) tuple. The raw
        smoother output is returned even when negative."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        a = np.asarray(a, dtype=np.float64).reshape(1, -1)
        self._check_shapes(x, a)
        row = np.concatenate(([[t]], x, a), axis=1)
        fitted = self._fit_for_time(float(t))
        return float(fitted.predict(row)[0])

    def evaluate_batch(self, t: float, x: np.ndarray, a: np.ndarray | None = None):
        """Vectorized evaluation at one time.

        x is (m, n_factors), or (m,) for single-factor smoothers. Returns
        (prices, extrapolated, underflow): boolean flags mark queries outside
        the fit's sample bounding box and kernel queries whose raw weights
        underflowed.
        """
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.n_factors == 1 else np.atleast_2d(x)
        m = x.shape[0]
        a = np.zeros((m, 0)) if a is None else np.asarray(a, dtype=np.float64).reshape(m, -1)
        self._check_shapes(x, a)
        rows = np.column_stack([np.full(m, float(t)), x, a])
        fitted = self._fit_for_time(float(t))
        underflow = np.zeros(m, dtype=bool)
        if isinstance(fitted, KernelFit):
            prices, underflow = fitted.predict(rows, with_flags=True)
        else:
            prices = fitted.predict(rows)
        return prices, fitted.extrapolates(rows), underflow


def fit(scenarios: ScenarioSet, states: PathStateTable, values: ValueTable,
        mode: SmootherKind | str, basis: BasisSpec | None = None,
        times=None, paths=None, bandwidth=None, solver: str = "svd") -> Smoother:
    """Build the price function from simulation outputs.

    Per-timestep modes fit once per entry of `times` (grid indices; default
    every grid time) over that time's active samples; the global mode fits
    one regression with the time value as an extra dimension. A requested
    time with zero active samples raises InsufficientSamples.
    """
    mode = SmootherKind(mode)
    if basis is None:
        basis = BasisSpec()
    T = len(scenarios.grid)
    time_list = list(range(T)) if times is None else [int(t) for t in times]
    for t in time_list:
        if not 0 <= t < T:
            raise GridMismatch(f"requested time index {t} outside the grid")

    if mode == SmootherKind.POLYNOMIAL_GLOBAL:
        samples = build_sample_set(scenarios, states, values, times=time_list, paths=paths)
        if len(samples) == 0:
            raise InsufficientSamples("no active samples for the global fit")
        g_basis = basis
        if g_basis.dimensions is None:
            g_basis = replace(basis, dimensions=basis.resolve_features(
                samples.n_factors, samples.n_state, include_time=True))
        fitted = fit_polynomial(samples, g_basis, solver=solver)
        return Smoother(mode, scenarios.n_factors, states.state_dim, g_basis, (fitted,))

    fits = []
    for t in time_list:
        samples = build_sample_set(scenarios, states, values, times=[t], paths=paths)
        if len(samples) == 0:
            raise InsufficientSamples(
                f"no active samples at time index {t}", time_index=t)
        tval = float(scenarios.grid.times[t])
        if mode == SmootherKind.POLYNOMIAL_PER_TIMESTEP:
            f = fit_polynomial(samples, basis, solver=solver)
        else:
            f = fit_kernel(samples, bandwidth=bandwidth, dimensions=basis.dimensions)
        fits.append(replace(f, time_index=t, time=tval))
    return Smoother(mode, scenarios.n_factors, states.state_dim,
                    basis if mode == SmootherKind.POLYNOMIAL_PER_TIMESTEP else None,
                    tuple(fits))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

SMOOTHER_SCHEMA_VERSION = 1


def smoother_to_dict(smoother: Smoother) -> dict:
    doc = {
        "schema_version": SMOOTHER_SCHEMA_VERSION,
        "kind": smoother.kind.value,
        "n_factors": smoother.n_factors,
        "n_state": smoother.n_state,
        "basis": None,
        "fits": [],
    }
    if smoother.basis is not None:
        doc["basis"] = {
            "degree": smoother.basis.degree,
            "cross_terms": smoother.basis.cross_terms,
            "dimensions": list(smoother.basis.dimensions)
            if smoother.basis.dimensions is not None else None,
        }
    for f in smoother.fits:
        entry = {
            "time_index": f.time_index,
            "time": f.time,
            "n_samples": f.n_samples,
            "feature_indices": list(f.feature_indices),
            "x_min": [float(v) for v in f.x_min],
            "x_max": [float(v) for v in f.x_max],
        }
        if isinstance(f, PolyFit):
            entry.update({
                "coefficients": [float(c) for c in f.coefficients],
                "rank": f.rank,
                "cond": f.cond,
                "residual_norm": f.residual_norm,
            })
        else:
            entry.update({
                "bandwidths": [float(h) for h in f.bandwidths],
                "x_samples": [[float(v) for v in row] for row in f.x_samples],
                "y_samples": [float(v) for v in f.y_samples],
            })
        doc["fits"].append(entry)
    return doc


def smoother_from_dict(doc: dict) -> Smoother:
    from .errors import IncompatibleArtifact

    if doc.get("schema_version") != SMOOTHER_SCHEMA_VERSION:
        raise IncompatibleArtifact(
            f"unsupported smoother schema version {doc.get('schema_version')!r}")
    kind = SmootherKind(doc["kind"])
    basis = None
    if doc.get("basis") is not None:
        b = doc["basis"]
        basis = BasisSpec(b["degree"], b["cross_terms"],
                          tuple(b["dimensions"]) if b["dimensions"] is not None else None)
    fits = []
    for entry in doc["fits"]:
        common = dict(
            n_samples=int(entry["n_samples"]),
            feature_indices=tuple(entry["feature_indices"]),
            x_min=np.asarray(entry["x_min"], dtype=np.float64),
            x_max=np.asarray(entry["x_max"], dtype=np.float64),
            time_index=entry["time_index"],
            time=entry["time"],
        )
        if "coefficients" in entry:
            fits.append(PolyFit(
                coefficients=np.asarray(entry["coefficients"], dtype=np.float64),
                rank=int(entry["rank"]),
                cond=float(entry["cond"]),
                residual_norm=float(entry["residual_norm"]),
                basis=basis if basis is not None else BasisSpec(),
                **common,
            ))
        else:
            fits.append(KernelFit(
                x_samples=np.asarray(entry["x_samples"], dtype=np.float64).reshape(
                    int(entry["n_samples"]), -1),
                y_samples=np.asarray(entry["y_samples"], dtype=np.float64),
                bandwidths=np.asarray(entry["bandwidths"], dtype=np.float64),
                **common,
            ))
    return Smoother(kind, int(doc["n_factors"]), int(doc["n_state"]), basis, tuple(fits))


def write_json_atomic(path, doc: dict) -> None:
    """Write JSON via a temp file + rename so readers never see a torn file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_smoother(path, smoother: Smoother) -> None:
    write_json_atomic(path, smoother_to_dict(smoother))


def load_smoother(path) -> Smoother:
    with open(path) as fh:
        return smoother_from_dict(json.load(fh))
