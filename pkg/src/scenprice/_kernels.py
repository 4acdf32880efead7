"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

Backend selection is driven by the ``SCENPRICE_BACKEND`` environment
variable: ``numba`` (require numba, error if missing), ``numpy`` (force the
fallback), or ``auto``/unset (numba when importable, numpy otherwise).
``get(backend)`` also lets callers request a specific backend explicitly,
which is what the backend comparison benchmark does.

Both backends implement the same arithmetic step-for-step; remaining
differences are limited to last-ulp rounding of the transcendental calls.
"""
from __future__ import annotations

import os
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidArgument

ENV_VAR = "SCENPRICE_BACKEND"


class Kernels(NamedTuple):
    name: str
    gbm_paths: Callable
    running_average: Callable
    barrier_alive: Callable
    nw_predict: Callable


# ---------------------------------------------------------------------------
# numpy fallback implementations (vectorized across scenarios, looped in time)
# ---------------------------------------------------------------------------

def _np_gbm_paths(starts, z, drift, vol):
    """Exact log-Euler GBM stepping.

    starts: (n, s) values at the first time; z: (m, n, s) standard normals;
    drift: (m, s) per-step (mu - sigma^2/2)*dt; vol: (m, s) per-step
    sigma*sqrt(dt). Returns (m+1, n, s) paths.
    """
    m, n, s = z.shape
    out = np.empty((m + 1, n, s), dtype=np.float64)
    out[0] = starts
    for k in range(m):
        out[k + 1] = out[k] * np.exp(drift[k][None, :] + vol[k][None, :] * z[k])
    return out


def _np_running_average(prices, act, init_avg, init_count):
    """Running arithmetic average along each active path.

    prices: (T, n); act: (n,) activation index; init_avg: (n,) state at the
    activation fixing; init_count: (n,) fixings already absorbed there.
    Returns (T, n) with NaN before activation.
    """
    T, n = prices.shape
    out = np.full((T, n), np.nan, dtype=np.float64)
    for k in range(T):
        starting = act == k
        if np.any(starting):
            out[k, starting] = init_avg[starting]
        updating = act < k
        if np.any(updating):
            c = (init_count + (k - act)).astype(np.float64) - 1.0
            prev = out[k - 1, updating]
            out[k, updating] = (c[updating] * prev + prices[k, updating]) / (c[updating] + 1.0)
    return out


def _np_barrier_alive(prices, act, init_alive, barrier):
    """Knock-out flag along each active path: 1.0 while the path has stayed
    strictly below `barrier` at every fixing since activation, else 0.0."""
    T, n = prices.shape
    out = np.full((T, n), np.nan, dtype=np.float64)
    for k in range(T):
        starting = act == k
        if np.any(starting):
            out[k, starting] = init_alive[starting]
        updating = act < k
        if np.any(updating):
            survived = (prices[k, updating] < barrier).astype(np.float64)
            out[k, updating] = out[k - 1, updating] * survived
    return out


def _np_nw_predict(xs, y, inv_h, queries):
    """Nadaraya-Watson prediction with a Gaussian kernel.

    xs: (ns, d) sample locations; y: (ns,) sample values; inv_h: (d,)
    reciprocal bandwidths; queries: (nq, d). Returns (pred, underflow) where
    underflow marks queries whose raw kernel weights all underflowed to zero
    (prediction falls back to the nearest sample's y).
    """
    nq = queries.shape[0]
    pred = np.empty(nq, dtype=np.float64)
    underflow = np.zeros(nq, dtype=np.uint8)
    # chunked to bound the (chunk, ns) distance matrix
    chunk = max(1, int(4_000_000 // max(1, xs.shape[0])))
    for lo in range(0, nq, chunk):
        q = queries[lo:lo + chunk]
        diff = (q[:, None, :] - xs[None, :, :]) * inv_h[None, None, :]
        d2 = np.einsum("qsd,qsd->qs", diff, diff)
        dmin = d2.min(axis=1)
        imin = d2.argmin(axis=1)
        uf = np.exp(-0.5 * dmin) == 0.0
        w = np.exp(-0.5 * (d2 - dmin[:, None]))
        p = (w @ y) / w.sum(axis=1)
        p[uf] = y[imin[uf]]
        pred[lo:lo + chunk] = p
        underflow[lo:lo + chunk] = uf
    return pred, underflow


_NUMPY = Kernels(
    name="numpy",
    gbm_paths=_np_gbm_paths,
    running_average=_np_running_average,
    barrier_alive=_np_barrier_alive,
    nw_predict=_np_nw_predict,
)

_numba_kernels: Kernels | None = None
_numba_error: str | None = None


def _load_numba() -> Kernels | None:
    global _numba_kernels, _numba_error
    if _numba_kernels is not None or _numba_error is not None:
        return _numba_kernels
    try:
        from . import _kernels_numba as nbk
    except ImportError as exc:  # numba not installed or failed to import
        _numba_error = str(exc)
        return None
    _numba_kernels = Kernels(
        name="numba",
        gbm_paths=nbk.gbm_paths,
        running_average=nbk.running_average,
        barrier_alive=nbk.barrier_alive,
        nw_predict=nbk.nw_predict,
    )
    return _numba_kernels


def available_backends() -> tuple[str, ...]:
    if _load_numba() is not None:
        return ("numba", "numpy")
    return ("numpy",)


def default_backend() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise InvalidArgument(f"{ENV_VAR} must be 'auto', 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if _load_numba() is None:
            raise InvalidArgument(f"{ENV_VAR}=numba but numba is unavailable: {_numba_error}")
        return "numba"
    return "numba" if _load_numba() is not None else "numpy"


def get(backend: str | None = None) -> Kernels:
    """Kernel bundle for `backend` ('numba'/'numpy'), or the default one."""
    name = backend if backend is not None else default_backend()
    if name == "numpy":
        return _NUMPY
    if name == "numba":
        k = _load_numba()
        if k is None:
            raise InvalidArgument(f"numba backend unavailable: {_numba_error}")
        return k
    raise InvalidArgument(f"unknown backend {name!r}")
