"""numba twins of the kernels in `_kernels`. Import only via `_kernels.get`."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def gbm_paths(starts, z, drift, vol):
    m, n, s = z.shape
    out = np.empty((m + 1, n, s), dtype=np.float64)
    for i in range(n):
        for f in range(s):
            out[0, i, f] = starts[i, f]
    for k in range(m):
        for i in range(n):
            for f in range(s):
                out[k + 1, i, f] = out[k, i, f] * math.exp(drift[k, f] + vol[k, f] * z[k, i, f])
    return out


@njit(cache=True)
def running_average(prices, act, init_avg, init_count):
    T, n = prices.shape
    out = np.full((T, n), np.nan, dtype=np.float64)
    for i in range(n):
        k0 = act[i]
        out[k0, i] = init_avg[i]
        c = float(init_count[i])
        for k in range(k0 + 1, T):
            out[k, i] = (c * out[k - 1, i] + prices[k, i]) / (c + 1.0)
            c += 1.0
    return out


@njit(cache=True)
def barrier_alive(prices, act, init_alive, barrier):
    T, n = prices.shape
    out = np.full((T, n), np.nan, dtype=np.float64)
    for i in range(n):
        k0 = act[i]
        out[k0, i] = init_alive[i]
        for k in range(k0 + 1, T):
            survived = 1.0 if prices[k, i] < barrier else 0.0
            out[k, i] = out[k - 1, i] * survived
    return out


@njit(cache=True)
def nw_predict(xs, y, inv_h, queries):
    ns, d = xs.shape
    nq = queries.shape[0]
    pred = np.empty(nq, dtype=np.float64)
    underflow = np.zeros(nq, dtype=np.uint8)
    for q in range(nq):
        dmin = np.inf
        imin = 0
        d2 = np.empty(ns, dtype=np.float64)
        for i in range(ns):
            acc = 0.0
            for j in range(d):
                t = (queries[q, j] - xs[i, j]) * inv_h[j]
                acc += t * t
            d2[i] = acc
            if acc < dmin:
                dmin = acc
                imin = i
        if math.exp(-0.5 * dmin) == 0.0:
            pred[q] = y[imin]
            underflow[q] = 1
            continue
        wsum = 0.0
        wy = 0.0
        for i in range(ns):
            w = math.exp(-0.5 * (d2[i] - dmin))
            wsum += w
            wy += w * y[i]
        pred[q] = wy / wsum
    return pred, underflow
