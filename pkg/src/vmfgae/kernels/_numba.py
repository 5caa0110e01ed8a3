"""numba-compiled kernels; see ``_numpy`` for the reference semantics."""
import math

import numpy as np
from numba import njit

_OPTS = {"cache": True, "nogil": True}


@njit(**_OPTS)
def vmf_envelope(kappa, dim):
    d = dim - 1.0
    b = d / (math.sqrt(4.0 * kappa * kappa + d * d) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * math.log(1.0 - x0 * x0)
    return b, x0, c


@njit(**_OPTS)
def vmf_cosines(beta_draws, uniforms, kappa, dim, need, run):
    b, x0, c = vmf_envelope(kappa, dim)
    d = dim - 1.0
    out = np.empty(need)
    k = 0
    overflow = False
    n = beta_draws.shape[0]
    for i in range(n):
        e = beta_draws[i]
        w = (1.0 - (1.0 + b) * e) / (1.0 - (1.0 - b) * e)
        if kappa * w + d * math.log(1.0 - x0 * w) - c >= math.log(uniforms[i]):
            out[k] = w
            k += 1
            run = 0
            if k == need:
                return out, i + 1, 0, overflow
        else:
            run += 1
            if run >= 1000:
                overflow = True
    return out[:k], n, run, overflow


@njit(**_OPTS)
def sinkhorn(m, max_iters, tol):
    p = m.copy()
    n_rows, n_cols = p.shape
    err = np.inf
    for it in range(1, max_iters + 1):
        for i in range(n_rows):
            s = 0.0
            for j in range(n_cols):
                s += p[i, j]
            for j in range(n_cols):
                p[i, j] /= s
        for j in range(n_cols):
            s = 0.0
            for i in range(n_rows):
                s += p[i, j]
            for i in range(n_rows):
                p[i, j] /= s
        err = 0.0
        for i in range(n_rows):
            s = 0.0
            for j in range(n_cols):
                s += p[i, j]
            if abs(s - 1.0) > err:
                err = abs(s - 1.0)
        if err < tol:
            return p, it, err
    return p, max_iters, err


@njit(**_OPTS)
def pairwise_sq_dists(x, y):
    n, m = x.shape[0], y.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for k in range(x.shape[1]):
                t = x[i, k] - y[j, k]
                s += t * t
            out[i, j] = s
    return out


@njit(**_OPTS)
def gaussian_gram(x, y, sigma):
    d2 = pairwise_sq_dists(x, y)
    return np.exp(-d2 / (2.0 * sigma * sigma))


@njit(**_OPTS)
def mann_whitney_auc(scores, labels):
    n = scores.shape[0]
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        avg = (i + j + 2) / 2.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        i = j + 1
    n_pos = 0
    rank_sum = 0.0
    for k in range(n):
        if labels[k] > 0:
            n_pos += 1
            rank_sum += ranks[k]
    n_neg = n - n_pos
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
