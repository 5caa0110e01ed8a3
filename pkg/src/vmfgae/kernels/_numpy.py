"""Pure-numpy reference kernels.  Same contracts as the numba versions."""
import numpy as np


def vmf_envelope(kappa, dim):
    d = dim - 1.0
    b = d / (np.sqrt(4.0 * kappa * kappa + d * d) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + d * np.log(1.0 - x0 * x0)
    return b, x0, c


def vmf_cosines(beta_draws, uniforms, kappa, dim, need, run):
    """Walk a proposal stream with Wood's acceptance test.

    Returns ``(accepted cosines, proposals consumed, trailing reject run,
    overflow)`` where overflow is set once 1000 consecutive proposals were
    rejected.
    """
    b, x0, c = vmf_envelope(kappa, dim)
    d = dim - 1.0
    w = (1.0 - (1.0 + b) * beta_draws) / (1.0 - (1.0 - b) * beta_draws)
    ok = kappa * w + d * np.log(1.0 - x0 * w) - c >= np.log(uniforms)
    idx = np.flatnonzero(ok)
    # consecutive-reject runs, including the run carried in from the last batch
    starts = np.concatenate(([-1], idx))
    gaps = np.diff(np.concatenate((starts, [len(ok)]))) - 1
    gaps[0] += run
    if len(idx) >= need:
        used = int(idx[need - 1]) + 1
        overflow = bool(np.any(gaps[:need] >= 1000))
        return w[idx[:need]], used, 0, overflow
    overflow = bool(np.any(gaps >= 1000))
    return w[idx], len(ok), int(gaps[-1]), overflow


def sinkhorn(m, max_iters, tol):
    p = np.array(m, dtype=np.float64)
    err = np.inf
    for it in range(1, max_iters + 1):
        p /= p.sum(axis=1)[:, None]
        p /= p.sum(axis=0)[None, :]
        err = np.max(np.abs(p.sum(axis=1) - 1.0))
        if err < tol:
            return p, it, err
    return p, max_iters, err


def pairwise_sq_dists(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def gaussian_gram(x, y, sigma):
    return np.exp(-pairwise_sq_dists(x, y) / (2.0 * sigma * sigma))


def _midranks(values):
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    ranks = np.empty(len(values))
    # tie groups: boundaries where the sorted value changes
    edges = np.flatnonzero(np.diff(sorted_vals)) + 1
    starts = np.concatenate(([0], edges))
    ends = np.concatenate((edges, [len(values)]))
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def mann_whitney_auc(scores, labels):
    pos = labels > 0
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    ranks = _midranks(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
