"""Hot numeric kernels.

The numba build is used when numba imports cleanly.  Setting the environment
variable ``VMFGAE_DISABLE_NUMBA=1`` forces the pure-numpy path; both follow the
same arithmetic and agree to rounding.
"""
import os

import numpy as np

from . import _numpy as numpy_kernels

_disabled = os.environ.get("VMFGAE_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")

numba_kernels = None
if not _disabled:
    try:
        from . import _numba as numba_kernels
    except ImportError:  # pragma: no cover - numba missing
        numba_kernels = None

_impl = numba_kernels if numba_kernels is not None else numpy_kernels
BACKEND = "numba" if numba_kernels is not None else "numpy"


def vmf_cosines(beta_draws, uniforms, kappa, dim, need, run=0):
    return _impl.vmf_cosines(
        np.ascontiguousarray(beta_draws, dtype=np.float64),
        np.ascontiguousarray(uniforms, dtype=np.float64),
        float(kappa), float(dim), int(need), int(run),
    )


def sinkhorn(m, max_iters, tol):
    return _impl.sinkhorn(np.ascontiguousarray(m, dtype=np.float64), int(max_iters), float(tol))


def pairwise_sq_dists(x, y):
    return _impl.pairwise_sq_dists(np.ascontiguousarray(x, dtype=np.float64),
                                   np.ascontiguousarray(y, dtype=np.float64))


def gaussian_gram(x, y, sigma):
    return _impl.gaussian_gram(np.ascontiguousarray(x, dtype=np.float64),
                               np.ascontiguousarray(y, dtype=np.float64), float(sigma))


def mann_whitney_auc(scores, labels):
    return float(_impl.mann_whitney_auc(np.ascontiguousarray(scores, dtype=np.float64),
                                        np.ascontiguousarray(labels, dtype=np.int64)))


__all__ = [
    "BACKEND", "numpy_kernels", "numba_kernels",
    "vmf_cosines", "sinkhorn", "pairwise_sq_dists", "gaussian_gram", "mann_whitney_auc",
]
