import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vmfgae.kernels import _numba as nb
from vmfgae.kernels import _numpy as npk


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 200.0), st.integers(2, 16))
def test_vmf_cosines_agree(seed, kappa, m):
    rng = np.random.default_rng(seed)
    beta = rng.beta(0.5 * (m - 1), 0.5 * (m - 1), size=300)
    unif = rng.random(300)
    a = npk.vmf_cosines(beta, unif, kappa, float(m), 200, 0)
    b = nb.vmf_cosines(beta, unif, kappa, float(m), 200, 0)
    assert a[1:] == b[1:]
    np.testing.assert_allclose(a[0], b[0], rtol=1e-13, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12))
def test_sinkhorn_agrees(seed, n):
    m = np.random.default_rng(seed).random((n, n)) + 0.01
    pa, ia, ea = npk.sinkhorn(m, 2000, 1e-10)
    pb, ib, eb = nb.sinkhorn(m, 2000, 1e-10)
    assert ia == ib
    np.testing.assert_allclose(pa, pb, rtol=1e-12, atol=1e-15)


def test_distance_kernels_agree():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(9, 4)), rng.normal(size=(7, 4))
    np.testing.assert_allclose(npk.pairwise_sq_dists(x, y), nb.pairwise_sq_dists(x, y), rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(npk.gaussian_gram(x, y, 0.8), nb.gaussian_gram(x, y, 0.8), rtol=1e-12)
    brute = ((x[:, None, :] - y[None, :, :]) ** 2).sum(-1)
    np.testing.assert_allclose(nb.pairwise_sq_dists(x, y), brute, rtol=1e-12, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_agrees_with_pair_enumeration(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([p[1] for p in pairs], dtype=np.int64)
    if labels.min() == labels.max():
        return
    pos, neg = scores[labels == 1], scores[labels == 0]
    brute = ((pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()) / (pos.size * neg.size)
    assert npk.mann_whitney_auc(scores, labels) == pytest.approx(brute, abs=1e-12)
    assert nb.mann_whitney_auc(scores, labels) == pytest.approx(brute, abs=1e-12)


@pytest.mark.parametrize("flag, backend", [("1", "numpy"), ("", "numba")])
def test_env_flag_selects_backend(flag, backend):
    env = dict(os.environ, VMFGAE_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import vmfgae.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == backend
