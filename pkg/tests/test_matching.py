import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from vmfgae import matching
from vmfgae.errors import NumericalError, ValidationError
from vmfgae.graph import PartialGraph, PartialMask, apply_mask
from vmfgae.matching import (
    CompletionConfig, RbfTransform, alternating_minimize, complete_graph, matching_objective,
    median_bandwidth, rbf_fit, sinkhorn_project,
)
from vmfgae.model import reconstruction_loss

FAST = CompletionConfig(max_rounds=15)


def test_sinkhorn_single_entry():
    out = sinkhorn_project(np.array([[5.0]]))
    assert out.p[0, 0] == 1.0


def test_sinkhorn_two_by_two_cross_ratio():
    # the limit keeps m11 m22 / (m12 m21); for [[a, 1-a], [1-a, a]] that gives a / (1 - a) = sqrt(4 / 6)
    s = math.sqrt((1 * 4) / (2 * 3))
    a = s / (1 + s)
    out = sinkhorn_project(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_allclose(out.p, [[a, 1 - a], [1 - a, a]], atol=1e-4)
    assert abs(a - 0.44949) < 1e-5


def test_sinkhorn_fixed_point():
    p = np.array([[0.2, 0.8], [0.8, 0.2]])
    out = sinkhorn_project(p)
    np.testing.assert_allclose(out.p, p, atol=1e-15)
    assert out.iterations == 1 and out.converged


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.integers(0, 2**32 - 1))
def test_sinkhorn_marginals(n, seed):
    m = np.random.default_rng(seed).random((n, n)) + 1e-3
    out = sinkhorn_project(m, 5000, 1e-9)
    assert out.converged
    np.testing.assert_allclose(out.p.sum(axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(out.p.sum(axis=0), 1.0, atol=1e-9)


@pytest.mark.parametrize("bad", [np.array([[1.0, 0.0], [1.0, 1.0]]), np.ones((2, 3)), np.array([[np.inf]])])
def test_sinkhorn_rejects_bad_input(bad):
    with pytest.raises(ValidationError):
        sinkhorn_project(bad)


def test_rbf_zero_coefficients_are_identity():
    v = np.random.default_rng(0).normal(size=(5, 3))
    x = np.random.default_rng(1).normal(size=(7, 3))
    z = RbfTransform.identity(v, 0.5, 1.0)
    assert z(x).tobytes() == x.tobytes()


def test_rbf_nothing_to_deform():
    v = np.random.default_rng(0).normal(size=(6, 3))
    fit = rbf_fit(v, v, np.eye(6), median_bandwidth(v), 1.0)
    np.testing.assert_allclose(fit.coeffs, 0.0, atol=1e-12)


def test_rbf_huge_ridge_is_identity():
    rng = np.random.default_rng(3)
    v, t = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    p = sinkhorn_project(rng.random((6, 6)) + 0.1).p
    fit = rbf_fit(v, t, p, 1.0, 1e12)
    assert np.abs(fit.coeffs).max() < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_rbf_fit_is_the_ridge_optimum(seed):
    rng = np.random.default_rng(seed)
    n, d, ridge = 5, 3, 0.3
    v, t = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    p = sinkhorn_project(rng.random((n, n)) + 0.1).p
    sigma = median_bandwidth(v)
    fit = rbf_fit(v, t, p, sigma, ridge)
    zero = RbfTransform.identity(v, sigma, ridge)
    assert matching_objective(p, fit, v, t) <= matching_objective(p, zero, v, t)

    # independent route: generic quasi-Newton on the same objective
    def objective(w):
        return matching_objective(p, RbfTransform(v, w.reshape(n, d), sigma, ridge), v, t)

    res = optimize.minimize(objective, np.zeros(n * d), method="BFGS", options={"gtol": 1e-10})
    assert matching_objective(p, fit, v, t) <= res.fun + 1e-9
    np.testing.assert_allclose(fit.coeffs.ravel(), res.x, atol=1e-4)


def test_matching_objective_examples():
    rng = np.random.default_rng(4)
    v = rng.normal(size=(5, 3))
    perm = rng.permutation(5)
    p = np.eye(5)[perm]
    ident = RbfTransform.identity(v, 1.0, 1.0)
    # p[i, perm[i]] = 1 pairs source row i with target row perm[i]
    t = np.empty_like(v)
    t[perm] = v
    assert matching_objective(p, ident, v, t) == 0.0
    q = sinkhorn_project(rng.random((5, 5)) + 0.1).p
    w = rng.normal(size=(5, 3))
    base = matching_objective(q, ident, v, w)
    assert base >= 0
    assert matching_objective(q, RbfTransform.identity(2 * v, 1.0, 1.0), 2 * v, 2 * w) == pytest.approx(4 * base)


def full(g):
    return PartialGraph(g, PartialMask.full(g.n))


def test_completion_does_not_hurt_easy_case(small_run):
    model = small_run.model
    for g in small_run.dataset.train[:3]:
        cand, _, _, _ = alternating_minimize(full(g), model, FAST)
        direct = reconstruction_loss(g, model.reconstruct(g))
        assert cand.recon_loss <= 1.05 * direct


def test_trace_bookkeeping(small_run):
    g = small_run.dataset.test[0].graph
    mask = PartialMask.random(g.n, 0.2, np.random.default_rng(0))
    cand, corr, zeta, ghat = alternating_minimize(apply_mask(g, mask), small_run.model, FAST)
    assert np.isfinite(cand.trace).all()
    assert cand.objective == min(cand.trace)
    # exact block minimization: the warp update never increases the matching term
    for before, after in cand.zeta_trace:
        assert after <= before + 1e-12
    np.testing.assert_allclose(np.linalg.norm(cand.z, axis=1), 1.0, atol=1e-12)
    assert ghat.shape == (g.n, g.n)


def test_alternating_minimize_deterministic(small_run):
    g = small_run.dataset.test[1].graph
    pg = apply_mask(g, PartialMask.random(g.n, 0.3, np.random.default_rng(5)))
    a = alternating_minimize(pg, small_run.model, FAST)
    b = alternating_minimize(pg, small_run.model, FAST)
    assert a[0].z.tobytes() == b[0].z.tobytes()
    assert a[0].trace == b[0].trace


def test_single_restart_is_single_run(small_run):
    pg = full(small_run.dataset.test[2].graph)
    res = complete_graph(pg, small_run.model, 1, 1, np.random.default_rng(0), FAST)
    cand, _, _, ghat = alternating_minimize(pg, small_run.model, FAST)
    assert len(res) == 1
    assert res.best.graph.tobytes() == ghat.tobytes()
    assert res.best.objective == cand.objective


def test_identical_restarts_deduplicate(small_run):
    pg = full(small_run.dataset.test[0].graph)
    cfg = CompletionConfig(max_rounds=5, perturbation=0.0)
    res = complete_graph(pg, small_run.model, 3, 3, np.random.default_rng(0), cfg)
    assert len(res) == 1


def test_distinct_restarts_sorted(small_run):
    pg = full(small_run.dataset.test[0].graph)
    res = complete_graph(pg, small_run.model, 3, 3, np.random.default_rng(0), CompletionConfig(max_rounds=5))
    objs = [c.objective for c in res.candidates]
    assert objs == sorted(objs)
    for i, a in enumerate(res.candidates):
        for b in res.candidates[i + 1:]:
            assert np.linalg.norm(a.graph - b.graph) >= 1e-3


def test_failed_restart_is_skipped(small_run, monkeypatch):
    real = matching.alternating_minimize

    def flaky(pg, model, cfg, z0=None, restart=0):
        if restart == 1:
            raise NumericalError("completion objective is non-finite")
        return real(pg, model, cfg, z0=z0, restart=restart)

    monkeypatch.setattr(matching, "alternating_minimize", flaky)
    pg = full(small_run.dataset.test[0].graph)
    res = complete_graph(pg, small_run.model, 1, 2, np.random.default_rng(0), CompletionConfig(max_rounds=3))
    assert len(res) == 1 and res.failures[0][0] == 1

    monkeypatch.setattr(matching, "alternating_minimize",
                        lambda *a, **k: (_ for _ in ()).throw(NumericalError("boom")))
    with pytest.raises(NumericalError, match="all 2"):
        complete_graph(pg, small_run.model, 1, 2, np.random.default_rng(0), FAST)


def test_completion_argument_checks(small_run):
    g = small_run.dataset.test[0].graph
    with pytest.raises(ValidationError):
        complete_graph(full(g), small_run.model, k=2, restarts=1)
    with pytest.raises(ValidationError):
        alternating_minimize(apply_mask(g, PartialMask(np.eye(g.n))), small_run.model, FAST)
    with pytest.raises(ValidationError):
        CompletionConfig(ridge=0.0)


def test_full_mask_completion_recovers_structure(acceptance_run):
    agree = []
    for lg in acceptance_run.dataset.test:
        g = lg.graph
        res = complete_graph(full(g), acceptance_run.model, 1, 1, np.random.default_rng(0))
        off = ~np.eye(g.n, dtype=bool)
        agree.append(np.mean((res.best.graph > 0.5)[off] == (g.binary() > 0.5)[off]))
    assert np.mean(agree) >= 0.95
