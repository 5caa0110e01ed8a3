"""Graph completion by alternating latent search, soft correspondence and RBF warping.

The objective for a partial graph ``G`` and generated graph ``G_hat = dec(z)``:

    J(z, p, zeta) = Lr_observed(z) + eta * j(p, zeta)
    j(p, zeta)    = sum_ij p_ij ||v_hat_j - zeta(v_i)||^2 + ridge * sum_c ||w_c||^2

``v_i`` are connectivity-profile rows of ``G`` and ``v_hat_j`` row-normalized
rows of ``G_hat``.  ``p`` is doubly stochastic (Sinkhorn), ``zeta`` is the
identity plus a Gaussian RBF expansion centred on the ``v_i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as ad
from . import kernels
from .errors import NumericalError, ValidationError
from .graph import row_normalize
from .model import LOSS_VARIANTS, GraphInputs


@dataclass(frozen=True)
class CorrespondenceMatrix:
    p: np.ndarray
    iterations: int
    converged: bool
    error: float


def sinkhorn_project(m, max_iters=1000, tol=1e-9):
    """Alternate row and column normalization of a strictly positive matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"Sinkhorn needs a square matrix, got {m.shape}")
    if not np.isfinite(m).all() or (m <= 0).any():
        raise ValidationError("Sinkhorn input must be finite and strictly positive")
    p, iters, err = kernels.sinkhorn(m, max_iters, tol)
    return CorrespondenceMatrix(p, int(iters), bool(err < tol), float(err))


@dataclass(frozen=True)
class RbfTransform:
    centers: np.ndarray
    coeffs: np.ndarray
    sigma: float
    ridge: float

    @classmethod
    def identity(cls, centers, sigma, ridge):
        centers = np.asarray(centers, dtype=np.float64)
        return cls(centers, np.zeros_like(centers), float(sigma), float(ridge))

    def __call__(self, v):
        v = np.asarray(v, dtype=np.float64)
        if not self.coeffs.any():
            return v.copy()
        return v + kernels.gaussian_gram(v, self.centers, self.sigma) @ self.coeffs

    def penalty(self, ridge=None):
        ridge = self.ridge if ridge is None else ridge
        return ridge * float(np.sum(self.coeffs * self.coeffs))


def median_bandwidth(v):
    """Median pairwise distance between distinct rows (1.0 if all rows coincide)."""
    d2 = kernels.pairwise_sq_dists(v, v)
    iu = np.triu_indices(len(v), 1)
    d = np.sqrt(d2[iu])
    d = d[d > 0]
    return float(np.median(d)) if d.size else 1.0


def rbf_fit(v, t, p, sigma, ridge):
    """Coefficients minimizing ``sum_ij p_ij ||t_j - zeta(v_i)||^2 + ridge * ||W||^2`` in closed form."""
    if ridge <= 0:
        raise ValidationError("ridge weight must be positive")
    v = np.asarray(v, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if v.shape[1] != t.shape[1]:
        raise ValidationError(f"signature widths differ: {v.shape[1]} vs {t.shape[1]}")
    if p.shape != (v.shape[0], t.shape[0]):
        raise ValidationError(f"correspondence is {p.shape}, expected {(v.shape[0], t.shape[0])}")
    k = kernels.gaussian_gram(v, v, sigma)
    r = p.sum(axis=1)
    q = (p @ t) / r[:, None]
    kd = k * r[None, :]
    lhs = kd @ k + ridge * np.eye(len(v))
    coeffs = np.linalg.solve(lhs, kd @ (q - v))
    return RbfTransform(v.copy(), coeffs, float(sigma), float(ridge))


def matching_objective(p, zeta, v_g, v_ghat, ridge=None):
    """``sum_ij p_ij ||v_ghat_j - zeta(v_g_i)||^2 + ridge * sum ||w_c||^2``."""
    cost = kernels.pairwise_sq_dists(zeta(v_g), np.asarray(v_ghat, dtype=np.float64))
    return float(np.sum(np.asarray(p) * cost)) + zeta.penalty(ridge)


@dataclass(frozen=True)
class CompletionConfig:
    max_rounds: int = 100
    rel_tol: float = 1e-5
    z_steps: int = 20
    z_lr: float = 0.05
    eta: float = 0.01
    ridge: float = 1.0
    sigma: float | None = None
    tau_scale: float = 0.1
    sinkhorn_iters: int = 1000
    sinkhorn_tol: float = 1e-6
    perturbation: float = 0.3
    loss_variant: str = "cross_entropy"

    def __post_init__(self):
        if self.max_rounds < 1 or self.z_steps < 0:
            raise ValidationError("max_rounds must be >= 1 and z_steps >= 0")
        if self.ridge <= 0:
            raise ValidationError("ridge must be positive")
        if self.eta < 0 or self.tau_scale <= 0 or self.z_lr <= 0:
            raise ValidationError("eta must be >= 0; tau_scale and z_lr positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValidationError(f"unknown loss_variant {self.loss_variant!r}")


@dataclass
class LatentCandidate:
    z: np.ndarray
    objective: float
    restart: int
    recon_loss: float = 0.0
    match_loss: float = 0.0
    trace: list = field(default_factory=list)
    zeta_trace: list = field(default_factory=list)


@dataclass
class Candidate:
    graph: np.ndarray
    latent: LatentCandidate
    correspondence: CorrespondenceMatrix
    transform: RbfTransform

    @property
    def objective(self):
        return self.latent.objective


@dataclass
class CompletionResult:
    candidates: list
    failures: list = field(default_factory=list)

    @property
    def best(self):
        return self.candidates[0]

    def __len__(self):
        return len(self.candidates)


def _latent_program(model, n, variant):
    key = ("latent", n, variant)
    if key in model._programs:
        return model._programs[key]
    k = model._constants(n)
    z = ad.leaf(shape=(n, model.latent_dim), name="z_star")
    target = ad.leaf(shape=(n, n), name="target")
    weights = ad.leaf(shape=(n, n), name="weights")
    p = ad.leaf(shape=(n, n), name="p")
    warped = ad.leaf(shape=(n, n), name="warped")
    warped_sq = ad.leaf(shape=(n, 1), name="warped_sq")
    eta = ad.leaf(shape=(1, 1), name="eta")
    s = model.logits_expr(z, k["ones_col"], k["ones_row"], k["triu"], k["strict"])
    ghat = ad.hadamard(ad.logistic(s), k["offdiag"])
    complement = None
    if variant == "cross_entropy":
        complement = ad.leaf(shape=(n, n), name="complement")
        ll = ad.hadamard(target, ad.log(ad.logistic(s))) + ad.hadamard(complement, ad.log(ad.logistic(-s)))
        lr = -ad.reduce_sum(ad.hadamard(weights, ll))
    else:
        diff = ghat - target
        lr = ad.reduce_sum(ad.hadamard(weights, ad.hadamard(diff, diff)))
    vhat = ad.row_normalize(ghat)
    vhat_sq = ad.hadamard(vhat, vhat) @ k["ones_col"]
    dist = (warped_sq @ k["ones_row"] + k["ones_col"] @ ad.transpose(vhat_sq)
            - ad.scalar_mul(warped @ ad.transpose(vhat), 2.0))
    jdata = ad.reduce_sum(ad.hadamard(p, dist))
    total = lr + eta @ jdata
    prog = {"z": z, "target": target, "complement": complement, "weights": weights, "p": p,
            "warped": warped, "warped_sq": warped_sq, "eta": eta, "ghat": ghat, "vhat": vhat,
            "lr": lr, "jdata": jdata, "total": total}
    model._programs[key] = prog
    return prog


def _bind_observed(prog, pg, variant):
    gi = GraphInputs.from_graph(pg.graph, mask=pg.mask, variant=variant)
    ad.bind(prog["target"], gi.target)
    ad.bind(prog["weights"], gi.weights)
    if prog["complement"] is not None:
        ad.bind(prog["complement"], 1.0 - gi.target)


def _signatures(pg):
    v = pg.graph.X
    if v.shape[1] != pg.graph.n:
        raise ValidationError("node signatures must have width n to be compared with decoded rows")
    return v


def alternating_minimize(pg, model, cfg=None, z0=None, restart=0):
    """Alternate Sinkhorn correspondence, RBF warp and latent Adam steps.

    Returns ``(LatentCandidate, CorrespondenceMatrix, RbfTransform, G_hat)`` for
    the lowest objective seen along the trace.
    """
    cfg = CompletionConfig() if cfg is None else cfg
    g = pg.graph
    n = g.n
    if not (pg.mask.observed_offdiag() > 0).any():
        raise ValidationError("mask has no observed off-diagonal entry")
    v_g = _signatures(pg)
    sigma = cfg.sigma if cfg.sigma is not None else median_bandwidth(v_g)
    prog = _latent_program(model, n, cfg.loss_variant)
    _bind_observed(prog, pg, cfg.loss_variant)
    ad.bind(prog["eta"], np.array([[cfg.eta]]))
    z = row_normalize(model.encode(g) if z0 is None else z0)
    zeta = RbfTransform.identity(v_g, sigma, cfg.ridge)
    opt = ad.Adam([prog["z"]], lr=cfg.z_lr)
    ad.bind(prog["z"], z)

    best = None
    trace, zeta_trace = [], []
    prev = None
    for _ in range(cfg.max_rounds):
        ghat = ad.evaluate(prog["ghat"]).copy()
        vhat = ad.evaluate(prog["vhat"]).copy()
        warped = zeta(v_g)
        cost = kernels.pairwise_sq_dists(warped, vhat)
        tau = cfg.tau_scale * cost.mean()
        if not tau > 0:
            tau = 1.0
        m = np.exp(-(cost - cost.min(axis=1, keepdims=True)) / tau) + 1e-12
        corr = sinkhorn_project(m, cfg.sinkhorn_iters, cfg.sinkhorn_tol)
        before = matching_objective(corr.p, zeta, v_g, vhat)
        zeta = rbf_fit(v_g, vhat, corr.p, sigma, cfg.ridge)
        after = matching_objective(corr.p, zeta, v_g, vhat)
        zeta_trace.append((before, after))

        warped = zeta(v_g)
        ad.bind(prog["p"], corr.p)
        ad.bind(prog["warped"], warped)
        ad.bind(prog["warped_sq"], np.einsum("ij,ij->i", warped, warped)[:, None])
        for _ in range(cfg.z_steps):
            _, grads = ad.value_and_grad(prog["total"], [prog["z"]])
            opt.step(grads)
            prog["z"].value = row_normalize(prog["z"].value)
        ad.evaluate(prog["total"])
        lr_val = float(prog["lr"].value[0, 0])
        j_val = float(prog["jdata"].value[0, 0]) + zeta.penalty()
        obj = lr_val + cfg.eta * j_val
        if not np.isfinite(obj):
            raise NumericalError("completion objective is non-finite")
        trace.append(obj)
        if best is None or obj < best[0]:
            best = (obj, prog["z"].value.copy(), corr, zeta, prog["ghat"].value.copy(), lr_val, j_val)
        if prev is not None and abs(prev - obj) <= cfg.rel_tol * max(abs(prev), 1e-300):
            break
        prev = obj

    obj, z_best, corr, zeta, ghat, lr_val, j_val = best
    cand = LatentCandidate(z_best, obj, restart, lr_val, j_val, trace, zeta_trace)
    return cand, corr, zeta, ghat


def complete_graph(pg, model, k=1, restarts=1, rng=None, cfg=None):
    """Run several restarts of :func:`alternating_minimize` and keep the ``k`` best distinct optima.

    Restart 0 starts from the encoding of the zero-filled partial graph; the
    others from perturbed copies of it.  Optima whose completed graphs lie within
    Frobenius distance 1e-3 of a better one are dropped, so fewer than ``k``
    candidates can come back.
    """
    if k < 1 or k > restarts:
        raise ValidationError(f"need 1 <= k <= restarts, got k={k}, restarts={restarts}")
    cfg = CompletionConfig() if cfg is None else cfg
    rng = np.random.default_rng(0) if rng is None else rng
    seeds = rng.spawn(restarts) if hasattr(rng, "spawn") else [np.random.default_rng(s) for s in range(restarts)]
    z0 = model.encode(pg.graph)
    found, failures = [], []
    for r in range(restarts):
        if r == 0:
            start = z0
        else:
            start = row_normalize(z0 + cfg.perturbation * seeds[r].standard_normal(z0.shape))
        try:
            cand, corr, zeta, ghat = alternating_minimize(pg, model, cfg, z0=start, restart=r)
        except NumericalError as exc:
            failures.append((r, str(exc)))
            continue
        found.append(Candidate(ghat, cand, corr, zeta))
    if not found:
        raise NumericalError(f"all {restarts} completion restarts failed: {failures}")
    found.sort(key=lambda c: (c.objective, c.latent.restart))
    kept = []
    for c in found:
        if all(np.linalg.norm(c.graph - o.graph) >= 1e-3 for o in kept):
            kept.append(c)
        if len(kept) == k:
            break
    return CompletionResult(kept, failures)


__all__ = [
    "CorrespondenceMatrix", "RbfTransform", "LatentCandidate", "Candidate", "CompletionResult",
    "CompletionConfig", "sinkhorn_project", "rbf_fit", "matching_objective", "median_bandwidth",
    "alternating_minimize", "complete_graph",
]
