"""von Mises-Fisher distribution on the unit sphere S^{m-1}.

Everything is evaluated in log space so concentrations up to ~1e4 stay finite.
The Bessel ratio uses a Lentz continued fraction; ``log I_nu`` uses the
all-positive power series summed with log-sum-exp.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class VmfParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64).ravel()
        if mu.size < 2:
            raise ValidationError("vMF needs dimension m >= 2")
        if abs(np.linalg.norm(mu) - 1.0) > 1e-10:
            raise ValidationError(f"mean direction must be unit norm, got {np.linalg.norm(mu)!r}")
        if not self.kappa >= 0:
            raise ValidationError(f"concentration must be >= 0, got {self.kappa!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def m(self):
        return self.mu.size


def _check(m, kappa):
    if m < 2:
        raise ValidationError(f"dimension must be >= 2, got {m}")
    if not kappa >= 0:
        raise ValidationError(f"concentration must be >= 0, got {kappa!r}")


def log_sphere_area(m):
    """log of the surface area of S^{m-1} in R^m."""
    return math.log(2.0) + 0.5 * m * math.log(math.pi) - math.lgamma(0.5 * m)


def log_bessel_i(nu, x):
    """log I_nu(x) for nu >= 0, x > 0 from the power series."""
    if x <= 0:
        raise ValidationError("log_bessel_i needs x > 0")
    k_max = int(0.5 * x + 12.0 * math.sqrt(x) + 60)
    half = math.log(0.5 * x)
    terms = np.array([
        (2 * k + nu) * half - math.lgamma(k + 1.0) - math.lgamma(k + nu + 1.0)
        for k in range(k_max + 1)
    ])
    top = terms.max()
    return float(top + math.log(np.exp(terms - top).sum()))


def bessel_ratio(m, kappa, tol=1e-14, max_terms=1_000_000):
    """Mean resultant length A_m(kappa) = I_{m/2}(kappa) / I_{m/2-1}(kappa)."""
    _check(m, kappa)
    nu = 0.5 * m
    if kappa == 0:
        return 0.0
    if kappa < 1e-6:
        return kappa / m * (1.0 - kappa * kappa / (m * (m + 2.0)))
    tiny = 1e-300
    f = tiny
    c, d = f, 0.0
    for k in range(1, max_terms + 1):
        b = 2.0 * (nu + k - 1) / kappa
        d = b + d
        d = tiny if d == 0 else d
        c = b + 1.0 / c
        c = tiny if c == 0 else c
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < tol:
            return f
    raise NumericalError(f"Bessel ratio continued fraction did not converge (m={m}, kappa={kappa})")


def log_normalizer(m, kappa):
    """log C_m(kappa), the log normalizing constant of the density."""
    _check(m, kappa)
    if kappa == 0:
        return -log_sphere_area(m)
    nu = 0.5 * m - 1.0
    return nu * math.log(kappa) - 0.5 * m * math.log(2.0 * math.pi) - log_bessel_i(nu, kappa)


def log_density(z, params):
    z = np.asarray(z, dtype=np.float64)
    norms = np.linalg.norm(np.atleast_2d(z), axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValidationError("log_density needs unit-norm points")
    return params.kappa * (z @ params.mu) + log_normalizer(params.m, params.kappa)


def kl_to_uniform(m, kappa):
    """KL(vMF(mu, kappa) || uniform on S^{m-1}).  Does not depend on mu."""
    _check(m, kappa)
    if kappa == 0:
        return 0.0
    return kappa * bessel_ratio(m, kappa) + log_normalizer(m, kappa) + log_sphere_area(m)


def sample_cosines(m, kappa, size, rng):
    """Draw ``w = mu . z`` for ``size`` samples by Wood's rejection scheme."""
    _check(m, kappa)
    half = 0.5 * (m - 1)
    out, run = [], 0
    need = size
    while need > 0:
        batch = need + need // 4 + 16
        eps = rng.beta(half, half, size=batch)
        u = rng.random(batch)
        w, _, run, overflow = kernels.vmf_cosines(eps, u, kappa, m, need, run)
        if overflow:
            raise NumericalError(f"vMF rejection sampler rejected 1000 proposals in a row (kappa={kappa})")
        out.append(w)
        need -= len(w)
    return np.concatenate(out) if out else np.empty(0)


def sample_pole_frame(m, kappa, size, rng):
    """Samples from vMF(e1, kappa), shape ``(size, m)``.

    Cosine first, then a uniform direction in the tangent space of e1.
    """
    w = sample_cosines(m, kappa, size, rng)
    v = rng.standard_normal((size, m - 1))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = np.empty((size, m))
    x[:, 0] = w
    x[:, 1:] = np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v
    return x


def reflect_from_pole(mu, x):
    """Householder reflection of rows of ``x`` taking e1 to ``mu`` (identity when mu == e1)."""
    mu = np.atleast_2d(mu)
    u = -mu.copy()
    u[:, 0] += 1.0
    s = np.einsum("ij,ij->i", u, u)
    t = x @ u.T if mu.shape[0] == 1 else np.einsum("ij,ij->i", u, x)[:, None]
    if mu.shape[0] == 1:
        if s[0] < 1e-30:
            return x.copy()
        return x - (2.0 / s[0]) * t * u
    coef = np.where(s < 1e-30, 0.0, 2.0 / np.where(s < 1e-30, 1.0, s))[:, None]
    return x - coef * t * u


def sample(params, rng, size=None):
    """Draw from vMF(mu, kappa); one vector if ``size`` is None, else ``(size, m)``."""
    n = 1 if size is None else size
    z = reflect_from_pole(params.mu, sample_pole_frame(params.m, params.kappa, n, rng))
    return z[0] if size is None else z
