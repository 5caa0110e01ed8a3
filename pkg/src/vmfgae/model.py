"""Graph autoencoder with polynomial adjacency filters and per-node vMF latents.

Encoder: two filter layers ``V -> V h0 + A V h1 + A^2 V h2 + bias`` with tanh in
between, rows projected onto the unit sphere (the vMF mean directions).
Decoder: ``G_hat[i, j] = logistic(z_i^T B z_j + b)`` off the diagonal, with ``B``
symmetric and stored as its upper triangle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as ad
from . import vmf
from .errors import ValidationError
from .graph import normalize_adjacency

LOSS_VARIANTS = ("cross_entropy", "quadratic")


@dataclass
class PolyFilterLayer:
    h0: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    bias: np.ndarray | None = None

    @classmethod
    def init(cls, d_in, d_out, rng, bias=True, scale=1.0):
        std = scale / np.sqrt(d_in)
        taps = [rng.normal(0.0, std, size=(d_in, d_out)) for _ in range(3)]
        return cls(*taps, np.zeros((1, d_out)) if bias else None)

    @classmethod
    def zeros(cls, d_in, d_out, bias=True):
        return cls(*(np.zeros((d_in, d_out)) for _ in range(3)), np.zeros((1, d_out)) if bias else None)

    def arrays(self):
        out = [self.h0, self.h1, self.h2]
        return out + ([self.bias] if self.bias is not None else [])


def poly_filter_forward(layer, a, v):
    """``V h0 + A V h1 + A^2 V h2`` (+ bias): the three-tap polynomial filter acting on features."""
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.shape[0] != a.shape[1] or a.shape[1] != v.shape[0] or v.shape[1] != layer.h0.shape[0]:
        raise ValidationError(f"poly filter shape mismatch: A {a.shape}, V {v.shape}, taps {layer.h0.shape}")
    out = v @ layer.h0 + a @ (v @ layer.h1) + a @ (a @ (v @ layer.h2))
    if layer.bias is not None:
        out = out + layer.bias
    return out


def poly_filter_expr(taps, a, v, ones_col=None, av=None, a2v=None):
    """Expression version of :func:`poly_filter_forward`; ``taps`` are leaves ``[h0, h1, h2, (bias)]``."""
    h0, h1, h2 = taps[:3]
    if av is not None:
        out = v @ h0 + av @ h1 + a2v @ h2
    else:
        out = v @ h0 + a @ (v @ h1) + a @ (a @ (v @ h2))
    if len(taps) > 3:
        out = out + ones_col @ taps[3]
    return out


@dataclass
class EncoderParams:
    layers: list

    @property
    def latent_dim(self):
        return self.layers[-1].h0.shape[1]


@dataclass
class DecoderParams:
    upper: np.ndarray
    bias: float = 0.0

    @property
    def B(self):
        u = np.triu(self.upper)
        return u + np.triu(u, 1).T


@dataclass(frozen=True)
class LossBreakdown:
    lr: float
    lp: float
    lgan: float
    lambda1: float
    lambda2: float

    @property
    def total(self):
        return total_loss(self)


def total_loss(lb):
    return lb.lr + lb.lambda1 * lb.lp + lb.lambda2 * lb.lgan


@dataclass
class GraphInputs:
    """Per-graph constants fed to the expression programs."""

    A: np.ndarray
    X: np.ndarray
    AX: np.ndarray
    A2X: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_graph(cls, g, mask=None, variant="cross_entropy"):
        a = normalize_adjacency(g).W
        ax = a @ g.X
        observed = (np.ones((g.n, g.n)) if mask is None else mask.delta) * (1.0 - np.eye(g.n))
        count = observed.sum()
        if count == 0:
            raise ValidationError("mask leaves no observed off-diagonal entries")
        target = g.binary() if variant == "cross_entropy" else np.array(g.W)
        return cls(a, g.X, ax, a @ ax, target, observed / count)


class GaeModel:
    """Encoder and decoder parameters held as engine leaves, plus cached programs per node count."""

    def __init__(self, encoder, decoder, kappa):
        if kappa < 0:
            raise ValidationError(f"kappa must be >= 0, got {kappa}")
        self.kappa = float(kappa)
        self.enc_leaves = []
        for k, layer in enumerate(encoder.layers):
            names = ["h0", "h1", "h2"] + (["bias"] if layer.bias is not None else [])
            self.enc_leaves.append([ad.leaf(arr, name=f"enc{k}_{nm}") for arr, nm in zip(layer.arrays(), names)])
        self.dec_upper = ad.leaf(np.triu(decoder.upper), name="dec_upper")
        self.dec_bias = ad.leaf(decoder.bias, name="dec_bias")
        self._programs = {}

    @classmethod
    def init(cls, in_dim, hidden_dim=32, latent_dim=8, kappa=20.0, rng=None, dec_rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        dec_rng = rng if dec_rng is None else dec_rng
        enc = EncoderParams([PolyFilterLayer.init(in_dim, hidden_dim, rng),
                             PolyFilterLayer.init(hidden_dim, latent_dim, rng)])
        upper = np.eye(latent_dim) + np.triu(dec_rng.normal(0.0, 0.1, size=(latent_dim, latent_dim)))
        return cls(enc, DecoderParams(upper, 0.0), kappa)

    # -- parameters -------------------------------------------------------

    @property
    def encoder_param_leaves(self):
        return [leaf for layer in self.enc_leaves for leaf in layer]

    @property
    def decoder_param_leaves(self):
        return [self.dec_upper, self.dec_bias]

    @property
    def param_leaves(self):
        return self.encoder_param_leaves + self.decoder_param_leaves

    @property
    def latent_dim(self):
        return self.enc_leaves[-1][0].shape[1]

    @property
    def in_dim(self):
        return self.enc_leaves[0][0].shape[0]

    @property
    def encoder(self):
        layers = []
        for taps in self.enc_leaves:
            vals = [t.value.copy() for t in taps]
            layers.append(PolyFilterLayer(*vals[:3], vals[3] if len(vals) > 3 else None))
        return EncoderParams(layers)

    @property
    def decoder(self):
        return DecoderParams(self.dec_upper.value.copy(), float(self.dec_bias.value[0, 0]))

    def state_dict(self):
        return {leaf.name: leaf.value for leaf in self.param_leaves}

    def load_state_dict(self, state):
        for leaf in self.param_leaves:
            ad.bind(leaf, state[leaf.name])

    # -- expressions ------------------------------------------------------

    def encode_expr(self, a, x, ax, a2x, ones_col):
        l1, l2 = self.enc_leaves
        h = ad.tanh(poly_filter_expr(l1, a, x, ones_col, ax, a2x))
        return ad.row_normalize(poly_filter_expr(l2, a, h, ones_col))

    def logits_expr(self, z, ones_col, ones_row, triu_mask, strict_mask):
        u = ad.hadamard(self.dec_upper, triu_mask)
        b_sym = u + ad.transpose(ad.hadamard(self.dec_upper, strict_mask))
        m = z @ b_sym @ ad.transpose(z)
        # averaging with the transpose makes the logits bit-exactly symmetric
        return ad.scalar_mul(m + ad.transpose(m), 0.5) + ones_col @ self.dec_bias @ ones_row

    def _constants(self, n):
        c = self.latent_dim
        return {
            "ones_col": ad.leaf(np.ones((n, 1)), name="ones_col"),
            "ones_row": ad.leaf(np.ones((1, n)), name="ones_row"),
            "offdiag": ad.leaf(1.0 - np.eye(n), name="offdiag"),
            "triu": ad.leaf(np.triu(np.ones((c, c))), name="triu"),
            "strict": ad.leaf(np.triu(np.ones((c, c)), 1), name="strict"),
        }

    def _input_leaves(self, n, d):
        return {
            "A": ad.leaf(shape=(n, n), name="A"),
            "X": ad.leaf(shape=(n, d), name="X"),
            "AX": ad.leaf(shape=(n, d), name="AX"),
            "A2X": ad.leaf(shape=(n, d), name="A2X"),
        }

    def forward_program(self, n):
        """Expression computing ``mu`` and the mean reconstruction for an ``n``-node graph."""
        key = ("forward", n)
        if key not in self._programs:
            k = self._constants(n)
            leaves = self._input_leaves(n, self.in_dim)
            mu = self.encode_expr(leaves["A"], leaves["X"], leaves["AX"], leaves["A2X"], k["ones_col"])
            z = ad.leaf(shape=(n, self.latent_dim), name="Z")
            ghat = ad.hadamard(ad.logistic(self.logits_expr(z, k["ones_col"], k["ones_row"], k["triu"], k["strict"])),
                               k["offdiag"])
            recon = ad.hadamard(
                ad.logistic(self.logits_expr(mu, k["ones_col"], k["ones_row"], k["triu"], k["strict"])),
                k["offdiag"])
            self._programs[key] = {"leaves": leaves, "mu": mu, "Z": z, "ghat": ghat, "recon": recon, **k}
        return self._programs[key]

    def loss_program(self, n, variant="cross_entropy", sample_z=True, gan_head=None, lambdas=(1.0, 0.0)):
        """Scalar training objective ``Lr + l1*Lp + l2*Lgan`` as an expression.

        ``gan_head`` is a callable mapping (adjacency expr, feature expr) to the
        generator adversarial loss expr, or None to leave the GAN term out.
        """
        if variant not in LOSS_VARIANTS:
            raise ValidationError(f"unknown reconstruction loss variant {variant!r}")
        key = ("loss", n, variant, sample_z, id(gan_head) if gan_head else None, lambdas)
        if key in self._programs:
            return self._programs[key]
        k = self._constants(n)
        leaves = self._input_leaves(n, self.in_dim)
        target = ad.leaf(shape=(n, n), name="target")
        weights = ad.leaf(shape=(n, n), name="weights")
        mu = self.encode_expr(leaves["A"], leaves["X"], leaves["AX"], leaves["A2X"], k["ones_col"])
        noise = None
        if sample_z:
            noise = ad.leaf(shape=(n, self.latent_dim), name="noise")
            z = ad.householder(mu, noise)
        else:
            z = mu
        s = self.logits_expr(z, k["ones_col"], k["ones_row"], k["triu"], k["strict"])
        ghat = ad.hadamard(ad.logistic(s), k["offdiag"])
        if variant == "cross_entropy":
            complement = ad.leaf(shape=(n, n), name="complement")
            ll = (ad.hadamard(target, ad.log(ad.logistic(s)))
                  + ad.hadamard(complement, ad.log(ad.logistic(-s))))
            lr = -ad.reduce_sum(ad.hadamard(weights, ll))
        else:
            complement = None
            diff = ghat - target
            lr = ad.reduce_sum(ad.hadamard(weights, ad.hadamard(diff, diff)))
        # the prior term is a constant leaf: with fixed kappa it has no path to mu
        lp = ad.leaf(np.array([[n * vmf.kl_to_uniform(self.latent_dim, self.kappa)]]), name="Lp")
        lam1, lam2 = lambdas
        total = lr + ad.scalar_mul(lp, lam1)
        lgan = None
        if gan_head is not None:
            lgan = gan_head(ad.inf_normalize(ghat), ad.row_normalize(ghat))
            total = total + ad.scalar_mul(lgan, lam2)
        prog = {"leaves": leaves, "target": target, "complement": complement, "weights": weights,
                "noise": noise, "mu": mu, "ghat": ghat, "lr": lr, "lp": lp, "lgan": lgan, "total": total}
        self._programs[key] = prog
        return prog

    @staticmethod
    def bind_inputs(prog, gi):
        leaves = prog["leaves"]
        ad.bind(leaves["A"], gi.A)
        ad.bind(leaves["X"], gi.X)
        ad.bind(leaves["AX"], gi.AX)
        ad.bind(leaves["A2X"], gi.A2X)
        if "target" in prog:
            ad.bind(prog["target"], gi.target)
            ad.bind(prog["weights"], gi.weights)
            if prog["complement"] is not None:
                ad.bind(prog["complement"], 1.0 - gi.target)

    # -- numpy-facing API -------------------------------------------------

    def encode(self, g):
        if g.X.shape[1] != self.in_dim:
            raise ValidationError(f"graph has {g.X.shape[1]} feature columns, model expects {self.in_dim}")
        prog = self.forward_program(g.n)
        self.bind_inputs(prog, GraphInputs.from_graph(g))
        return ad.evaluate(prog["mu"]).copy()

    def decode(self, z):
        z = np.asarray(z, dtype=np.float64)
        prog = self.forward_program(z.shape[0])
        ad.bind(prog["Z"], z)
        return ad.evaluate(prog["ghat"]).copy()

    def reconstruct(self, g):
        prog = self.forward_program(g.n)
        self.bind_inputs(prog, GraphInputs.from_graph(g))
        return ad.evaluate(prog["recon"]).copy()


def prior_gradient(model, n=4):
    """Gradient of the prior term w.r.t. every encoder parameter (all exact zeros for fixed kappa)."""
    prog = model.loss_program(n, sample_z=False)
    return ad.gradient(prog["lp"], model.encoder_param_leaves)


def encode(model, g):
    """Per-node vMF mean directions ``mu`` (n x c); the concentration is ``model.kappa``."""
    return model.encode(g)


def decode(params, z):
    """``G_hat[i, j] = logistic(z_i^T B z_j + b)`` with a zero diagonal."""
    z = np.asarray(z, dtype=np.float64)
    s = z @ params.B @ z.T + params.bias
    out = 0.5 * (1.0 + np.tanh(0.5 * s))
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 0.0)
    return out


def reconstruction_loss(g, ghat, mask=None, variant="cross_entropy"):
    """Mean per-entry loss over observed off-diagonal entries."""
    if variant not in LOSS_VARIANTS:
        raise ValidationError(f"unknown reconstruction loss variant {variant!r}")
    ghat = np.asarray(ghat, dtype=np.float64)
    if ghat.shape != g.W.shape:
        raise ValidationError(f"reconstruction is {ghat.shape}, graph is {g.W.shape}")
    observed = (np.ones(ghat.shape) if mask is None else mask.delta) * (1.0 - np.eye(g.n))
    keep = observed > 0
    if not keep.any():
        raise ValidationError("mask leaves no observed off-diagonal entries")
    if variant == "cross_entropy":
        y = g.binary()[keep]
        p = ghat[keep]
        per = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    else:
        per = (ghat[keep] - g.W[keep]) ** 2
    return float(per.mean())


def elbo_loss(g, model, sample_z=False, rng=None, variant="cross_entropy"):
    """Negative ELBO split into reconstruction and prior terms (``lgan`` is 0)."""
    prog = model.loss_program(g.n, variant=variant, sample_z=sample_z)
    model.bind_inputs(prog, GraphInputs.from_graph(g, variant=variant))
    if sample_z:
        rng = np.random.default_rng() if rng is None else rng
        ad.bind(prog["noise"], vmf.sample_pole_frame(model.latent_dim, model.kappa, g.n, rng))
    ad.evaluate(prog["total"])
    return LossBreakdown(float(prog["lr"].value[0, 0]), float(prog["lp"].value[0, 0]), 0.0, 1.0, 0.0)
