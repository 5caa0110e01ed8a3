"""Graph discriminator and the joint autoencoder + adversarial training loop."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import engine as ad
from . import vmf
from .errors import NumericalError, ValidationError
from .model import LOSS_VARIANTS, GaeModel, GraphInputs, LossBreakdown, PolyFilterLayer, poly_filter_expr

GAN_FORMS = ("non_saturating", "literal")
_CLAMP = 1e-7


@dataclass
class DiscriminatorParams:
    layer: PolyFilterLayer
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, in_dim, hidden_dim, rng):
        return cls(
            PolyFilterLayer.init(in_dim, hidden_dim, rng),
            rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, hidden_dim)),
            np.zeros((1, hidden_dim)),
            rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=(hidden_dim, 1)),
            np.zeros((1, 1)),
        )

    @classmethod
    def zeros(cls, in_dim, hidden_dim):
        return cls(PolyFilterLayer.zeros(in_dim, hidden_dim), np.zeros((hidden_dim, hidden_dim)),
                   np.zeros((1, hidden_dim)), np.zeros((hidden_dim, 1)), np.zeros((1, 1)))


class Discriminator:
    """Filter layer, mean readout over nodes, two dense layers, one logit per graph."""

    _NAMES = ("disc_h0", "disc_h1", "disc_h2", "disc_bias", "disc_w1", "disc_b1", "disc_w2", "disc_b2")

    def __init__(self, params):
        arrays = params.layer.arrays() + [params.w1, params.b1, params.w2, params.b2]
        self.leaves = [ad.leaf(a, name=nm) for a, nm in zip(arrays, self._NAMES)]
        self._consts = {}
        self._programs = {}

    @property
    def params(self):
        v = [leaf.value.copy() for leaf in self.leaves]
        return DiscriminatorParams(PolyFilterLayer(*v[:4]), *v[4:])

    @property
    def in_dim(self):
        return self.leaves[0].shape[0]

    def state_dict(self):
        return {leaf.name: leaf.value for leaf in self.leaves}

    def load_state_dict(self, state):
        for leaf in self.leaves:
            ad.bind(leaf, state[leaf.name])

    def _constants(self, n):
        if n not in self._consts:
            self._consts[n] = (ad.leaf(np.ones((n, 1)), name="d_ones"),
                               ad.leaf(np.full((1, n), 1.0 / n), name="d_mean"))
        return self._consts[n]

    def logit_expr(self, adj, feats):
        """``adj`` must already be scaled (see :func:`engine.inf_normalize`)."""
        n = adj.shape[0]
        ones_col, mean_row = self._constants(n)
        taps = self.leaves[:4]
        w1, b1, w2, b2 = self.leaves[4:]
        h = ad.tanh(poly_filter_expr(taps, adj, feats, ones_col))
        r = mean_row @ h
        r = ad.tanh(r @ w1 + b1)
        return r @ w2 + b2

    def generator_head(self, form="non_saturating"):
        """Callable building the generator-side adversarial loss from a fake graph."""
        if form not in GAN_FORMS:
            raise ValidationError(f"unknown GAN loss form {form!r}")

        def head(adj, feats):
            logit = self.logit_expr(adj, feats)
            if form == "non_saturating":
                return -ad.log(ad.logistic(logit))
            return ad.log(ad.logistic(-logit))

        head.form = form
        return head

    def program(self, n):
        if n not in self._programs:
            a_real = ad.leaf(shape=(n, n), name="real_adj")
            x_real = ad.leaf(shape=(n, self.in_dim), name="real_x")
            fake = ad.leaf(shape=(n, n), name="fake_adj")
            l_real = self.logit_expr(ad.inf_normalize(a_real), x_real)
            l_fake = self.logit_expr(ad.inf_normalize(fake), ad.row_normalize(fake))
            loss = -ad.log(ad.logistic(l_real)) - ad.log(ad.logistic(-l_fake))
            self._programs[n] = {"real_adj": a_real, "real_x": x_real, "fake_adj": fake,
                                 "l_real": l_real, "l_fake": l_fake, "loss": loss}
        return self._programs[n]

    def probability(self, adjacency, features):
        adjacency = np.asarray(adjacency, dtype=np.float64)
        n = adjacency.shape[0]
        key = ("prob", n)
        if key not in self._programs:
            a = ad.leaf(shape=(n, n), name="adj")
            x = ad.leaf(shape=(n, self.in_dim), name="x")
            self._programs[key] = (a, x, ad.logistic(self.logit_expr(ad.inf_normalize(a), x)))
        a, x, out = self._programs[key]
        return float(ad.evaluate(out, {a: adjacency, x: features})[0, 0])


def discriminate(d, adjacency, features=None):
    """Probability that a graph is real.  Features default to the row-normalized adjacency."""
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if features is None:
        norms = np.linalg.norm(adjacency, axis=1, keepdims=True)
        features = adjacency / np.where(norms > 0, norms, 1.0)
    return d.probability(adjacency, features)


def gan_losses(d_real, d_fake, form="non_saturating"):
    """(discriminator loss, generator loss) from the two confidences."""
    d_real = min(max(float(d_real), _CLAMP), 1.0 - _CLAMP)
    d_fake = min(max(float(d_fake), _CLAMP), 1.0 - _CLAMP)
    disc = -(np.log(d_real) + np.log1p(-d_fake))
    gen = -np.log(d_fake) if form == "non_saturating" else np.log1p(-d_fake)
    return float(disc), float(gen)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr_gen: float = 0.005
    lr_disc: float = 1e-4
    lambda1: float = 1.0
    lambda2: float = 0.1
    kappa: float = 20.0
    latent_dim: int = 8
    hidden_dim: int = 32
    disc_hidden: int = 16
    seed: int = 0
    disc_steps: int = 1
    loss_variant: str = "cross_entropy"
    gan_form: str = "non_saturating"
    sample_z: bool = True
    use_discriminator: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.lr_gen <= 0 or self.lr_disc <= 0:
            raise ValidationError("learning rates must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError("loss weights must be nonnegative")
        if self.kappa < 0:
            raise ValidationError("kappa must be nonnegative")
        if self.latent_dim < 2:
            raise ValidationError("latent_dim must be >= 2")
        if self.disc_steps < 1:
            raise ValidationError("disc_steps must be >= 1")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValidationError(f"unknown loss_variant {self.loss_variant!r}")
        if self.gan_form not in GAN_FORMS:
            raise ValidationError(f"unknown gan_form {self.gan_form!r}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    losses: LossBreakdown
    disc_loss: float
    wall_clock: float = field(compare=False)

    @property
    def total(self):
        return self.losses.total


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def totals(self):
        return [r.total for r in self.records]


def _streams(seed):
    enc, dec, disc, train = np.random.SeedSequence(seed).spawn(4)
    return (np.random.default_rng(enc), np.random.default_rng(dec),
            np.random.default_rng(disc), np.random.default_rng(train))


def init_models(in_dim, cfg):
    enc_rng, dec_rng, disc_rng, _ = _streams(cfg.seed)
    model = GaeModel.init(in_dim, cfg.hidden_dim, cfg.latent_dim, cfg.kappa, rng=enc_rng, dec_rng=dec_rng)
    disc = Discriminator(DiscriminatorParams.init(in_dim, cfg.disc_hidden, disc_rng)) if cfg.use_discriminator else None
    return model, disc


def train(dataset, cfg, callback=None):
    """Alternate discriminator and autoencoder Adam steps, one graph at a time.

    Returns ``(model, discriminator, history)``; the discriminator is None when
    disabled.  The run is a pure function of ``(dataset, cfg)``.
    """
    if not dataset:
        raise ValidationError("training dataset is empty")
    sizes = {g.n for g in dataset}
    if len(sizes) != 1:
        raise ValidationError(f"training graphs must share one node count, got {sorted(sizes)}")
    n = sizes.pop()
    widths = {g.X.shape[1] for g in dataset}
    if len(widths) != 1:
        raise ValidationError("training graphs must share one feature width")
    in_dim = widths.pop()
    if cfg.use_discriminator and in_dim != n:
        raise ValidationError("the discriminator compares feature rows with decoded rows; needs feature width == n")

    model, disc = init_models(in_dim, cfg)
    *_, rng = _streams(cfg.seed)
    inputs = [GraphInputs.from_graph(g, variant=cfg.loss_variant) for g in dataset]

    head = disc.generator_head(cfg.gan_form) if disc is not None else None
    gen_prog = model.loss_program(n, cfg.loss_variant, cfg.sample_z, head, (cfg.lambda1, cfg.lambda2))
    if any(g.any() for g in ad.gradient(gen_prog["lp"], model.encoder_param_leaves)):
        raise AssertionError("prior term has a gradient path to the encoder")
    gen_params = model.param_leaves
    gen_opt = ad.Adam(gen_params, lr=cfg.lr_gen)
    if disc is not None:
        fwd = model.forward_program(n)
        dprog = disc.program(n)
        disc_opt = ad.Adam(disc.leaves, lr=cfg.lr_disc)

    history = TrainHistory()
    lp_value = n * vmf.kl_to_uniform(model.latent_dim, model.kappa)
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        lr_sum = lgan_sum = d_sum = 0.0
        for idx in rng.permutation(len(dataset)):
            gi = inputs[idx]
            try:
                if disc is not None:
                    model.bind_inputs(fwd, gi)
                    fake = ad.evaluate(fwd["recon"]).copy()
                    ad.bind(dprog["real_adj"], dataset[idx].W)
                    ad.bind(dprog["real_x"], gi.X)
                    ad.bind(dprog["fake_adj"], fake)
                    for _ in range(cfg.disc_steps):
                        d_loss, grads = ad.value_and_grad(dprog["loss"], disc.leaves)
                        disc_opt.step(grads)
                    d_sum += d_loss
                model.bind_inputs(gen_prog, gi)
                if cfg.sample_z:
                    ad.bind(gen_prog["noise"], vmf.sample_pole_frame(model.latent_dim, model.kappa, n, rng))
                _, grads = ad.value_and_grad(gen_prog["total"], gen_params)
            except NumericalError as exc:
                raise NumericalError(f"training diverged at epoch {epoch}: {exc}") from exc
            lr_val = float(gen_prog["lr"].value[0, 0])
            lgan_val = float(gen_prog["lgan"].value[0, 0]) if head is not None else 0.0
            for name, val in (("Lr", lr_val), ("Lgan", lgan_val)):
                if not np.isfinite(val):
                    raise NumericalError(f"training diverged at epoch {epoch}: {name} is non-finite")
            gen_opt.step(grads)
            lr_sum += lr_val
            lgan_sum += lgan_val
        count = len(dataset)
        losses = LossBreakdown(lr_sum / count, lp_value, lgan_sum / count, cfg.lambda1, cfg.lambda2)
        if not np.isfinite(losses.total):
            raise NumericalError(f"training diverged at epoch {epoch}: total loss is non-finite")
        record = EpochRecord(epoch, losses, d_sum / count, time.perf_counter() - start)
        history.records.append(record)
        if callback is not None:
            callback(record)
    return model, disc, history
