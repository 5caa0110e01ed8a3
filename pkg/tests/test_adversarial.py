import math

import numpy as np
import pytest

from vmfgae import engine as ad
from vmfgae.adversarial import (
    Discriminator, DiscriminatorParams, TrainConfig, discriminate, gan_losses, init_models, train,
)
from vmfgae.errors import NumericalError, ValidationError
from vmfgae.graph import Graph, permute
from vmfgae.model import GraphInputs
from vmfgae.synth import ConnectomeSpec, generate_connectome


def small_set(count=4, n=8, seed=0):
    spec = ConnectomeSpec(n=n, blocks=2)
    return [generate_connectome(spec, seed + k) for k in range(count)]


def test_zero_discriminator_is_half():
    d = Discriminator(DiscriminatorParams.zeros(8, 4))
    for g in small_set(3):
        assert discriminate(d, g.W, g.X) == 0.5


def test_discriminator_permutation_invariant_and_in_range():
    rng = np.random.default_rng(0)
    d = Discriminator(DiscriminatorParams.init(8, 5, rng))
    for g in small_set(3):
        perm = rng.permutation(8)
        gp = permute(g, perm)
        p1, p2 = discriminate(d, g.W, g.X), discriminate(d, gp.W, gp.X)
        assert 0.0 < p1 < 1.0
        assert p1 == pytest.approx(p2, abs=1e-10)


def test_default_features_are_row_normalized():
    g = small_set(1)[0]
    d = Discriminator(DiscriminatorParams.init(8, 5, np.random.default_rng(1)))
    assert discriminate(d, g.W) == discriminate(d, g.W, g.X)


def test_gan_loss_values():
    disc, gen = gan_losses(0.5, 0.5)
    assert disc == pytest.approx(2 * math.log(2), rel=1e-14)
    assert disc == pytest.approx(1.3863, abs=1e-4)
    assert gan_losses(0.5, 1.0 - 1e-12)[1] < 1e-6
    assert gan_losses(1.0, 0.0)[0] < 1e-6
    assert gan_losses(0.5, 0.5, "literal")[1] == pytest.approx(math.log(0.5))


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(lr_gen=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(gan_form="wasserstein")
    with pytest.raises(ValidationError):
        TrainConfig(latent_dim=1)


def test_plain_autoencoder_loss_decreases():
    cfg = TrainConfig(epochs=10, lambda2=0.0, kappa=0.0, sample_z=False, latent_dim=4, hidden_dim=8)
    _, _, hist = train(small_set(1), cfg)
    totals = hist.totals
    assert all(b < a for a, b in zip(totals, totals[1:]))


def test_same_seed_same_history():
    cfg = TrainConfig(epochs=3, latent_dim=4, hidden_dim=8, disc_hidden=4)
    m1, d1, h1 = train(small_set(), cfg)
    m2, d2, h2 = train(small_set(), cfg)
    assert h1.records == h2.records
    for k, v in m1.state_dict().items():
        assert v.tobytes() == m2.state_dict()[k].tobytes()


def test_unweighted_gan_has_no_side_effects():
    base = dict(epochs=3, latent_dim=4, hidden_dim=8, disc_hidden=4, lambda2=0.0)
    m1, _, h1 = train(small_set(), TrainConfig(**base))
    m2, d2, h2 = train(small_set(), TrainConfig(**base, use_discriminator=False))
    assert d2 is None
    for k, v in m1.state_dict().items():
        assert v.tobytes() == m2.state_dict()[k].tobytes()
    assert [r.losses.lr for r in h1.records] == [r.losses.lr for r in h2.records]


def test_parameter_isolation():
    g = small_set(1)[0]
    cfg = TrainConfig(latent_dim=4, hidden_dim=8, disc_hidden=4)
    model, disc = init_models(8, cfg)
    gi = GraphInputs.from_graph(g)

    def snapshot(leaves):
        return [leaf.value.tobytes() for leaf in leaves]

    fwd = model.forward_program(8)
    model.bind_inputs(fwd, gi)
    prog = disc.program(8)
    ad.bind(prog["real_adj"], g.W)
    ad.bind(prog["real_x"], g.X)
    ad.bind(prog["fake_adj"], ad.evaluate(fwd["recon"]).copy())
    before = snapshot(model.param_leaves)
    _, grads = ad.value_and_grad(prog["loss"], disc.leaves)
    ad.Adam(disc.leaves, lr=0.1).step(grads)
    assert snapshot(model.param_leaves) == before

    gen = model.loss_program(8, sample_z=False, gan_head=disc.generator_head(), lambdas=(1.0, 0.1))
    model.bind_inputs(gen, gi)
    before = snapshot(disc.leaves)
    _, grads = ad.value_and_grad(gen["total"], model.param_leaves)
    ad.Adam(model.param_leaves, lr=0.1).step(grads)
    assert snapshot(disc.leaves) == before


def test_history_totals_recompute_exactly():
    cfg = TrainConfig(epochs=2, latent_dim=4, hidden_dim=8, disc_hidden=4, lambda1=0.7, lambda2=0.3)
    _, _, hist = train(small_set(), cfg)
    for r in hist.records:
        assert r.total == r.losses.lr + 0.7 * r.losses.lp + 0.3 * r.losses.lgan


def test_wall_clock_not_part_of_equality():
    cfg = TrainConfig(epochs=1, latent_dim=4, hidden_dim=8, disc_hidden=4)
    _, _, h = train(small_set(2), cfg)
    r = h[0]
    assert r == type(r)(r.epoch, r.losses, r.disc_loss, r.wall_clock + 5.0)


def test_divergence_names_epoch():
    cfg = TrainConfig(epochs=50, lr_gen=1e4, latent_dim=4, hidden_dim=8, disc_hidden=4, use_discriminator=False)
    with pytest.raises(NumericalError, match="epoch"):
        train(small_set(2), cfg)


def test_mixed_sizes_rejected():
    with pytest.raises(ValidationError, match="node count"):
        train(small_set(1, n=8) + small_set(1, n=12), TrainConfig(epochs=1))
    with pytest.raises(ValidationError):
        train([], TrainConfig(epochs=1))


def test_feature_width_must_match_for_discriminator():
    g = small_set(1)[0]
    narrow = Graph(g.W, g.X[:, :3])
    with pytest.raises(ValidationError, match="feature width"):
        train([narrow], TrainConfig(epochs=1))
    _, disc, _ = train([narrow], TrainConfig(epochs=1, use_discriminator=False, latent_dim=3, hidden_dim=4))
    assert disc is None


def test_callback_sees_every_epoch():
    seen = []
    train(small_set(2), TrainConfig(epochs=3, latent_dim=4, hidden_dim=8, disc_hidden=4), callback=seen.append)
    assert [r.epoch for r in seen] == [1, 2, 3]
