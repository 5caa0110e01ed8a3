"""Flat run configuration: one JSON document, one CLI flag per key."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .adversarial import TrainConfig
from .errors import ValidationError
from .evaluation import EvalConfig
from .matching import CompletionConfig
from .synth import ANOMALY_KINDS, ConnectomeSpec


@dataclass(frozen=True)
class RunConfig:
    # dataset
    n: int = 20
    blocks: int = 2
    p_in: float = 0.8
    p_out: float = 0.05
    weight_loc: float = 0.0
    weight_scale: float = 0.5
    mirror: float = 0.5
    train_count: int = 200
    test_count: int = 20
    anomaly_fraction: float = 1.0
    anomaly_kind: str = "weight-dampening"
    severity: float = 0.8
    data_seed: int = 0
    # training
    epochs: int = 300
    lr_gen: float = 0.005
    lr_disc: float = 1e-4
    lambda1: float = 1.0
    lambda2: float = 0.1
    kappa: float = 20.0
    latent_dim: int = 8
    hidden_dim: int = 32
    disc_hidden: int = 16
    disc_steps: int = 1
    loss_variant: str = "cross_entropy"
    gan_form: str = "non_saturating"
    sample_z: bool = True
    use_discriminator: bool = True
    train_seed: int = 0
    # completion and scoring
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
    restarts: int = 1
    k: int = 1
    mask_fraction: float = 0.2
    score_variant: str = "quadratic"
    eval_seed: int = 0
    # paths
    data_dir: str = "data"
    checkpoint: str = "model.json"
    out_dir: str = "out"
    graph: str | None = None
    features: str | None = None
    mask: str | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            kind = _kind(f)
            if v is None:
                if not f.type.endswith("| None"):
                    raise ValidationError(f"config key {f.name!r} may not be null")
                continue
            if kind is bool and not isinstance(v, bool):
                raise ValidationError(f"config key {f.name!r} must be true/false, got {v!r}")
            if kind is int and (isinstance(v, bool) or not isinstance(v, int)):
                raise ValidationError(f"config key {f.name!r} must be an integer, got {v!r}")
            if kind is float:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ValidationError(f"config key {f.name!r} must be a number, got {v!r}")
                object.__setattr__(self, f.name, float(v))
            if kind is str and not isinstance(v, str):
                raise ValidationError(f"config key {f.name!r} must be a string, got {v!r}")
        if self.anomaly_kind not in ANOMALY_KINDS:
            raise ValidationError(f"unknown anomaly_kind {self.anomaly_kind!r}")
        if self.train_count < 1 or self.test_count < 1:
            raise ValidationError("train_count and test_count must be positive")
        # delegate the remaining range checks to the owning modules
        self.connectome_spec()
        self.train_config()
        self.eval_config()

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(d)

    def to_dict(self):
        return asdict(self)

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def connectome_spec(self):
        return ConnectomeSpec(self.n, self.blocks, self.p_in, self.p_out,
                              self.weight_loc, self.weight_scale, self.mirror)

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs, lr_gen=self.lr_gen, lr_disc=self.lr_disc, lambda1=self.lambda1,
            lambda2=self.lambda2, kappa=self.kappa, latent_dim=self.latent_dim,
            hidden_dim=self.hidden_dim, disc_hidden=self.disc_hidden, seed=self.train_seed,
            disc_steps=self.disc_steps, loss_variant=self.loss_variant, gan_form=self.gan_form,
            sample_z=self.sample_z, use_discriminator=self.use_discriminator,
        )

    def completion_config(self):
        return CompletionConfig(
            max_rounds=self.max_rounds, rel_tol=self.rel_tol, z_steps=self.z_steps, z_lr=self.z_lr,
            eta=self.eta, ridge=self.ridge, sigma=self.sigma, tau_scale=self.tau_scale,
            sinkhorn_iters=self.sinkhorn_iters, sinkhorn_tol=self.sinkhorn_tol,
            perturbation=self.perturbation, loss_variant=self.loss_variant,
        )

    def eval_config(self):
        return EvalConfig(self.completion_config(), self.score_variant, self.restarts, self.k,
                          self.mask_fraction, self.eval_seed)


def _kind(f):
    base = f.type.split("|")[0].strip()
    return {"int": int, "float": float, "bool": bool, "str": str}[base]


def config_fields():
    """``(name, base type, nullable)`` for every key, in declaration order."""
    return [(f.name, _kind(f), f.type.endswith("| None")) for f in fields(RunConfig)]
