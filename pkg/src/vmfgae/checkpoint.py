"""Versioned JSON checkpoints.  Floats are written with ``repr`` so they round-trip exactly."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .adversarial import Discriminator, DiscriminatorParams
from .errors import ValidationError
from .model import DecoderParams, EncoderParams, GaeModel, PolyFilterLayer

FORMAT = "vmfgae-checkpoint"
VERSION = 1


class CheckpointError(ValidationError):
    pass


def _pack(arrays):
    return {name: {"shape": list(a.shape), "data": [float(v) for v in np.asarray(a).ravel()]}
            for name, a in arrays.items()}


def _unpack(blob):
    out = {}
    for name, entry in blob.items():
        try:
            shape = tuple(int(s) for s in entry["shape"])
            data = np.array(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"tensor {name!r} is malformed: {exc}") from None
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"tensor {name!r}: {data.size} values do not fill shape {shape}")
        out[name] = data.reshape(shape)
    return out


def model_from_arrays(arrays, kappa):
    layers = []
    k = 0
    while f"enc{k}_h0" in arrays:
        taps = [arrays[f"enc{k}_{t}"] for t in ("h0", "h1", "h2")]
        layers.append(PolyFilterLayer(*taps, arrays.get(f"enc{k}_bias")))
        k += 1
    if len(layers) != 2:
        raise CheckpointError(f"expected 2 encoder layers, found {len(layers)}")
    for a, b in zip(layers, layers[1:]):
        if a.h0.shape[1] != b.h0.shape[0]:
            raise CheckpointError("encoder layer shapes are inconsistent")
    upper = arrays["dec_upper"]
    c = layers[-1].h0.shape[1]
    if upper.shape != (c, c):
        raise CheckpointError(f"decoder form is {upper.shape}, latent dim is {c}")
    return GaeModel(EncoderParams(layers), DecoderParams(upper, float(arrays["dec_bias"].ravel()[0])), kappa)


def disc_from_arrays(arrays):
    v = [arrays[name] for name in Discriminator._NAMES]
    return Discriminator(DiscriminatorParams(PolyFilterLayer(*v[:4]), *v[4:]))


def save_checkpoint(path, model, discriminator=None, config=None, epoch=0, rng_note=""):
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "config": config or {},
        "epoch": int(epoch),
        "rng": rng_note,
        "kappa": model.kappa,
        "model": _pack(model.state_dict()),
        "discriminator": _pack(discriminator.state_dict()) if discriminator is not None else None,
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns ``(model, discriminator or None, document)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is corrupt or truncated: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r} (expected {VERSION})")
    try:
        model = model_from_arrays(_unpack(doc["model"]), float(doc["kappa"]))
        disc = disc_from_arrays(_unpack(doc["discriminator"])) if doc.get("discriminator") else None
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing tensor {exc}") from None
    return model, disc, doc
