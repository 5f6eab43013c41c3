"""Visual encoder over rendered grids, plus per-algorithm extras.

The encoder is an MLP on the flattened (G, G, 3) binary render:
G*G*3 -> 256 -> 128 -> d. Depending on the algorithm the model carries a
sigmoid logit head (goal classifier), a mirrored decoder (lifs), or a
learned softmax temperature (tcn). Everything trains in float64 and is
checkpointed through the shared binary format.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .checkpoint import load_checkpoint, save_checkpoint
from .nn import Linear, Mlp

HIDDEN = (256, 128)
NORMALIZE_BY_ALGO = {
    "tcc": False,
    "goal_classifier": False,
    "tcn": True,
    "lifs": True,
}
ALGORITHMS = tuple(NORMALIZE_BY_ALGO)


@dataclass(frozen=True)
class EmbeddingSequence:
    """One video's embeddings, row k = phi(frame k)."""

    embodiment: str
    z: np.ndarray  # (L, d)

    def __len__(self) -> int:
        return self.z.shape[0]


@dataclass
class EncoderModel:
    algo: str
    grid: int
    dim: int
    normalize: bool
    mlp: Mlp
    head: Linear | None = None
    decoder: Mlp | None = None
    log_temp: Var | None = None

    @property
    def input_dim(self) -> int:
        return self.grid * self.grid * 3

    def parameters(self) -> list[Var]:
        out = self.mlp.parameters()
        if self.head is not None:
            out += [self.head.weight, self.head.bias]
        if self.decoder is not None:
            out += self.decoder.parameters()
        if self.log_temp is not None:
            out += [self.log_temp]
        return out


def make_model(algo: str, grid: int, dim: int, seed: int, normalize=None) -> EncoderModel:
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}")
    rng = np.random.default_rng(seed)
    input_dim = grid * grid * 3
    mlp = Mlp.create(
        rng,
        [input_dim, *HIDDEN, dim],
        ["relu", "relu", "identity"],
        init="kaiming",
    )
    model = EncoderModel(
        algo=algo,
        grid=grid,
        dim=dim,
        normalize=NORMALIZE_BY_ALGO[algo] if normalize is None else bool(normalize),
        mlp=mlp,
    )
    if algo == "goal_classifier":
        model.head = Linear.create(rng, dim, 1, init="kaiming")
    elif algo == "lifs":
        model.decoder = Mlp.create(
            rng,
            [dim, *reversed(HIDDEN), input_dim],
            ["relu", "relu", "identity"],
            init="kaiming",
        )
    elif algo == "tcn":
        model.log_temp = Var(np.log(np.array(0.1)), needs_grad=True)
    return model


def _normalize_rows_var(z: Var) -> Var:
    norm = ad.sqrt(ad.add(ad.vsum(ad.square(z), axis=1, keepdims=True), 1e-12))
    return ad.div(z, norm)


def forward_var(model: EncoderModel, frames) -> Var:
    """Embed (n, G*G*3) frames on the tape; normalizes per the model flag."""
    x = ad.as_var(frames)
    if x.data.ndim != 2 or x.data.shape[1] != model.input_dim:
        raise ValueError(
            f"expected (n, {model.input_dim}) frames, got {x.data.shape}"
        )
    z = model.mlp(x)
    return _normalize_rows_var(z) if model.normalize else z


def forward_np(model: EncoderModel, frames: np.ndarray) -> np.ndarray:
    """Tape-free forward pass, bit-identical to forward_var."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"expected (n, {model.input_dim}) frames, got {x.shape}")
    for layer, act in zip(model.mlp.layers, model.mlp.activations):
        x = x @ layer.weight.data + layer.bias.data
        if act == "relu":
            x = np.maximum(x, 0.0)
        elif act == "tanh":
            x = np.tanh(x)
    if model.normalize:
        x = x / np.sqrt((x * x).sum(axis=1, keepdims=True) + 1e-12)
    return x


def embed_sequence(model: EncoderModel, frames, embodiment: str = "") -> EmbeddingSequence:
    return EmbeddingSequence(embodiment, forward_np(model, frames))


def classifier_logits_np(model: EncoderModel, frames: np.ndarray) -> np.ndarray:
    if model.head is None:
        raise ValueError("model has no classifier head")
    z = forward_np(model, frames)
    return (z @ model.head.weight.data + model.head.bias.data).reshape(-1)


def _mlp_tensors(prefix: str, mlp: Mlp) -> dict[str, np.ndarray]:
    out = {}
    for i, layer in enumerate(mlp.layers):
        out[f"{prefix}.{i}.weight"] = layer.weight.data
        out[f"{prefix}.{i}.bias"] = layer.bias.data
    return out


def _mlp_from_tensors(prefix: str, tensors, activations) -> Mlp:
    layers = []
    i = 0
    while f"{prefix}.{i}.weight" in tensors:
        layers.append(
            Linear(
                weight=Var(tensors[f"{prefix}.{i}.weight"], needs_grad=True),
                bias=Var(tensors[f"{prefix}.{i}.bias"], needs_grad=True),
            )
        )
        i += 1
    return Mlp(layers=layers, activations=list(activations[:i]))


def save_model(model: EncoderModel, meta: dict, path: str | Path) -> None:
    tensors = _mlp_tensors("encoder", model.mlp)
    if model.head is not None:
        tensors["head.weight"] = model.head.weight.data
        tensors["head.bias"] = model.head.bias.data
    if model.decoder is not None:
        tensors.update(_mlp_tensors("decoder", model.decoder))
    if model.log_temp is not None:
        tensors["log_temp"] = model.log_temp.data
    full_meta = {
        "kind": "encoder",
        "algo": model.algo,
        "grid": model.grid,
        "dim": model.dim,
        "normalize": model.normalize,
        **meta,
    }
    save_checkpoint(path, tensors, full_meta)


def load_model(path: str | Path) -> tuple[EncoderModel, dict]:
    """Rebuild an EncoderModel from a checkpoint; weights come back as the
    float32 rounding of what was trained."""
    tensors, meta = load_checkpoint(path)
    acts = ["relu", "relu", "identity"]
    model = EncoderModel(
        algo=str(meta["algo"]),
        grid=int(meta["grid"]),
        dim=int(meta["dim"]),
        normalize=bool(meta["normalize"]),
        mlp=_mlp_from_tensors("encoder", tensors, acts),
    )
    if "head.weight" in tensors:
        model.head = Linear(
            weight=Var(tensors["head.weight"], needs_grad=True),
            bias=Var(tensors["head.bias"], needs_grad=True),
        )
    if "decoder.0.weight" in tensors:
        model.decoder = _mlp_from_tensors("decoder", tensors, acts)
    if "log_temp" in tensors:
        model.log_temp = Var(tensors["log_temp"], needs_grad=True)
    return model, meta
