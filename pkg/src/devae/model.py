"""Encoder/decoder assembly, head wiring, and checkpoint serialization.

The encoder trunk maps inputs through relu hidden layers; parallel linear
heads emit the latent mean and, when the head variant calls for one, the
covariance parameters. The decoder mirrors the trunk and ends in sigmoid
when the reconstruction loss is BCE (outputs must live in (0, 1)) and in
identity otherwise.

Checkpoint layout (little-endian):

    magic b"DEVAE" | version u8 = 1 | config-length u32 | config JSON (utf-8)
    | parameter tensors as raw float64, in declared topology order

Topology order is: encoder trunk layers, mu head, covariance head (when
present), decoder layers; weight before bias within each layer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import BinaryIO

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ContractError,
    DimensionError,
)
from .gaussian import HEADS, GaussianLatent, head_param_count
from .losses import LossBreakdown, LossWeights, combine_total, ent_loss, proj_loss, recon_bce, recon_mse, total_loss
from .tensor import DenseLayer, Tensor

MAGIC = b"DEVAE"
VERSION = 1

RECON_KINDS = ("mse", "bce")


@dataclass(frozen=True)
class ModelConfig:
    """Topology, head variant, loss configuration, and init seed."""

    input_dim: int
    weights: LossWeights
    latent_dim: int = 2
    encoder_widths: tuple[int, ...] = (512, 128)
    decoder_widths: tuple[int, ...] = (128, 512)
    head: str = "full"
    recon_kind: str = "mse"
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.latent_dim < 1:
            raise ContractError("input_dim and latent_dim must be positive")
        if not self.encoder_widths or not self.decoder_widths:
            raise ContractError("encoder and decoder need at least one hidden layer")
        if any(w < 1 for w in self.encoder_widths) or any(w < 1 for w in self.decoder_widths):
            raise ContractError("layer widths must be positive")
        if self.head not in HEADS:
            raise ContractError(f"unknown head {self.head!r}")
        if self.recon_kind not in RECON_KINDS:
            raise ContractError(f"unknown reconstruction kind {self.recon_kind!r}")
        if self.seed < 0:
            raise ContractError("seed must be a non-negative integer")
        object.__setattr__(self, "encoder_widths", tuple(int(w) for w in self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(int(w) for w in self.decoder_widths))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "latent_dim": self.latent_dim,
            "encoder_widths": list(self.encoder_widths),
            "decoder_widths": list(self.decoder_widths),
            "head": self.head,
            "recon_kind": self.recon_kind,
            "lambda_proj": self.weights.lambda_proj,
            "lambda_ent": self.weights.lambda_ent,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            input_dim=int(d["input_dim"]),
            latent_dim=int(d["latent_dim"]),
            encoder_widths=tuple(d["encoder_widths"]),
            decoder_widths=tuple(d["decoder_widths"]),
            head=str(d["head"]),
            recon_kind=str(d["recon_kind"]),
            weights=LossWeights(float(d["lambda_proj"]), float(d["lambda_ent"])),
            seed=int(d["seed"]),
        )


def _init_layer(rng: np.random.Generator, out_dim: int, in_dim: int, activation: str) -> DenseLayer:
    bound = math.sqrt(6.0 / in_dim)
    weight = Tensor(rng.uniform(-bound, bound, size=(out_dim, in_dim)), requires_grad=True)
    bias = Tensor(np.zeros(out_dim), requires_grad=True)
    return DenseLayer(weight=weight, bias=bias, activation=activation)


class DeVae:
    """A trained (or trainable) parametric projection and its inverse."""

    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        q = config.latent_dim

        self.trunk: list[DenseLayer] = []
        prev = config.input_dim
        for width in config.encoder_widths:
            self.trunk.append(_init_layer(rng, width, prev, "relu"))
            prev = width
        self.mu_head = _init_layer(rng, q, prev, "identity")
        n_var = head_param_count(config.head, q)
        self.var_head = _init_layer(rng, n_var, prev, "identity") if n_var else None

        self.decoder: list[DenseLayer] = []
        prev = q
        for width in config.decoder_widths:
            self.decoder.append(_init_layer(rng, width, prev, "relu"))
            prev = width
        final_act = "sigmoid" if config.recon_kind == "bce" else "identity"
        self.decoder.append(_init_layer(rng, config.input_dim, prev, final_act))

    # -- parameter plumbing ---------------------------------------------------

    def _layers(self) -> list[DenseLayer]:
        layers = list(self.trunk) + [self.mu_head]
        if self.var_head is not None:
            layers.append(self.var_head)
        return layers + list(self.decoder)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for layer in self._layers():
            params.extend((layer.weight, layer.bias))
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def restore(self, snapshot: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(params) != len(snapshot):
            raise ContractError("snapshot does not match parameter list")
        for p, arr in zip(params, snapshot):
            if p.data.shape != arr.shape:
                raise DimensionError.mismatch("restore", p.data.shape, arr.shape)
            p.data[...] = arr

    # -- forward passes ---------------------------------------------------------

    def encode(self, x) -> GaussianLatent:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise DimensionError(
                f"encode: input shape {x.shape} does not match model input_dim {self.config.input_dim}"
            )
        h = x
        for layer in self.trunk:
            h = layer(h)
        mu = self.mu_head(h)
        head = self.config.head
        if head == "none":
            return GaussianLatent("none", mu)
        params = self.var_head(h)
        if head == "full":
            return GaussianLatent("full", mu, chol_raw=params)
        return GaussianLatent(head, mu, log_var=params)

    def decode(self, z) -> Tensor:
        z = z if isinstance(z, Tensor) else Tensor(z)
        if z.data.ndim != 2 or z.shape[1] != self.config.latent_dim:
            raise DimensionError(
                f"decode: input shape {z.shape} does not match model latent_dim {self.config.latent_dim}"
            )
        h = z
        for layer in self.decoder:
            h = layer(h)
        return h


@dataclass
class ForwardResult:
    """Everything one training step needs from a forward pass."""

    breakdown: LossBreakdown
    x_hat: Tensor
    latent: GaussianLatent
    total: Tensor  # scalar graph node; call .backward() on it


def forward_train(model: DeVae, x, y, eps=None) -> ForwardResult:
    """Encode, sample, decode, and assemble the composite loss.

    ``eps`` supplies the reparameterization noise, [batch, q]; pass zeros
    (or None) for deterministic evaluation. Head "none" always decodes mu.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    y = y if isinstance(y, Tensor) else Tensor(y)
    if x.shape[0] != y.shape[0]:
        raise DimensionError.mismatch("row-aligned x vs y", x.shape, y.shape)
    latent = model.encode(x)
    if eps is None:
        eps = np.zeros((x.shape[0], model.config.latent_dim))
    z = latent.sample(eps)
    x_hat = model.decode(z)
    recon = recon_bce(x, x_hat) if model.config.recon_kind == "bce" else recon_mse(x, x_hat)
    proj = proj_loss(y, latent.mu)
    ent = ent_loss(latent)
    weights = model.config.weights
    breakdown = total_loss(recon.item(), proj.item(), ent.item(), weights)
    total = combine_total(recon, proj, ent, weights)
    return ForwardResult(breakdown=breakdown, x_hat=x_hat, latent=latent, total=total)


# -- checkpoints ------------------------------------------------------------------


def save_checkpoint(model: DeVae, path) -> None:
    """Write the config and all parameters; round-trips bit-exactly."""
    config_blob = json.dumps(model.config.to_dict(), separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(len(config_blob).to_bytes(4, "little"))
        fh.write(config_blob)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    blob = fh.read(n)
    if len(blob) != n:
        raise CheckpointTruncatedError(f"{what}: expected {n} bytes, got {len(blob)}")
    return blob


def load_checkpoint(path) -> DeVae:
    """Reconstruct a model from a checkpoint file, verifying the envelope."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version_blob = _read_exact(fh, 1, "version byte")
        if version_blob[0] != VERSION:
            raise CheckpointVersionError(f"unsupported version {version_blob[0]}, expected {VERSION}")
        config_len = int.from_bytes(_read_exact(fh, 4, "config length"), "little")
        config_blob = _read_exact(fh, config_len, "config body")
        try:
            config = ModelConfig.from_dict(json.loads(config_blob.decode("utf-8")))
        except (ValueError, KeyError) as exc:
            raise CheckpointError(f"invalid config block: {exc}") from exc
        model = DeVae(config)
        for p in model.parameters():
            blob = _read_exact(fh, p.data.size * 8, "parameter tensor")
            p.data[...] = np.frombuffer(blob, dtype="<f8").reshape(p.data.shape)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after final parameter tensor")
    return model


def clone_config(config: ModelConfig, **overrides) -> ModelConfig:
    """Fresh config with selected fields replaced (head, seed, ...)."""
    return replace(config, **overrides)
