"""The three loss terms and their weighted combination.

    total = recon + lambda_proj * proj + lambda_ent * ent

Reconstruction and projection losses sum over features per sample and
average over the batch (per-sample sums keep the magnitudes comparable
across datasets of different width). The entropy term is the batch-mean
negated differential entropy, so it rewards spread and can drive the
total negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError, DimensionError, DivergenceError, DomainError
from .gaussian import GaussianLatent
from .tensor import Tensor

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the projection and entropy terms."""

    lambda_proj: float
    lambda_ent: float

    def __post_init__(self):
        for name in ("lambda_proj", "lambda_ent"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ContractError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar snapshot of one loss evaluation (ent is -H, may be negative)."""

    recon: float
    proj: float
    ent: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return {"recon": self.recon, "proj": self.proj, "ent": self.ent, "total": self.total}


def _require_same_shape(what: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError.mismatch(what, a.shape, b.shape)


def recon_mse(x: Tensor, x_hat: Tensor) -> Tensor:
    """Squared error summed over features, averaged over the batch."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_hat = x_hat if isinstance(x_hat, Tensor) else Tensor(x_hat)
    _require_same_shape("recon_mse", x, x_hat)
    batch = x.shape[0]
    return T.tsum(T.square(T.sub(x, x_hat))) * (1.0 / batch)


def recon_bce(x: Tensor, x_hat: Tensor) -> Tensor:
    """Binary cross-entropy summed over features, averaged over the batch.

    Targets must lie in [0, 1]; predictions are clamped to
    [BCE_EPS, 1 - BCE_EPS] so saturated sigmoids cannot produce ln(0).
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    x_hat = x_hat if isinstance(x_hat, Tensor) else Tensor(x_hat)
    _require_same_shape("recon_bce", x, x_hat)
    if np.any(x.data < 0.0) or np.any(x.data > 1.0):
        lo, hi = float(x.data.min()), float(x.data.max())
        raise DomainError(f"bce targets must lie in [0, 1], got range [{lo}, {hi}]")
    batch = x.shape[0]
    xh = T.clamp(x_hat, BCE_EPS, 1.0 - BCE_EPS)
    pointwise = T.add(T.mul(x, T.log(xh)), T.mul(1.0 - x, T.log(1.0 - xh)))
    return T.tsum(pointwise) * (-1.0 / batch)


def proj_loss(y: Tensor, mu: Tensor) -> Tensor:
    """Mean squared Euclidean distance between targets y and latent means."""
    y = y if isinstance(y, Tensor) else Tensor(y)
    mu = mu if isinstance(mu, Tensor) else Tensor(mu)
    _require_same_shape("proj_loss", y, mu)
    batch = y.shape[0]
    return T.tsum(T.square(T.sub(y, mu))) * (1.0 / batch)


def ent_loss(latent: GaussianLatent) -> Tensor:
    """Batch mean of the negated differential entropy; exactly 0 for "none"."""
    if latent.head == "none":
        return Tensor(0.0)
    return -T.tmean(latent.entropy())


def total_loss(recon: float, proj: float, ent: float, weights: LossWeights) -> LossBreakdown:
    """Combine scalar components per the composite objective.

    Raises on non-finite components, naming the offender; this is the
    divergence tripwire for the training loop.
    """
    recon, proj, ent = float(recon), float(proj), float(ent)
    for name, value in (("recon", recon), ("proj", proj), ("ent", ent)):
        if not math.isfinite(value):
            raise DivergenceError(f"loss component {name!r} is non-finite: {value}")
    total = recon + weights.lambda_proj * proj + weights.lambda_ent * ent
    return LossBreakdown(recon=recon, proj=proj, ent=ent, total=total)


def combine_total(recon: Tensor, proj: Tensor, ent: Tensor | float,
                  weights: LossWeights) -> Tensor:
    """Graph-side counterpart of total_loss, same term order."""
    return recon + weights.lambda_proj * proj + weights.lambda_ent * ent
