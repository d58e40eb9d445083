"""Test-split metrics, class medoids, and per-class uncertainty ellipses.

Evaluation always runs with zero reparameterization noise, so repeated
calls on the same model give identical numbers. The projection loss is
always squared error; the reconstruction loss follows the model config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import DatasetBundle
from .errors import ContractError, DataError
from .gaussian import EllipseSpec, ellipse_from_cov
from .losses import LossBreakdown, total_loss
from .model import DeVae, forward_train


def evaluate(model: DeVae, bundle: DatasetBundle, split: str = "test",
             chunk_size: int = 4096) -> LossBreakdown:
    """Mean per-sample loss components over one split, deterministic."""
    idx = bundle.indices(split)
    if idx.size == 0:
        raise DataError(f"split {split!r} is empty")
    sums = np.zeros(3)
    for start in range(0, idx.size, chunk_size):
        rows = idx[start : start + chunk_size]
        result = forward_train(model, bundle.X[rows], bundle.Y[rows], eps=None)
        b = result.breakdown
        sums += np.array([b.recon, b.proj, b.ent]) * rows.size
    means = sums / idx.size
    return total_loss(means[0], means[1], means[2], model.config.weights)


def class_medoid_indices(points: np.ndarray, labels: np.ndarray) -> dict[int, int]:
    """Global index of each class's medoid (min total distance to classmates).

    Exact ties go to the lowest sample index.
    """
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    out: dict[int, int] = {}
    for label in np.unique(labels):
        member_idx = np.flatnonzero(labels == label)
        if member_idx.size == 0:
            raise DataError(f"class {label} is empty")
        members = points[member_idx]
        diff = members[:, None, :] - members[None, :, :]
        dist_sums = np.sqrt((diff * diff).sum(axis=2)).sum(axis=1)
        out[int(label)] = int(member_idx[int(np.argmin(dist_sums))])
    return out


def class_medoid(points: np.ndarray, labels: np.ndarray) -> dict[int, np.ndarray]:
    """Per-class medoid coordinates; always an actual member point."""
    points = np.asarray(points, dtype=np.float64)
    return {label: points[i].copy() for label, i in class_medoid_indices(points, labels).items()}


def class_ellipses(
    model: DeVae,
    X: np.ndarray,
    labels: np.ndarray,
    k_list: tuple[int, ...] = (1, 2, 3),
    average_cov: bool = False,
) -> dict[int, list[EllipseSpec]]:
    """Per-class uncertainty ellipses around the medoids of the encoded means.

    The ellipse covariance is the one the encoder predicts for the medoid
    sample; set ``average_cov`` to use the mean class covariance instead.
    """
    if model.config.head == "none":
        raise ContractError('head "none" carries no covariance to draw')
    if labels is None:
        raise ContractError("class ellipses need labels")
    latent = model.encode(X)
    mu = latent.mu.data
    medoids = class_medoid_indices(mu, labels)
    out: dict[int, list[EllipseSpec]] = {}
    for label, medoid_idx in medoids.items():
        if average_cov:
            member_idx = np.flatnonzero(np.asarray(labels) == label)
            cov = np.mean([latent.covariance_matrix(int(i)) for i in member_idx], axis=0)
        else:
            cov = latent.covariance_matrix(medoid_idx)
        center = mu[medoid_idx]
        out[label] = [ellipse_from_cov(center, cov, k) for k in k_list]
    return out


@dataclass(frozen=True)
class MetricsRow:
    """One head variant's mean/std test metrics over repeated runs."""

    head: str
    proj_mean: float
    proj_std: float
    recon_mean: float
    recon_std: float
    epochs_mean: float
    epochs_std: float
    n_runs: int

    def __post_init__(self):
        if self.n_runs < 1:
            raise ContractError("n_runs must be >= 1")
        if min(self.proj_std, self.recon_std, self.epochs_std) < 0:
            raise ContractError("standard deviations cannot be negative")

    def as_dict(self) -> dict:
        return {
            "head": self.head,
            "proj_loss": {"mean": self.proj_mean, "std": self.proj_std},
            "recon_loss": {"mean": self.recon_mean, "std": self.recon_std},
            "epochs": {"mean": self.epochs_mean, "std": self.epochs_std},
            "n_runs": self.n_runs,
        }


def metrics_to_json(rows: list[MetricsRow], dataset: str = "") -> str:
    return json.dumps(
        {"dataset": dataset, "rows": [r.as_dict() for r in rows]},
        indent=2,
    )


def format_metrics_table(rows: list[MetricsRow]) -> str:
    """Aligned text table: one column per head, one block row per metric."""
    blocks = [
        ("proj_loss", lambda r: (r.proj_mean, r.proj_std)),
        ("recon_loss", lambda r: (r.recon_mean, r.recon_std)),
        ("epochs", lambda r: (r.epochs_mean, r.epochs_std)),
    ]
    cells = {
        name: [f"{picker(r)[0]:.6g} ± {picker(r)[1]:.3g}" for r in rows]
        for name, picker in blocks
    }
    width = max(
        [len(r.head) for r in rows]
        + [len(c) for cols in cells.values() for c in cols]
        + [len(name) for name, _ in blocks]
    ) + 2
    lines = ["".join(["metric".ljust(12)] + [r.head.ljust(width) for r in rows])]
    for name, _ in blocks:
        lines.append("".join([name.ljust(12)] + [c.ljust(width) for c in cells[name]]))
    return "\n".join(lines) + "\n"
