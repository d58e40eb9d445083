"""Training protocol: Adam, seeded batching, early stopping, run matrix.

All randomness (batch order and reparameterization noise) flows from the
single run seed, so a fixed seed reproduces the run bit for bit. Validation
is evaluated with zero noise each epoch; training stops when the validation
total has not improved for ``patience`` consecutive epochs, and the weights
of the best validation epoch are restored before returning.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .data import DatasetBundle
from .errors import ContractError, DataError, DimensionError, DivergenceError
from .evaluation import MetricsRow, evaluate
from .losses import total_loss
from .model import DeVae, clone_config, forward_train
from .tensor import Tensor


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer and schedule knobs (defaults follow the training protocol)."""

    learning_rate: float = 0.001
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ContractError("batch_size, max_epochs and patience must be positive")
        if self.patience > self.max_epochs:
            raise ContractError(
                f"patience ({self.patience}) cannot exceed max_epochs ({self.max_epochs})"
            )
        if self.seed < 0:
            raise ContractError("seed must be non-negative")


class Adam:
    """Bias-corrected Adam with the usual defaults (b1=0.9, b2=0.999, eps=1e-8)."""

    def __init__(self, params: list[Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        """Apply one update in place; gradients must be populated and finite."""
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise ContractError("adam step without a computed gradient")
            if g.shape != p.data.shape:
                raise DimensionError.mismatch("adam gradient vs parameter", g.shape, p.data.shape)
            if not np.all(np.isfinite(g)):
                raise DivergenceError("non-finite gradient encountered")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class EarlyStopping:
    """Patience counter over validation totals; strict improvement resets it."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_value = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0
        self.improved = False

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch's validation total; True means stop now."""
        if value < self.best_value:
            self.best_value = value
            self.best_epoch = epoch
            self.bad_epochs = 0
            self.improved = True
        else:
            self.bad_epochs += 1
            self.improved = False
        return self.bad_epochs >= self.patience


def split_dataset(n: int, seed: int) -> np.ndarray:
    """Seeded 80/10/10 split assignment; the rounding remainder joins train."""
    if n < 10:
        raise DataError(f"dataset too small to split: n={n} < 10")
    n_val = n // 10
    n_test = n // 10
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype="<U5")
    out[perm[:n_train]] = "train"
    out[perm[n_train : n_train + n_val]] = "val"
    out[perm[n_train + n_val :]] = "test"
    return out


@dataclass
class TrainReport:
    """Per-epoch losses and convergence bookkeeping for one training run."""

    seed: int
    config: dict
    epochs: list[dict]
    epochs_run: int
    best_epoch: int
    best_val_total: float
    wall_seconds: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "epochs": self.epochs,
            "epochs_run": self.epochs_run,
            "best_epoch": self.best_epoch,
            "best_val_total": self.best_val_total,
            "wall_seconds": self.wall_seconds,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def train(model: DeVae, bundle: DatasetBundle, settings: TrainSettings) -> tuple[DeVae, TrainReport]:
    """Run the full protocol and return the best-validation-epoch model."""
    t0 = time.perf_counter()
    train_idx = bundle.indices("train")
    val_idx = bundle.indices("val")
    if train_idx.size == 0 or val_idx.size == 0:
        raise DataError("training requires non-empty train and val splits")
    if bundle.dim != model.config.input_dim:
        raise DimensionError(
            f"dataset dimension {bundle.dim} does not match model input_dim {model.config.input_dim}"
        )

    rng = np.random.default_rng(settings.seed)
    adam = Adam(model.parameters(), lr=settings.learning_rate)
    stopper = EarlyStopping(settings.patience)
    q = model.config.latent_dim
    best_snapshot = model.snapshot()
    epoch_records: list[dict] = []

    for epoch in range(1, settings.max_epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        sums = np.zeros(3)
        for batch_no, start in enumerate(range(0, order.size, settings.batch_size)):
            rows = order[start : start + settings.batch_size]
            eps = rng.standard_normal((rows.size, q))
            model.zero_grad()
            try:
                result = forward_train(model, bundle.X[rows], bundle.Y[rows], eps)
                result.total.backward()
                adam.step()
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}, batch {batch_no}: {exc}") from exc
            b = result.breakdown
            sums += np.array([b.recon, b.proj, b.ent]) * rows.size
        means = sums / order.size
        train_bd = total_loss(means[0], means[1], means[2], model.config.weights)
        val_bd = evaluate(model, bundle, "val")
        epoch_records.append({"train": train_bd.as_dict(), "val": val_bd.as_dict()})
        stop = stopper.update(epoch, val_bd.total)
        if stopper.improved:
            best_snapshot = model.snapshot()
        if stop:
            break

    model.restore(best_snapshot)
    report = TrainReport(
        seed=settings.seed,
        config=model.config.to_dict(),
        epochs=epoch_records,
        epochs_run=len(epoch_records),
        best_epoch=stopper.best_epoch,
        best_val_total=stopper.best_value,
        wall_seconds=time.perf_counter() - t0,
    )
    return model, report


def _mean_std(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def run_matrix(
    bundle: DatasetBundle,
    heads: list[str],
    n_seeds: int,
    settings: TrainSettings,
    config_template,
) -> list[MetricsRow]:
    """Train every head variant n_seeds times and tabulate test metrics.

    Run i uses seed ``settings.seed + i`` for both initialization and batch
    randomization; the bundle's split stays fixed across all runs.
    """
    if n_seeds < 1:
        raise ContractError(f"n_seeds must be >= 1, got {n_seeds}")
    rows: list[MetricsRow] = []
    for head in heads:
        projs: list[float] = []
        recons: list[float] = []
        epoch_counts: list[float] = []
        for i in range(n_seeds):
            seed = settings.seed + i
            config = clone_config(config_template, head=head, seed=seed)
            run_settings = replace(settings, seed=seed)
            try:
                model, report = train(DeVae(config), bundle, run_settings)
            except DivergenceError as exc:
                raise DivergenceError(f"head {head!r}, seed {seed}: {exc}") from exc
            test_bd = evaluate(model, bundle, "test")
            projs.append(test_bd.proj)
            recons.append(test_bd.recon)
            epoch_counts.append(float(report.epochs_run))
        pm, ps = _mean_std(projs)
        rm, rs = _mean_std(recons)
        em, es = _mean_std(epoch_counts)
        rows.append(
            MetricsRow(
                head=head,
                proj_mean=pm, proj_std=ps,
                recon_mean=rm, recon_std=rs,
                epochs_mean=em, epochs_std=es,
                n_runs=n_seeds,
            )
        )
    return rows
