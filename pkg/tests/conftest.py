"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import struct
import subprocess
import sys

import numpy as np
import pytest

from devae import (
    DatasetBundle,
    DeVae,
    LossWeights,
    ModelConfig,
    TrainSettings,
    make_blobs,
    pca_project,
    split_dataset,
    train,
)
from devae.gaussian import GaussianLatent
from devae.tensor import Tensor


# -- independent oracles ------------------------------------------------------


def gaussian_logpdf(z: np.ndarray, mu: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Multivariate normal log-density via plain linear algebra."""
    q = cov.shape[0]
    diff = z - mu
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    quad = np.einsum("ni,ij,nj->n", diff, inv, diff)
    return -0.5 * (q * np.log(2.0 * np.pi) + logdet + quad)


def mc_entropy(latent: GaussianLatent, i: int, n: int, seed: int) -> float:
    """Monte-Carlo estimate of -E[ln p(z)] over n reparameterized samples.

    Draws go through the latent's own sample() transform; the density uses
    the materialized covariance and numpy linear algebra, independent of
    the closed-form entropy under test.
    """
    q = latent.q
    mu = latent.mu.data[i]
    big = _tile_latent(latent, i, n)
    eps = np.random.default_rng(seed).standard_normal((n, q))
    z = big.sample(Tensor(eps)).data
    cov = latent.covariance_matrix(i)
    return float(-gaussian_logpdf(z, mu, cov).mean())


def _tile_latent(latent: GaussianLatent, i: int, n: int) -> GaussianLatent:
    mu = Tensor(np.tile(latent.mu.data[i], (n, 1)))
    if latent.head in ("isotropic", "diagonal"):
        return GaussianLatent(latent.head, mu, log_var=Tensor(np.tile(latent.log_var.data[i], (n, 1))))
    if latent.head == "full":
        return GaussianLatent("full", mu, chol_raw=Tensor(np.tile(latent.chol_raw.data[i], (n, 1))))
    return GaussianLatent("none", mu)


def random_latent(head: str, rng: np.random.Generator, q: int = 2) -> GaussianLatent:
    """One random latent with log-variances drawn in [-2, 2]."""
    mu = Tensor(rng.uniform(-3.0, 3.0, size=(1, q)))
    if head == "isotropic":
        return GaussianLatent(head, mu, log_var=Tensor(rng.uniform(-2.0, 2.0, size=(1, 1))))
    if head == "diagonal":
        return GaussianLatent(head, mu, log_var=Tensor(rng.uniform(-2.0, 2.0, size=(1, q))))
    if head == "full":
        lower = rng.uniform(-1.0, 1.0, size=q * (q - 1) // 2)
        diag_raw = rng.uniform(-1.0, 1.0, size=q)  # log-variance 2*raw in [-2, 2]
        return GaussianLatent(head, mu, chol_raw=Tensor(np.concatenate([lower, diag_raw])[None, :]))
    return GaussianLatent("none", mu)


def write_idx(path, magic: int, dims: tuple[int, ...], payload: bytes) -> None:
    """Test helper: serialize an IDX file from its parts."""
    with open(path, "wb") as fh:
        fh.write(struct.pack(">i", magic))
        for d in dims:
            fh.write(struct.pack(">i", d))
        fh.write(payload)


def run_cli(args, cwd=None) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "devae", *map(str, args)],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


# -- shared datasets and models ----------------------------------------------


def blob_bundle(n=120, d=10, k=3, spread=0.5, seed=11) -> DatasetBundle:
    X, labels = make_blobs(n, d, k, spread, seed)
    Y = pca_project(X)
    return DatasetBundle(X=X, Y=Y, split=split_dataset(n, seed), labels=labels, name="blobs")


def tiny_config(head="full", recon_kind="mse", d=10, seed=11,
                weights=LossWeights(5.0, 0.001)) -> ModelConfig:
    return ModelConfig(
        input_dim=d,
        weights=weights,
        encoder_widths=(32, 16),
        decoder_widths=(16, 32),
        head=head,
        recon_kind=recon_kind,
        seed=seed,
    )


@pytest.fixture(scope="session")
def bundle() -> DatasetBundle:
    return blob_bundle()


@pytest.fixture(scope="session")
def trained(bundle):
    """A briefly trained full-head model on the session blob bundle."""
    model = DeVae(tiny_config())
    model, report = train(model, bundle, TrainSettings(seed=11, max_epochs=12))
    return model, report
