"""Finite-difference verification suite for the autodiff engine.

Checks every primitive op and, for each head variant and reconstruction
kind, every loss component plus the full composite objective on a small
two-hidden-layer model. Central differences with step 1e-5 are the oracle;
the pass bar is a relative error below 1e-4 (1e-6 for the smooth
closed-form entropy terms).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .gaussian import entropy_diagonal, entropy_full, entropy_isotropic
from .losses import LossWeights, ent_loss, proj_loss, recon_bce, recon_mse
from .model import DeVae, ModelConfig, forward_train
from .tensor import Tensor, gradient_check

DEFAULT_TOL = 1e-4
ENTROPY_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _rand(rng, shape):
    return Tensor(rng.uniform(-2.0, 2.0, size=shape), requires_grad=True)


def _op_cases(rng) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    a = _rand(rng, (2, 3))
    b = _rand(rng, (2, 3))
    m1 = _rand(rng, (2, 3))
    m2 = _rand(rng, (3, 2))
    w = _rand(rng, (4, 3))
    bias = _rand(rng, (4,))
    pos = Tensor(rng.uniform(0.1, 2.0, size=(2, 3)), requires_grad=True)
    mix = _rand(rng, (2, 4))
    probe = Tensor(rng.uniform(-1.0, 1.0, size=(2, 3)))
    return [
        ("add", lambda: T.tsum(T.mul(T.add(a, b), probe)), [a, b]),
        ("sub", lambda: T.tsum(T.mul(T.sub(a, b), probe)), [a, b]),
        ("mul", lambda: T.tsum(T.mul(T.mul(a, b), probe)), [a, b]),
        ("matmul", lambda: T.tsum(T.square(T.matmul(m1, m2))), [m1, m2]),
        ("linear", lambda: T.tsum(T.square(T.linear(a, w, bias))), [a, w, bias]),
        ("exp", lambda: T.tsum(T.mul(T.exp(a), probe)), [a]),
        ("log", lambda: T.tsum(T.log(pos)), [pos]),
        ("relu", lambda: T.tsum(T.mul(T.relu(a), probe)), [a]),
        ("sigmoid", lambda: T.tsum(T.mul(T.sigmoid(a), probe)), [a]),
        ("square", lambda: T.tsum(T.mul(T.square(a), probe)), [a]),
        ("sum_axis", lambda: T.tsum(T.square(T.tsum(a, axis=1, keepdims=True))), [a]),
        ("mean", lambda: T.square(T.tmean(a)), [a]),
        ("clamp", lambda: T.tsum(T.square(T.clamp(pos, 0.05, 3.0))), [pos]),
        ("slice_concat", lambda: T.tsum(T.square(T.concat_cols(
            [T.slice_cols(mix, 2, 4), T.slice_cols(mix, 0, 2)]))), [mix]),
    ]


def _entropy_cases(rng) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    lv1 = _rand(rng, (3, 1))
    lv2 = _rand(rng, (3, 2))
    diag = Tensor(rng.uniform(0.2, 2.0, size=(3, 2)), requires_grad=True)
    return [
        ("entropy_isotropic", lambda: T.tsum(entropy_isotropic(2, lv1)), [lv1]),
        ("entropy_diagonal", lambda: T.tsum(entropy_diagonal(lv2)), [lv2]),
        ("entropy_full", lambda: T.tsum(entropy_full(diag)), [diag]),
    ]


def _small_config(head: str, recon_kind: str, seed: int) -> ModelConfig:
    return ModelConfig(
        input_dim=6,
        latent_dim=2,
        encoder_widths=(8, 7),
        decoder_widths=(7, 8),
        head=head,
        recon_kind=recon_kind,
        weights=LossWeights(lambda_proj=3.0, lambda_ent=0.05),
        seed=seed,
    )


def _model_cases(rng, head: str, recon_kind: str):
    """Loss-level checks through a 2-hidden-layer model on a 4-sample batch."""
    model = DeVae(_small_config(head, recon_kind, int(rng.integers(0, 2**31))))
    x_raw = rng.uniform(0.05, 0.95, size=(4, 6)) if recon_kind == "bce" else rng.uniform(-2.0, 2.0, size=(4, 6))
    x = Tensor(x_raw)
    y = Tensor(rng.uniform(-2.0, 2.0, size=(4, 2)))
    eps = rng.standard_normal((4, 2))
    params = model.parameters()
    recon_fn = recon_bce if recon_kind == "bce" else recon_mse

    def recon_loss():
        latent = model.encode(x)
        return recon_fn(x, model.decode(latent.sample(eps)))

    def projection():
        return proj_loss(y, model.encode(x).mu)

    def entropy_term():
        return ent_loss(model.encode(x))

    def full_objective():
        return forward_train(model, x, y, eps).total

    tag = f"{head}/{recon_kind}"
    cases = [
        (f"{tag}/recon", recon_loss, params),
        (f"{tag}/proj", projection, params),
        (f"{tag}/total", full_objective, params),
    ]
    if head != "none":
        cases.insert(2, (f"{tag}/ent", entropy_term, params))
    return cases


def run_gradient_suite(seed: int = 0, heads=("none", "isotropic", "diagonal", "full"),
                       recon_kinds=("mse", "bce")) -> list[CheckResult]:
    """Every gradient check, op-level and model-level; deterministic per seed."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for name, build, params in _op_cases(rng):
        results.append(CheckResult(name, gradient_check(build, params), DEFAULT_TOL))
    for name, build, params in _entropy_cases(rng):
        err = gradient_check(build, params, floor=1e-8)
        results.append(CheckResult(name, err, ENTROPY_TOL))
    for head in heads:
        for kind in recon_kinds:
            for name, build, params in _model_cases(rng, head, kind):
                results.append(CheckResult(name, gradient_check(build, params), DEFAULT_TOL))
    return results
