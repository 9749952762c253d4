"""Adversarial objectives: NSGAN, LSGAN, WGAN and gradient penalties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .prng import Prng

LOSS_KINDS = ("nsgan", "lsgan", "wgangp", "dragan")


@dataclass(frozen=True)
class LossKind:
    """Which objective to train with.

    ``dragan_noise_scale=None`` means 0.5 times the std of each real batch.
    """

    variant: str = "nsgan"
    penalty_weight: float = 10.0
    dragan_noise_scale: float | None = None

    def __post_init__(self):
        if self.variant not in LOSS_KINDS:
            raise ValueError(f"unknown loss variant {self.variant!r}; expected one of {LOSS_KINDS}")
        if self.penalty_weight < 0:
            raise ValueError(f"penalty weight must be non-negative, got {self.penalty_weight}")
        if self.dragan_noise_scale is not None and self.dragan_noise_scale < 0:
            raise ValueError(f"dragan noise scale must be non-negative, got {self.dragan_noise_scale}")

    @property
    def penalized(self) -> bool:
        return self.variant in ("wgangp", "dragan")


def nsgan_losses(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    """Non-saturating GAN losses from pre-sigmoid scores.

    ``-log sigmoid(x) = softplus(-x)`` and ``-log(1 - sigmoid(x)) = softplus(x)``,
    which stays finite for any float logit.
    """
    d_loss = ad.add(ad.mean(ad.softplus(-d_real)), ad.mean(ad.softplus(d_fake)))
    g_loss = ad.mean(ad.softplus(-d_fake))
    return d_loss, g_loss


def lsgan_losses(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    d_loss = ad.add(ad.mean(ad.square(d_real - 1.0)) * 0.5, ad.mean(ad.square(d_fake)) * 0.5)
    g_loss = ad.mean(ad.square(d_fake - 1.0)) * 0.5
    return d_loss, g_loss


def wgan_losses(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    """Critic loss ``mean(fake) - mean(real)`` (penalty not included) and ``-mean(fake)``."""
    d_loss = ad.sub(ad.mean(d_fake), ad.mean(d_real))
    g_loss = -ad.mean(d_fake)
    return d_loss, g_loss


def adversarial_losses(kind: LossKind, d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    if kind.variant == "nsgan":
        return nsgan_losses(d_real, d_fake)
    if kind.variant == "lsgan":
        return lsgan_losses(d_real, d_fake)
    if kind.variant == "wgangp":
        return wgan_losses(d_real, d_fake)
    # DRAGAN keeps the minimax cross-entropy objective and adds its penalty
    return nsgan_losses(d_real, d_fake)


def penalty_points(
    x_real: np.ndarray,
    x_fake: np.ndarray,
    mode: str,
    rng: Prng,
    noise_scale: float | None = None,
) -> np.ndarray:
    """Where the critic's input gradient is evaluated.

    wgangp: ``u * real + (1 - u) * fake`` with one ``u ~ U(0,1)`` per row.
    dragan: ``real + scale * N(0,1)`` elementwise.
    """
    x_real = np.asarray(x_real, dtype=np.float64)
    x_fake = np.asarray(x_fake, dtype=np.float64)
    if x_real.shape != x_fake.shape:
        raise ValueError(f"real and fake batches differ in shape: {x_real.shape} vs {x_fake.shape}")
    if mode == "wgangp":
        u = rng.uniform((x_real.shape[0], 1))
        return u * x_real + (1.0 - u) * x_fake
    if mode == "dragan":
        if noise_scale is None:
            noise_scale = 0.5 * float(np.std(x_real))
        return x_real + noise_scale * rng.gaussian(x_real.shape)
    raise ValueError(f"penalty mode must be wgangp or dragan, got {mode!r}")


def gradient_penalty(
    graph: ad.Graph,
    critic: Callable[[Tensor], Tensor],
    x_real: np.ndarray,
    x_fake: np.ndarray,
    mode: str,
    weight: float,
    rng: Prng,
    noise_scale: float | None = None,
) -> Tensor:
    """``weight * mean_rows((||dD/dx(x_hat)||_2 - 1)^2)`` as a differentiable node.

    ``critic`` maps a tensor on ``graph`` to per-row scores; the returned
    node back-propagates into the critic's parameters through the input
    gradient (double backprop).
    """
    if weight < 0:
        raise ValueError(f"penalty weight must be non-negative, got {weight}")
    x_hat = graph.leaf(penalty_points(x_real, x_fake, mode, rng, noise_scale))
    scores = critic(x_hat)
    grad = graph.input_gradient(ad.sum_all(scores), x_hat)
    gap = ad.shift(ad.l2_norm_rows(grad), -1.0)
    return ad.scale(ad.mean(ad.square(gap)), weight)
