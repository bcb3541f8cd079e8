"""WGAN-GP critic: scoring network, gradient penalty, and the critic loss.

The critic is a plain MLP with LeakyReLU hidden activations and no
normalization layers (batch norm would break the per-sample gradient
penalty). The penalty follows the standard recipe: score random
interpolates between real and fake batches, backpropagate to the
interpolates, and push the per-sample gradient norm toward 1. The norm uses
an exact sqrt, so the analytic values for linear critics hold bit-for-bit;
only the backward's reciprocal is clamped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, glorot_uniform, grad

__all__ = ["Critic", "CriticBatchResult", "gradient_penalty", "critic_loss"]


class Critic:
    """MLP scorer: n_inputs -> hidden... -> 1, LeakyReLU(negative_slope) between.

    ``hidden=()`` degenerates to a single linear layer, which the analytic
    penalty checks rely on.
    """

    def __init__(self, n_inputs: int, hidden: tuple[int, ...] = (256, 64),
                 negative_slope: float = 0.2, rng: np.random.Generator | None = None):
        if n_inputs < 1:
            raise ValueError("n_inputs must be >= 1")
        if not 0.0 <= negative_slope < 1.0:
            raise ValueError("negative_slope must be in [0, 1)")
        rng = rng or np.random.default_rng()
        self.n_inputs = int(n_inputs)
        self.hidden = tuple(int(h) for h in hidden)
        self.negative_slope = float(negative_slope)
        sizes = (self.n_inputs,) + self.hidden + (1,)
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            self.weights.append(Tensor(glorot_uniform(rng, n_in, n_out), requires_grad=True))
            self.biases.append(Tensor(np.zeros(n_out), requires_grad=True))

    def parameters(self) -> list[Tensor]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"critic.w{i}"] = w
            out[f"critic.b{i}"] = b
        return out

    def score(self, images) -> Tensor:
        """Unbounded realness score, shape (B,)."""
        t = images if isinstance(images, Tensor) else Tensor(images)
        if t.ndim != 2 or t.shape[1] != self.n_inputs:
            raise ValueError(f"critic expects (B, {self.n_inputs}), got {t.shape}")
        h = t
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = (h @ w + b).leaky_relu(self.negative_slope)
        out = h @ self.weights[-1] + self.biases[-1]
        return out.reshape(t.shape[0])


@dataclass
class CriticBatchResult:
    loss: Tensor               # mean(fake) - mean(real) + penalty, minimized
    wasserstein: float         # mean(real) - mean(fake)
    penalty: float
    scores_real: np.ndarray
    scores_fake: np.ndarray


def gradient_penalty(critic: Critic, real, fake, eps, lam: float = 10.0) -> Tensor:
    """lam * E[(||grad_xhat D(xhat)||_2 - 1)^2] on per-sample interpolates.

    ``eps`` holds one interpolation coefficient per sample (shape (B,) or
    (B, 1)); xhat = eps*real + (1-eps)*fake. The returned tensor is part of
    the critic's graph and differentiates through the inner gradient.
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"real {real.shape} and fake {fake.shape} batches must match")
    eps = np.asarray(eps, dtype=np.float64).reshape(-1, 1)
    if eps.shape[0] != real.shape[0]:
        raise ValueError("need one interpolation coefficient per sample")

    x_hat = Tensor(eps * real + (1.0 - eps) * fake, requires_grad=True)
    scores = critic.score(x_hat)
    # summing gives each row its own gradient; rows never mix in the score
    (g,) = grad(scores.sum(), [x_hat])
    norms = (g * g).sum(axis=1).sqrt()
    return ((norms - 1.0) ** 2).mean() * lam


def critic_loss(critic: Critic, real, fake, rng: np.random.Generator,
                lam: float = 10.0) -> CriticBatchResult:
    """One critic step's loss with freshly drawn interpolation coefficients."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    eps = rng.uniform(0.0, 1.0, size=real.shape[0])
    scores_real = critic.score(real)
    scores_fake = critic.score(fake)
    penalty = gradient_penalty(critic, real, fake, eps, lam)
    loss = scores_fake.mean() - scores_real.mean() + penalty
    return CriticBatchResult(
        loss=loss,
        wasserstein=float(scores_real.data.mean() - scores_fake.data.mean()),
        penalty=penalty.item(),
        scores_real=scores_real.data.copy(),
        scores_fake=scores_fake.data.copy(),
    )
