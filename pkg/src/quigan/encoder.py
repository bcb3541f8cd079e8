"""Latent-to-circuit noise encoder.

A small MLP turns a uniform latent draw a ~ U(-1, 1)^D into the circuit's
input rotation angles z (one per data qubit, squashed into [-pi, pi]) plus
the two scalars of the calibration's affine head: a positive contrast gain
alpha and an unconstrained brightness shift beta. Learning the noise
distribution instead of feeding raw uniforms is what the noise-ablation
modes switch off.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, glorot_uniform

__all__ = ["EncoderConfig", "EncoderOutput", "NoiseEncoder", "sample_latent"]


@dataclass
class EncoderConfig:
    latent_dim: int
    hidden: tuple[int, ...] = (32, 32)
    alpha_min: float = 1e-3        # floor keeping the contrast gain positive
    constrain_alpha: bool = True   # False: expose the raw affine head

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be >= 1")
        if self.alpha_min <= 0:
            raise ValueError("alpha_min must be positive")


@dataclass
class EncoderOutput:
    """z drives the state preparation; alpha/beta drive the affine projection."""

    z: Tensor      # (B, latent_dim), entries in [-pi, pi]
    alpha: Tensor  # (B,), > 0 when constrained
    beta: Tensor   # (B,)


class NoiseEncoder:
    """MLP: latent_dim -> hidden... -> latent_dim + 2, tanh hidden activations.

    Weights are Glorot-uniform, biases zero. The first latent_dim outputs are
    scaled by pi*tanh into valid rotation angles; output D is the alpha head
    (softplus + alpha_min when constrained); output D+1 is beta, raw.
    """

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        d = config.latent_dim
        sizes = (d,) + config.hidden + (d + 2,)
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
            out[f"encoder.w{i}"] = w
            out[f"encoder.b{i}"] = b
        return out

    def __call__(self, a) -> EncoderOutput:
        t = a if isinstance(a, Tensor) else Tensor(a)
        if t.ndim != 2 or t.shape[1] != self.config.latent_dim:
            raise ValueError(
                f"latent batch must be (B, {self.config.latent_dim}), got {t.shape}"
            )
        if not np.all(np.isfinite(t.data)):
            raise ValueError("latent batch must be finite")
        h = t
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = (h @ w + b).tanh()
        head = h @ self.weights[-1] + self.biases[-1]

        d = self.config.latent_dim
        z = head[:, :d].tanh() * np.pi
        raw_alpha = head[:, d]
        if self.config.constrain_alpha:
            alpha = raw_alpha.softplus() + self.config.alpha_min
        else:
            alpha = raw_alpha
        beta = head[:, d + 1]
        return EncoderOutput(z=z, alpha=alpha, beta=beta)


def sample_latent(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Draw n latent rows from the open interval (-1, 1)^dim."""
    a = rng.uniform(-1.0, 1.0, size=(n, dim))
    while True:  # uniform() includes its low endpoint; the contract excludes it
        edge = a == -1.0
        if not edge.any():
            return a
        a[edge] = rng.uniform(-1.0, 1.0, size=int(edge.sum()))
