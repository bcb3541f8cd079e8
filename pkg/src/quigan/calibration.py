"""Measurement-to-pixel intensity calibration.

Raw post-selected probabilities make poor pixels: they sum to 1, so every
value sits near 1/N and the image renders almost black. This module rescales
a probability vector into usable intensities in four differentiable stages:

1. smooth:             flatten with a temperature, (p + eps_p)^(1/tau), renormalized
2. deviation_map:      u = N*p - 1, then x = softplus(k*u) - softplus(0),
                       an asymmetric amplification of above-uniform mass
3. contrast_normalize: standardize to zero mean / unit spread per image
4. affine_project:     sigmoid(alpha * x + beta) with the encoder's per-sample
                       gain and shift

Each stage can be disabled independently (it becomes the identity on the
running value; disabling the affine stage keeps the final sigmoid with
alpha = 1, beta = 0). ``max_normalize`` is the whole-cascade replacement used
by the mapping ablation: plain p / max(p).

Functions accept a Tensor or an ndarray, operate along the last axis, and
return the same kind they were given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

__all__ = [
    "CalibrationConfig",
    "CalibrationError",
    "smooth",
    "deviation_map",
    "contrast_normalize",
    "affine_project",
    "calibrate",
    "max_normalize",
]

# softplus(0) through the same expression Tensor.softplus uses, so that
# deviation_map(uniform) is exactly zero in float64.
_SOFTPLUS_AT_ZERO = float(np.log1p(np.exp(0.0)))


class CalibrationError(ValueError):
    """Invalid calibration settings or malformed stage inputs."""


@dataclass
class CalibrationConfig:
    tau: float = 2.0      # smoothing temperature, > 1
    k: float = 5.0        # deviation gain, > 0
    eps_p: float = 1e-8   # pre-smoothing floor keeping the power map finite
    eps_n: float = 1e-6   # normalization guard against zero spread
    smoothing: bool = True
    deviation: bool = True
    normalization: bool = True
    affine: bool = True

    def validate(self) -> list[str]:
        errors = []
        if self.smoothing and not self.tau > 1.0:
            errors.append(f"tau must be > 1 when smoothing is enabled, got {self.tau}")
        if self.deviation and not self.k > 0.0:
            errors.append(f"k must be > 0 when the deviation map is enabled, got {self.k}")
        if not self.eps_p > 0.0:
            errors.append(f"eps_p must be > 0, got {self.eps_p}")
        if not self.eps_n > 0.0:
            errors.append(f"eps_n must be > 0, got {self.eps_n}")
        return errors

    def stage_flags(self) -> dict[str, bool]:
        return {
            "smoothing": self.smoothing,
            "deviation": self.deviation,
            "normalization": self.normalization,
            "affine": self.affine,
        }


def _lift(x) -> tuple[Tensor, bool]:
    if isinstance(x, Tensor):
        return x, False
    return Tensor(np.asarray(x, dtype=np.float64)), True


def smooth(p, tau: float = 2.0, eps_p: float = 1e-8):
    """Temperature-flatten a probability vector; output is renormalized."""
    if not tau > 1.0:
        raise CalibrationError(f"smoothing needs tau > 1, got {tau}")
    if not eps_p > 0.0:
        raise CalibrationError(f"smoothing needs eps_p > 0, got {eps_p}")
    t, raw = _lift(p)
    powered = (t + eps_p) ** (1.0 / tau)
    out = powered / powered.sum(axis=-1, keepdims=True)
    return out.data if raw else out


def deviation_map(p, k: float = 5.0):
    """Amplify deviation from the uniform level: softplus(k*(N*p - 1)) - softplus(0)."""
    if not k > 0.0:
        raise CalibrationError(f"deviation map needs k > 0, got {k}")
    t, raw = _lift(p)
    n = t.shape[-1]
    u = t * float(n) - 1.0
    out = (u * k).softplus() - _SOFTPLUS_AT_ZERO
    return out.data if raw else out


def contrast_normalize(x, eps_n: float = 1e-6):
    """Standardize along the last axis (population spread, guarded by eps_n)."""
    if not eps_n > 0.0:
        raise CalibrationError(f"normalization needs eps_n > 0, got {eps_n}")
    t, raw = _lift(x)
    mu = t.mean(axis=-1, keepdims=True)
    centered = t - mu
    sigma = (centered * centered).mean(axis=-1, keepdims=True).sqrt()
    out = centered / (sigma + eps_n)
    return out.data if raw else out


def affine_project(x, alpha, beta):
    """sigmoid(alpha * x + beta) with per-sample or scalar alpha/beta."""
    t, raw = _lift(x)
    a, _ = _lift(alpha)
    b, _ = _lift(beta)
    if t.ndim == 2:
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
    out = (t * a + b).sigmoid()
    return out.data if raw else out


def calibrate(probs, alpha=1.0, beta=0.0, config: CalibrationConfig | None = None):
    """Full cascade, honoring the config's stage flags.

    With the affine stage disabled, alpha/beta are ignored (fixed to 1 and 0)
    but the final sigmoid stays, so outputs always land in (0, 1).
    """
    config = config or CalibrationConfig()
    errors = config.validate()
    if errors:
        raise CalibrationError("; ".join(errors))
    t, raw = _lift(probs)
    x = smooth(t, config.tau, config.eps_p) if config.smoothing else t
    x = deviation_map(x, config.k) if config.deviation else x
    x = contrast_normalize(x, config.eps_n) if config.normalization else x
    if config.affine:
        out = affine_project(x, alpha, beta)
    else:
        out = affine_project(x, 1.0, 0.0)
    return out.data if raw else out


def max_normalize(probs):
    """Ablation stand-in for the whole cascade: p / max(p)."""
    t, raw = _lift(probs)
    out = t / t.max(axis=-1, keepdims=True)
    return out.data if raw else out
