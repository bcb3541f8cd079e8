"""Quantum-circuit image generation with adversarial training."""

from .estimator import QuantumImageGAN

__version__ = "0.1.0"
__all__ = ["QuantumImageGAN", "__version__"]
