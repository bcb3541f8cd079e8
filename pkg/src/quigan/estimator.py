"""scikit-learn style front end for the quantum image generator.

``QuantumImageGAN`` follows the estimator protocol the way sklearn's own
generative models do (``GaussianMixture`` being the closest relative):
hyperparameters go in ``__init__`` unchanged, ``fit(X)`` trains, ``sample(n)``
draws new data, ``score(X)`` is a goodness-of-fit number where higher is
better, and everything learned lives in trailing-underscore attributes.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils import check_array, check_random_state

from .data import PreparedData
from .metrics import pixel_mmd
from .training import ABLATION_MODES, TrainConfig, Trainer

__all__ = ["QuantumImageGAN"]


class QuantumImageGAN(BaseEstimator):
    """Adversarially trained quantum-circuit image generator.

    Each row of ``X`` is one flattened square grayscale image with values in
    [0, 1]. The row width must be a power of four (``2 ** num_data_qubits``
    pixels, i.e. a 2^(D/2) x 2^(D/2) image): the distribution over pixel
    positions is read out of a register of ``num_data_qubits`` qubits.

    Parameters mirror the training loop's knobs; see ``TrainConfig``. With
    ``num_data_qubits=None`` the register size is inferred from the data
    width at fit time.

    Examples
    --------
    >>> gan = QuantumImageGAN(num_data_qubits=2, layers=1, epochs=1,
    ...                       batch_size=4, n_critic=1, random_state=0)
    >>> X = np.random.default_rng(0).uniform(size=(8, 4))
    >>> samples = gan.fit(X).sample(3)
    >>> samples.shape
    (3, 4)
    """

    def __init__(
        self,
        num_data_qubits=None,
        layers=6,
        rotations_per_qubit=2,
        epochs=50,
        batch_size=5,
        n_critic=5,
        lambda_gp=10.0,
        lr_critic=2e-4,
        lr_encoder=2e-4,
        lr_circuit=1e-2,
        lr_decay=False,
        encoder_hidden=(32, 32),
        critic_hidden=(256, 64),
        ablation="none",
        random_state=None,
    ):
        self.num_data_qubits = num_data_qubits
        self.layers = layers
        self.rotations_per_qubit = rotations_per_qubit
        self.epochs = epochs
        self.batch_size = batch_size
        self.n_critic = n_critic
        self.lambda_gp = lambda_gp
        self.lr_critic = lr_critic
        self.lr_encoder = lr_encoder
        self.lr_circuit = lr_circuit
        self.lr_decay = lr_decay
        self.encoder_hidden = encoder_hidden
        self.critic_hidden = critic_hidden
        self.ablation = ablation
        self.random_state = random_state

    # ------------------------------------------------------------------
    # estimator protocol

    def fit(self, X, y=None):
        """Train the generator on flattened images ``X``; returns ``self``."""
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.min() < 0.0 or X.max() > 1.0:
            raise ValueError(
                f"pixel values must lie in [0, 1], got range "
                f"[{X.min():.6g}, {X.max():.6g}]"
            )
        n_qubits = self._resolve_qubits(X.shape[1])
        if self.ablation not in ABLATION_MODES:
            raise ValueError(
                f"unknown ablation {self.ablation!r}; choose from {ABLATION_MODES}"
            )

        seed = self._resolve_seed()
        config = TrainConfig(
            num_data_qubits=n_qubits,
            layers=self.layers,
            rotations_per_qubit=self.rotations_per_qubit,
            epochs=self.epochs,
            batch_size=self.batch_size,
            n_critic=self.n_critic,
            lambda_gp=self.lambda_gp,
            lr_critic=self.lr_critic,
            lr_encoder=self.lr_encoder,
            lr_circuit=self.lr_circuit,
            lr_decay=self.lr_decay,
            encoder_hidden=tuple(self.encoder_hidden),
            critic_hidden=tuple(self.critic_hidden),
            ablation=self.ablation,
            seed=seed,
        )
        errors = config.validate()
        if errors:
            raise ValueError("; ".join(errors))

        side = 2 ** (n_qubits // 2)
        data = PreparedData(
            train=X,
            test=X[:0],
            canvas_side=side,
            inner_side=side,
            inner_offset=0,
            source_side=side,
        )
        trainer = Trainer(config, data)
        trainer.train()

        self.n_features_in_ = X.shape[1]
        self.num_data_qubits_ = n_qubits
        self.trainer_ = trainer
        self.history_ = list(trainer.history)
        return self

    def sample(self, n_samples=1, seed=0):
        """Draw ``n_samples`` flattened images; fixed ``seed`` fixes the draw."""
        self._check_fitted()
        if n_samples < 1:
            raise ValueError(f"n_samples must be positive, got {n_samples}")
        return self.trainer_.generate(int(n_samples), seed=seed)

    def score(self, X, y=None):
        """Negative pixel-feature MMD between ``X`` and fresh samples.

        Zero means indistinguishable under the polynomial-kernel feature
        statistics; more negative means a worse fit. Higher is better, per
        the usual scoring convention.
        """
        self._check_fitted()
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but the model was fit with "
                f"{self.n_features_in_}"
            )
        fake = self.sample(X.shape[0], seed=0)
        side = 2 ** (self.num_data_qubits_ // 2)
        block = 4 if side % 4 == 0 else 1
        return -pixel_mmd(X, fake, block=block)

    # ------------------------------------------------------------------
    # helpers

    def _resolve_qubits(self, width: int) -> int:
        if self.num_data_qubits is not None:
            n = int(self.num_data_qubits)
            if 2 ** n != width:
                raise ValueError(
                    f"X has {width} features but num_data_qubits={n} "
                    f"implies {2 ** n}"
                )
            return n
        n = round(math.log2(width))
        if 2 ** n != width or n % 2 != 0:
            raise ValueError(
                f"feature width {width} is not a power of four; flattened "
                f"square register images are required"
            )
        return n

    def _resolve_seed(self) -> int:
        if self.random_state is None:
            return 0
        if isinstance(self.random_state, (int, np.integer)):
            return int(self.random_state)
        # RandomState instances get reduced to a drawn seed so that the
        # trainer's own generators stay fully reproducible from one integer.
        return int(check_random_state(self.random_state).randint(2 ** 31))

    def _check_fitted(self) -> None:
        if not hasattr(self, "trainer_"):
            raise NotFittedError(
                "This QuantumImageGAN instance is not fitted yet. Call 'fit' "
                "before sampling or scoring."
            )
