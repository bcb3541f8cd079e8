"""Adversarial training of the quantum generator against the WGAN-GP critic.

One batch step runs ``n_critic`` critic updates (fresh fake batches each, no
generator graph) followed by one generator update through the full
differentiable pipeline: latent -> encoder -> circuit -> calibration ->
critic score. Three Adam groups with separate learning rates cover the
critic, the encoder, and the circuit angles.

Determinism contract: everything stochastic flows from the config seed.
Epoch shuffles use stateless per-epoch seeds; latent draws and the penalty's
interpolation coefficients come from one stateful generator whose state is
checkpointed, so save -> load -> continue is bit-identical to an
uninterrupted run.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .autodiff import Tensor
from .calibration import CalibrationConfig, calibrate, max_normalize
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .critic import Critic, critic_loss
from .data import PreparedData, batches
from .encoder import EncoderConfig, NoiseEncoder, sample_latent
from .metrics import intensity_stats, write_metrics_csv
from .quantum import (
    CircuitParams,
    DegeneratePostSelectionError,
    circuit_probs,
)

__all__ = [
    "ABLATION_MODES",
    "TrainConfig",
    "TrainLogRow",
    "TrainingAborted",
    "Adam",
    "Trainer",
    "write_train_log",
]

CALIBRATION_STAGES = ("smoothing", "deviation", "normalization", "affine")

ABLATION_MODES = ("none", "noise_uniform01", "noise_gauss", "map_max") + tuple(
    f"calib_knockout:{stage}" for stage in CALIBRATION_STAGES
)


class TrainingAborted(RuntimeError):
    """Training hit a non-finite loss or unrecoverable post-selection failure."""


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    The critic widths are a conventional WGAN-GP default for small images,
    surfaced here rather than hard-coded so ablations can shrink them.
    """

    num_data_qubits: int = 8
    layers: int = 6
    rotations_per_qubit: int = 2
    epochs: int = 50
    batch_size: int = 5
    n_critic: int = 5
    lambda_gp: float = 10.0
    lr_critic: float = 2e-4
    lr_encoder: float = 2e-4
    lr_circuit: float = 1e-2
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    lr_decay: bool = False  # linear decay of all rates to ~0 across cfg.epochs
    seed: int = 0
    ablation: str = "none"
    encoder_hidden: tuple[int, ...] = (32, 32)
    critic_hidden: tuple[int, ...] = (256, 64)
    critic_slope: float = 0.2
    alpha_min: float = 1e-3
    constrain_alpha: bool = True
    acceptance_floor: float = 1e-6
    max_redraws: int = 3
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)

    def __post_init__(self):
        self.encoder_hidden = tuple(int(h) for h in self.encoder_hidden)
        self.critic_hidden = tuple(int(h) for h in self.critic_hidden)

    def validate(self) -> list[str]:
        errors = []
        if self.num_data_qubits < 1:
            errors.append(f"num_data_qubits must be >= 1, got {self.num_data_qubits}")
        if self.layers < 1:
            errors.append(f"layers must be >= 1, got {self.layers}")
        if self.rotations_per_qubit not in (1, 2):
            errors.append(f"rotations_per_qubit must be 1 or 2, got {self.rotations_per_qubit}")
        if self.epochs < 1:
            errors.append(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            errors.append(f"batch_size must be >= 2 for the metrics, got {self.batch_size}")
        if self.n_critic < 1:
            errors.append(f"n_critic must be >= 1, got {self.n_critic}")
        if self.lambda_gp < 0:
            errors.append(f"lambda_gp must be >= 0, got {self.lambda_gp}")
        for name in ("lr_critic", "lr_encoder", "lr_circuit"):
            if getattr(self, name) <= 0:
                errors.append(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("adam_beta1", "adam_beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                errors.append(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if self.ablation not in ABLATION_MODES:
            errors.append(
                f"unknown ablation {self.ablation!r}; expected one of {', '.join(ABLATION_MODES)}"
            )
        if self.max_redraws < 0:
            errors.append(f"max_redraws must be >= 0, got {self.max_redraws}")
        if not self.acceptance_floor > 0:
            errors.append(f"acceptance_floor must be > 0, got {self.acceptance_floor}")
        errors.extend(self.calibration.validate())
        return errors

    def effective_calibration(self) -> CalibrationConfig:
        """Calibration config with any knockout ablation applied."""
        if self.ablation.startswith("calib_knockout:"):
            stage = self.ablation.split(":", 1)[1]
            return replace(self.calibration, **{stage: False})
        return self.calibration

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        raw["calibration"] = CalibrationConfig(**raw.get("calibration", {}))
        raw["encoder_hidden"] = tuple(raw.get("encoder_hidden", (32, 32)))
        raw["critic_hidden"] = tuple(raw.get("critic_hidden", (256, 64)))
        return cls(**raw)


@dataclass
class TrainLogRow:
    """Per-epoch log line; image stats come from the epoch's generator-step fakes."""

    epoch: int
    critic_loss: float
    generator_loss: float
    wasserstein: float
    penalty: float
    acceptance: float
    brightness: float
    contrast: float
    seconds: float


def write_train_log(path, history: list[TrainLogRow]) -> None:
    write_metrics_csv(path, [asdict(row) for row in history])


class Adam:
    """Standard Adam with bias correction over a fixed parameter list.

    A parameter whose ``.grad`` is unset contributes a zero gradient; its
    moments still decay, keeping optimizer state independent of which graph
    paths a particular step exercised.
    """

    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.0,
                 beta2: float = 0.9, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1, self.beta2, self.eps = float(beta1), float(beta2), float(eps)
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, lr_scale: float = 1.0) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad.data if p.grad is not None else np.zeros_like(p.data)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / correct1) / (np.sqrt(v / correct2) + self.eps)
            p.data = p.data - self.lr * lr_scale * update

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}.m{i}"] = m
            out[f"{prefix}.v{i}"] = v
        return out

    def load_state_tensors(self, prefix: str, tensors: dict[str, np.ndarray], t: int) -> None:
        for i in range(len(self.params)):
            for store, tag in ((self.m, "m"), (self.v, "v")):
                key = f"{prefix}.{tag}{i}"
                if key not in tensors:
                    raise CheckpointError(f"checkpoint is missing optimizer tensor {key!r}")
                if tensors[key].shape != store[i].shape:
                    raise CheckpointError(
                        f"optimizer tensor {key!r} has shape {tensors[key].shape}, "
                        f"expected {store[i].shape}"
                    )
                store[i] = tensors[key].copy()
        self.t = int(t)


class Trainer:
    """Owns the three networks, their optimizers, and the training loop."""

    def __init__(self, config: TrainConfig, data: PreparedData):
        errors = config.validate()
        if errors:
            raise ValueError("invalid training config: " + "; ".join(errors))
        n_pixels = 2 ** config.num_data_qubits
        if data.train.shape[1] != n_pixels:
            raise ValueError(
                f"data has {data.train.shape[1]} pixels per image but "
                f"{config.num_data_qubits} data qubits generate {n_pixels}"
            )
        self.config = config
        self.data = data
        self.calibration = config.effective_calibration()

        init_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((config.seed, 1))))
        self.encoder = NoiseEncoder(
            EncoderConfig(
                latent_dim=config.num_data_qubits,
                hidden=config.encoder_hidden,
                alpha_min=config.alpha_min,
                constrain_alpha=config.constrain_alpha,
            ),
            init_rng,
        )
        self.circuit = CircuitParams.random(
            config.num_data_qubits, config.layers, init_rng, config.rotations_per_qubit
        )
        self.omega = Tensor(self.circuit.angles.copy(), requires_grad=True)
        self.critic = Critic(
            data.eval_width, config.critic_hidden, config.critic_slope, init_rng
        )

        self.opt_critic = Adam(self.critic.parameters(), config.lr_critic,
                               config.adam_beta1, config.adam_beta2, config.adam_eps)
        self.opt_encoder = Adam(self.encoder.parameters(), config.lr_encoder,
                                config.adam_beta1, config.adam_beta2, config.adam_eps)
        self.opt_circuit = Adam([self.omega], config.lr_circuit,
                                config.adam_beta1, config.adam_beta2, config.adam_eps)

        # One stateful stream for latents and interpolation draws; its state
        # is checkpointed. Shuffles get their own stateless per-epoch seeds.
        self.rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((config.seed, 0))))
        self.epoch = 0
        self.history: list[TrainLogRow] = []
        self.epoch_z_stats: dict | None = None
        self._z_acc: list | None = None

    # ------------------------------------------------------------------
    # generation

    def _ablation_noise(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.config.ablation == "noise_uniform01":
            return rng.uniform(0.0, 1.0, size=(n, self.config.num_data_qubits))
        if self.config.ablation == "noise_gauss":
            return rng.standard_normal(size=(n, self.config.num_data_qubits))
        raise RuntimeError(f"not a noise ablation: {self.config.ablation}")

    def _generator_forward(self, a: np.ndarray, z_override, with_grad: bool):
        enc = self.encoder(Tensor(a))
        if z_override is not None:
            z = Tensor(z_override)  # replaces the learned angles; encoder z head goes unused
        else:
            z = enc.z if with_grad else enc.z.detach()
        alpha = enc.alpha if with_grad else enc.alpha.detach()
        beta = enc.beta if with_grad else enc.beta.detach()
        angles = self.omega if with_grad else self.omega.detach()

        probs, acceptance = circuit_probs(z, angles, self.circuit,
                                          self.config.acceptance_floor)
        if self.config.ablation == "map_max":
            images = max_normalize(probs)
        else:
            images = calibrate(probs, alpha, beta, self.calibration)
        if self._z_acc is not None:
            self._z_acc.append(z.data.copy())
        info = {
            "acceptance": acceptance,
            "z": z.data,
            "alpha": alpha.data,
            "beta": beta.data,
        }
        return images, info

    def sample_fakes(self, n: int, with_grad: bool = True,
                     rng: np.random.Generator | None = None):
        """Generate n fake images (Tensor (n, 2^D) in (0,1)) plus batch info.

        Latent rows whose circuit output fails post-selection are redrawn up
        to ``max_redraws`` times; exhausting the budget aborts training.
        """
        rng = rng or self.rng
        d = self.config.num_data_qubits
        noise_ablation = self.config.ablation in ("noise_uniform01", "noise_gauss")
        a = sample_latent(rng, n, d)
        z_override = self._ablation_noise(n, rng) if noise_ablation else None
        for attempt in range(self.config.max_redraws + 1):
            try:
                return self._generator_forward(a, z_override, with_grad)
            except DegeneratePostSelectionError as err:
                if attempt == self.config.max_redraws:
                    raise TrainingAborted(
                        f"post-selection kept failing after {self.config.max_redraws} "
                        f"redraws at epoch {self.epoch}: {err}"
                    ) from err
                bad = err.indices
                a[bad] = sample_latent(rng, bad.size, d)
                if z_override is not None:
                    z_override[bad] = self._ablation_noise(bad.size, rng)

    def generate(self, n: int, seed: int = 0) -> np.ndarray:
        """Sample n images deterministically from (seed, current weights).

        Uses a private stream, so generating never perturbs training state.
        """
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 2))))
        images, _ = self.sample_fakes(n, with_grad=False, rng=rng)
        return images.data

    # ------------------------------------------------------------------
    # training

    def _eval_view_tensor(self, images: Tensor) -> Tensor:
        d = self.data
        if d.inner_side == d.canvas_side:
            return images
        b = images.shape[0]
        grid = images.reshape(b, d.canvas_side, d.canvas_side)
        o = d.inner_offset
        crop = grid[:, o:o + d.inner_side, o:o + d.inner_side]
        return crop.reshape(b, d.eval_width)

    def _check_finite(self, value: float, what: str, batch_index: int) -> None:
        if not np.isfinite(value):
            raise TrainingAborted(
                f"non-finite {what} ({value}) at epoch {self.epoch}, "
                f"batch {batch_index}; aborting before corrupting weights"
            )

    def train_epoch(self) -> TrainLogRow:
        cfg = self.config
        if self.data.train.shape[0] == 0:
            raise TrainingAborted(
                "trainer has no training data; it was loaded for generation only"
            )
        start = time.perf_counter()
        lr_scale = max(1.0 - self.epoch / cfg.epochs, 1.0 / cfg.epochs) if cfg.lr_decay else 1.0
        shuffle_rng = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((cfg.seed, 3, self.epoch)))
        )
        self._z_acc = []
        sums = {"critic_loss": 0.0, "generator_loss": 0.0, "wasserstein": 0.0,
                "penalty": 0.0, "acceptance": 0.0, "brightness": 0.0, "contrast": 0.0}
        n_batches = 0

        for batch_index, real in enumerate(batches(self.data.train, cfg.batch_size, shuffle_rng)):
            real_eval = self.data.eval_view(real)
            b = real.shape[0]

            last = None
            for _ in range(cfg.n_critic):
                fake, _ = self.sample_fakes(b, with_grad=False)
                fake_eval = self.data.eval_view(fake.data)
                last = critic_loss(self.critic, real_eval, fake_eval, self.rng, cfg.lambda_gp)
                self._check_finite(last.loss.item(), "critic loss", batch_index)
                self.opt_critic.zero_grad()
                last.loss.backward()
                self.opt_critic.step(lr_scale)

            fake_t, info = self.sample_fakes(b, with_grad=True)
            fake_eval_t = self._eval_view_tensor(fake_t)
            gen_loss = -self.critic.score(fake_eval_t).mean()
            self._check_finite(gen_loss.item(), "generator loss", batch_index)
            self.opt_encoder.zero_grad()
            self.opt_circuit.zero_grad()
            # the critic's params pick up grads here too; they are zeroed
            # again before the next critic step, so they never leak into it
            gen_loss.backward()
            self.opt_encoder.step(lr_scale)
            self.opt_circuit.step(lr_scale)

            stats = intensity_stats(fake_eval_t.data)
            sums["critic_loss"] += last.loss.item()
            sums["generator_loss"] += gen_loss.item()
            sums["wasserstein"] += last.wasserstein
            sums["penalty"] += last.penalty
            sums["acceptance"] += float(np.mean(info["acceptance"]))
            sums["brightness"] += stats.brightness_mean
            sums["contrast"] += stats.contrast_mean
            n_batches += 1

        z_seen = np.concatenate([z.ravel() for z in self._z_acc])
        self.epoch_z_stats = {
            "mean": float(z_seen.mean()),
            "min": float(z_seen.min()),
            "max": float(z_seen.max()),
            "count": int(z_seen.size),
        }
        self._z_acc = None

        self.epoch += 1
        row = TrainLogRow(
            epoch=self.epoch,
            seconds=time.perf_counter() - start,
            **{key: value / n_batches for key, value in sums.items()},
        )
        self.history.append(row)
        return row

    def train(self, num_epochs: int | None = None, on_epoch_end=None) -> list[TrainLogRow]:
        """Run ``num_epochs`` more epochs (default: the config's count)."""
        n = self.config.epochs if num_epochs is None else num_epochs
        for _ in range(n):
            row = self.train_epoch()
            if on_epoch_end is not None:
                on_epoch_end(self, row)
        return self.history

    # ------------------------------------------------------------------
    # persistence

    def state_tensors(self) -> dict[str, np.ndarray]:
        tensors = {"circuit.angles": self.omega.data}
        tensors.update({k: p.data for k, p in self.encoder.named_parameters().items()})
        tensors.update({k: p.data for k, p in self.critic.named_parameters().items()})
        tensors.update(self.opt_critic.state_tensors("adam.critic"))
        tensors.update(self.opt_encoder.state_tensors("adam.encoder"))
        tensors.update(self.opt_circuit.state_tensors("adam.circuit"))
        return tensors

    def save(self, path) -> None:
        metadata = {
            "kind": "quigan-trainer",
            "epoch": self.epoch,
            "rng_state": self.rng.bit_generator.state,
            "adam_steps": {
                "critic": self.opt_critic.t,
                "encoder": self.opt_encoder.t,
                "circuit": self.opt_circuit.t,
            },
            "config": self.config.to_dict(),
            "geometry": {
                "canvas_side": self.data.canvas_side,
                "inner_side": self.data.inner_side,
                "inner_offset": self.data.inner_offset,
                "source_side": self.data.source_side,
            },
            "history": [asdict(row) for row in self.history],
        }
        save_checkpoint(path, self.state_tensors(), metadata)

    @classmethod
    def from_checkpoint(cls, path, data: PreparedData | None = None) -> "Trainer":
        """Rebuild a trainer in exactly the saved state.

        With ``data=None`` the trainer is generation-only: the saved geometry
        stands in for the dataset and training raises until real data is
        attached.
        """
        tensors, metadata = load_checkpoint(path)
        if metadata.get("kind") != "quigan-trainer":
            raise CheckpointError(f"{path}: not a trainer checkpoint")
        config = TrainConfig.from_dict(metadata["config"])
        if data is None:
            geo = metadata["geometry"]
            n_pixels = 2 ** config.num_data_qubits
            data = PreparedData(
                train=np.zeros((0, n_pixels)),
                test=np.zeros((0, n_pixels)),
                canvas_side=int(geo["canvas_side"]),
                inner_side=int(geo["inner_side"]),
                inner_offset=int(geo["inner_offset"]),
                source_side=int(geo["source_side"]),
            )
        trainer = cls(config, data)

        named = {"circuit.angles": trainer.omega}
        named.update(trainer.encoder.named_parameters())
        named.update(trainer.critic.named_parameters())
        for key, param in named.items():
            if key not in tensors:
                raise CheckpointError(f"{path}: checkpoint is missing tensor {key!r}")
            if tensors[key].shape != param.data.shape:
                raise CheckpointError(
                    f"{path}: tensor {key!r} has shape {tensors[key].shape}, "
                    f"expected {param.data.shape}"
                )
            param.data = tensors[key].copy()

        steps = metadata["adam_steps"]
        trainer.opt_critic.load_state_tensors("adam.critic", tensors, steps["critic"])
        trainer.opt_encoder.load_state_tensors("adam.encoder", tensors, steps["encoder"])
        trainer.opt_circuit.load_state_tensors("adam.circuit", tensors, steps["circuit"])

        trainer.epoch = int(metadata["epoch"])
        trainer.rng.bit_generator.state = metadata["rng_state"]
        trainer.history = [TrainLogRow(**row) for row in metadata.get("history", [])]
        return trainer
