"""INI run configuration: schema, loading, overrides, and the run manifest.

A run is described by one INI file whose sections mirror the pipeline
(``[run]``, ``[quantum]``, ``[encoder]``, ``[calibration]``, ``[critic]``,
``[training]``, ``[data]``, ``[output]``). Every key is optional and falls
back to the library default; command-line flags override file values.
Validation is all-at-once: a bad file reports every problem in one
``ConfigError`` rather than the first one hit.

``write_manifest`` records the fully resolved configuration next to a run's
outputs, in the same grammar, so the manifest itself is a loadable config.
"""

from __future__ import annotations

import configparser
import sys
import time
from dataclasses import dataclass

from . import __version__
from .calibration import CalibrationConfig
from .data import DatasetSpec
from .training import TrainConfig

__all__ = ["ConfigError", "RunSettings", "load_settings", "write_manifest"]

_BOOLEANS = {"1": True, "true": True, "yes": True, "on": True,
             "0": False, "false": False, "no": False, "off": False}


class ConfigError(ValueError):
    """One or more configuration problems; ``errors`` lists them all."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


def _bool(raw: str) -> bool:
    try:
        return _BOOLEANS[raw.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean (true/false), got {raw!r}") from None


def _int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {raw!r}") from None


# section -> key -> caster. configparser lower-cases keys, so these names are
# the canonical spelling. [meta] is reserved for manifests and ignored here.
SCHEMA: dict[str, dict[str, object]] = {
    "run": {"seed": int, "epochs": int, "out_dir": str},
    "quantum": {"data_qubits": int, "layers": int, "rotations_per_qubit": int},
    "encoder": {"hidden": _int_tuple, "alpha_min": float, "constrain_alpha": _bool},
    "calibration": {"tau": float, "k": float, "eps_p": float, "eps_n": float,
                    "smoothing": _bool, "deviation": _bool,
                    "normalization": _bool, "affine": _bool},
    "critic": {"hidden": _int_tuple, "negative_slope": float},
    "training": {"batch_size": int, "n_critic": int, "lambda_gp": float,
                 "lr_critic": float, "lr_encoder": float, "lr_circuit": float,
                 "adam_beta1": float, "adam_beta2": float, "adam_eps": float,
                 "lr_decay": _bool, "ablation": str,
                 "acceptance_floor": float, "max_redraws": int},
    "data": {"images": str, "labels": str, "class": int,
             "train_count": int, "test_count": int,
             "resize": str, "shuffle_seed": int},
    "output": {"montage_every": int, "format": str},
}


@dataclass
class RunSettings:
    """Everything a command needs: hyperparameters, data source, outputs."""

    train: TrainConfig
    dataset: DatasetSpec | None
    out_dir: str | None
    montage_every: int = 5
    image_format: str = "pgm"

    def require_dataset(self) -> DatasetSpec:
        if self.dataset is None:
            raise ConfigError(
                ["data.images and data.labels are required for this command "
                 "(set them in the config file or pass --images/--labels)"]
            )
        return self.dataset

    def require_out_dir(self) -> str:
        if not self.out_dir:
            raise ConfigError(
                ["an output directory is required (run.out_dir or --out)"])
        return self.out_dir


def load_settings(config_path: str | None = None,
                  overrides: dict[tuple[str, str], object] | None = None) -> RunSettings:
    """Read ``config_path`` (optional), apply overrides, validate everything.

    ``overrides`` maps ``(section, key)`` to an already-typed value; ``None``
    values are ignored so argparse defaults pass straight through.
    """
    values: dict[tuple[str, str], object] = {}
    errors: list[str] = []

    if config_path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(config_path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config file: {exc}"]) from exc
        except configparser.Error as exc:
            raise ConfigError([f"config syntax: {exc}"]) from exc
        for section in parser.sections():
            if section == "meta":  # manifest bookkeeping, not configuration
                continue
            if section not in SCHEMA:
                errors.append(f"unknown section [{section}]")
                continue
            for key, raw in parser.items(section):
                caster = SCHEMA[section].get(key)
                if caster is None:
                    errors.append(f"unknown key {section}.{key}")
                    continue
                try:
                    values[(section, key)] = caster(raw)
                except ValueError as exc:
                    errors.append(f"{section}.{key}: {exc}")

    for sk, value in (overrides or {}).items():
        if value is not None:
            values[sk] = value

    def get(section: str, key: str, default):
        return values.get((section, key), default)

    calibration = CalibrationConfig(
        tau=get("calibration", "tau", 2.0),
        k=get("calibration", "k", 5.0),
        eps_p=get("calibration", "eps_p", 1e-8),
        eps_n=get("calibration", "eps_n", 1e-6),
        smoothing=get("calibration", "smoothing", True),
        deviation=get("calibration", "deviation", True),
        normalization=get("calibration", "normalization", True),
        affine=get("calibration", "affine", True),
    )
    train = TrainConfig(
        num_data_qubits=get("quantum", "data_qubits", 8),
        layers=get("quantum", "layers", 6),
        rotations_per_qubit=get("quantum", "rotations_per_qubit", 2),
        epochs=get("run", "epochs", 50),
        batch_size=get("training", "batch_size", 5),
        n_critic=get("training", "n_critic", 5),
        lambda_gp=get("training", "lambda_gp", 10.0),
        lr_critic=get("training", "lr_critic", 2e-4),
        lr_encoder=get("training", "lr_encoder", 2e-4),
        lr_circuit=get("training", "lr_circuit", 1e-2),
        adam_beta1=get("training", "adam_beta1", 0.0),
        adam_beta2=get("training", "adam_beta2", 0.9),
        adam_eps=get("training", "adam_eps", 1e-8),
        lr_decay=get("training", "lr_decay", False),
        seed=get("run", "seed", 0),
        ablation=get("training", "ablation", "none"),
        encoder_hidden=get("encoder", "hidden", (32, 32)),
        critic_hidden=get("critic", "hidden", (256, 64)),
        critic_slope=get("critic", "negative_slope", 0.2),
        alpha_min=get("encoder", "alpha_min", 1e-3),
        constrain_alpha=get("encoder", "constrain_alpha", True),
        acceptance_floor=get("training", "acceptance_floor", 1e-6),
        max_redraws=get("training", "max_redraws", 3),
        calibration=calibration,
    )
    errors.extend(train.validate())

    images = get("data", "images", "")
    labels = get("data", "labels", "")
    dataset = None
    if images or labels:
        if not (images and labels):
            errors.append("data.images and data.labels must be set together")
        else:
            dataset = DatasetSpec(
                images_path=images,
                labels_path=labels,
                class_label=get("data", "class", 0),
                train_count=get("data", "train_count", 1000),
                test_count=get("data", "test_count", 250),
                num_data_qubits=train.num_data_qubits,
                resize_policy=get("data", "resize", "downsample_pow2"),
                shuffle_seed=get("data", "shuffle_seed", 0),
            )
            errors.extend(dataset.validate())

    montage_every = get("output", "montage_every", 5)
    if montage_every < 1:
        errors.append(f"output.montage_every must be >= 1, got {montage_every}")
    image_format = get("output", "format", "pgm")
    if image_format not in ("pgm", "png"):
        errors.append(f"output.format must be pgm or png, got {image_format!r}")

    if errors:
        raise ConfigError(errors)
    return RunSettings(
        train=train,
        dataset=dataset,
        out_dir=get("run", "out_dir", None),
        montage_every=montage_every,
        image_format=image_format,
    )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def write_manifest(path, settings: RunSettings, argv: list[str] | None = None) -> None:
    """Write the resolved configuration (plus provenance) as a loadable INI."""
    t, c = settings.train, settings.train.calibration
    sections: dict[str, dict[str, object]] = {
        "meta": {
            "version": __version__,
            "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "command": " ".join(argv if argv is not None else sys.argv),
        },
        "run": {"seed": t.seed, "epochs": t.epochs,
                "out_dir": settings.out_dir or ""},
        "quantum": {"data_qubits": t.num_data_qubits, "layers": t.layers,
                    "rotations_per_qubit": t.rotations_per_qubit},
        "encoder": {"hidden": t.encoder_hidden, "alpha_min": t.alpha_min,
                    "constrain_alpha": t.constrain_alpha},
        "calibration": {"tau": c.tau, "k": c.k, "eps_p": c.eps_p, "eps_n": c.eps_n,
                        "smoothing": c.smoothing, "deviation": c.deviation,
                        "normalization": c.normalization, "affine": c.affine},
        "critic": {"hidden": t.critic_hidden, "negative_slope": t.critic_slope},
        "training": {"batch_size": t.batch_size, "n_critic": t.n_critic,
                     "lambda_gp": t.lambda_gp, "lr_critic": t.lr_critic,
                     "lr_encoder": t.lr_encoder, "lr_circuit": t.lr_circuit,
                     "adam_beta1": t.adam_beta1, "adam_beta2": t.adam_beta2,
                     "adam_eps": t.adam_eps, "lr_decay": t.lr_decay,
                     "ablation": t.ablation,
                     "acceptance_floor": t.acceptance_floor,
                     "max_redraws": t.max_redraws},
        "output": {"montage_every": settings.montage_every,
                   "format": settings.image_format},
    }
    if settings.dataset is not None:
        d = settings.dataset
        sections["data"] = {
            "images": d.images_path, "labels": d.labels_path,
            "class": d.class_label, "train_count": d.train_count,
            "test_count": d.test_count, "resize": d.resize_policy,
            "shuffle_seed": d.shuffle_seed,
        }
    parser = configparser.ConfigParser(interpolation=None)
    for name, body in sections.items():
        parser[name] = {key: _fmt(value) for key, value in body.items()}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
