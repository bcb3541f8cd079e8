"""IDX-format image IO and dataset preparation.

Reads the classic big-endian IDX files (as used by MNIST), selects one digit
class, splits it 8:2 into train/test, and resizes each image to fit a
2^D-pixel register by one of two policies:

* ``downsample_pow2``: area-weighted average down to 2^(D/2) per side
  (mass-preserving, exact box overlap, no interpolation artifacts);
* ``pad_crop``: center the source image unchanged on a 2^(D/2) canvas of
  zeros; the evaluation view crops the canvas back to the source square so
  metrics and the critic never see the dead border.

Pixels are float64 in [0, 1] everywhere past the loaders; images flatten
row-major so the flat index matches the simulator's little-endian pixel index.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "IMAGE_MAGIC",
    "LABEL_MAGIC",
    "IdxFormatError",
    "DatasetSpec",
    "PreparedData",
    "load_idx_images",
    "load_idx_labels",
    "load_dataset",
    "write_idx_images",
    "write_idx_labels",
    "area_downsample",
    "pad_to_canvas",
    "prepare",
    "prepare_arrays",
    "batches",
]

IMAGE_MAGIC = 0x00000803  # 2051
LABEL_MAGIC = 0x00000801  # 2049


class IdxFormatError(ValueError):
    """Malformed IDX file; messages name the offending byte offset."""


def load_idx_images(path) -> np.ndarray:
    """Read an IDX image file into float64 (n, h, w) scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise IdxFormatError(
            f"{path}: truncated image header, need 16 bytes but file ends at byte {len(raw)}"
        )
    magic, n, h, w = struct.unpack_from(">iiii", raw, 0)
    if magic != IMAGE_MAGIC:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0, expected 0x{IMAGE_MAGIC:08x}"
        )
    if n < 0 or h <= 0 or w <= 0:
        raise IdxFormatError(f"{path}: nonsensical dimensions {n}x{h}x{w} in bytes 4..15")
    expected = 16 + n * h * w
    if len(raw) != expected:
        raise IdxFormatError(
            f"{path}: header promises {expected} bytes but file ends at byte {len(raw)}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, h, w)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX label file into uint8 (n,)."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise IdxFormatError(
            f"{path}: truncated label header, need 8 bytes but file ends at byte {len(raw)}"
        )
    magic, n = struct.unpack_from(">ii", raw, 0)
    if magic != LABEL_MAGIC:
        raise IdxFormatError(
            f"{path}: bad magic 0x{magic:08x} at byte 0, expected 0x{LABEL_MAGIC:08x}"
        )
    if len(raw) != 8 + n:
        raise IdxFormatError(
            f"{path}: header promises {8 + n} bytes but file ends at byte {len(raw)}"
        )
    return np.frombuffer(raw, dtype=np.uint8, offset=8).copy()


def load_dataset(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"image count {images.shape[0]} != label count {labels.shape[0]} "
            f"({images_path} vs {labels_path})"
        )
    return images, labels


def write_idx_images(path, images: np.ndarray) -> None:
    """Write uint8 (n, h, w) images in IDX format."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", IMAGE_MAGIC, n, h, w))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", LABEL_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


# ----------------------------------------------------------------------
# resizing


def area_downsample(images: np.ndarray, out_side: int) -> np.ndarray:
    """Box-overlap average of square (n, s, s) images down to (n, out, out).

    Each target pixel averages the exact rectangle of source area it covers,
    so the image mean is preserved to machine precision for any size ratio.
    """
    n, h, w = images.shape
    if h != w:
        raise ValueError(f"expected square images, got {h}x{w}")
    if out_side > h:
        raise ValueError(f"cannot downsample {h}x{h} to larger {out_side}x{out_side}")
    weights = _overlap_weights(h, out_side)
    out = np.einsum("ir,nrc,jc->nij", weights, images, weights)
    return out * (out_side / h) ** 2


def _overlap_weights(src: int, dst: int) -> np.ndarray:
    """(dst, src) matrix of interval-overlap lengths between pixel grids."""
    scale = src / dst
    w = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = i * scale, (i + 1) * scale
        for r in range(int(np.floor(lo)), min(int(np.ceil(hi)), src)):
            w[i, r] = min(hi, r + 1) - max(lo, r)
    return w


def pad_to_canvas(images: np.ndarray, side: int) -> tuple[np.ndarray, int]:
    """Center (n, s, s) images on an (n, side, side) zero canvas; returns offset."""
    n, h, w = images.shape
    if h != w:
        raise ValueError(f"expected square images, got {h}x{w}")
    if side < h:
        raise ValueError(f"canvas {side} is smaller than the {h}x{h} source")
    off = (side - h) // 2
    canvas = np.zeros((n, side, side), dtype=images.dtype)
    canvas[:, off:off + h, off:off + w] = images
    return canvas, off


# ----------------------------------------------------------------------
# preparation


@dataclass
class DatasetSpec:
    images_path: str
    labels_path: str
    class_label: int = 0
    train_count: int = 1000
    test_count: int = 250
    num_data_qubits: int = 8
    resize_policy: str = "downsample_pow2"  # or "pad_crop"
    shuffle_seed: int = 0

    def validate(self) -> list[str]:
        errors = []
        if self.resize_policy not in ("downsample_pow2", "pad_crop"):
            errors.append(f"unknown resize policy {self.resize_policy!r}")
        if self.num_data_qubits < 2 or self.num_data_qubits % 2 != 0:
            errors.append(
                f"num_data_qubits must be even and >= 2 for square images, "
                f"got {self.num_data_qubits}"
            )
        if self.train_count < 1 or self.test_count < 1:
            errors.append("train_count and test_count must be positive")
        if not 0 <= self.class_label <= 255:
            errors.append(f"class_label must be a byte value, got {self.class_label}")
        return errors


@dataclass
class PreparedData:
    """Flattened, register-sized train/test splits plus the evaluation geometry.

    ``canvas_side`` is the generated image's side (2^(D/2)); the evaluation
    view is the ``inner_side`` square at ``inner_offset`` (identical to the
    canvas for downsampled data, the original image for padded data).
    """

    train: np.ndarray  # (train_count, 2^D)
    test: np.ndarray   # (test_count, 2^D)
    canvas_side: int
    inner_side: int
    inner_offset: int
    source_side: int

    @property
    def eval_width(self) -> int:
        return self.inner_side ** 2

    def eval_view(self, flat: np.ndarray) -> np.ndarray:
        """Crop flattened canvas images to the evaluation square."""
        if self.inner_side == self.canvas_side:
            return flat
        n = flat.shape[0]
        grid = flat.reshape(n, self.canvas_side, self.canvas_side)
        o = self.inner_offset
        return grid[:, o:o + self.inner_side, o:o + self.inner_side].reshape(n, -1)


def prepare(spec: DatasetSpec) -> PreparedData:
    """Load the IDX pair named by ``spec`` and run ``prepare_arrays``."""
    images, labels = load_dataset(spec.images_path, spec.labels_path)
    return prepare_arrays(images, labels, spec)


def prepare_arrays(images: np.ndarray, labels: np.ndarray, spec: DatasetSpec) -> PreparedData:
    """Select one class, split, and resize to the register size.

    Selection: seeded shuffle of the class's indices, then the first
    train_count + test_count of them; the first train_count become the
    training split. The shuffle seed is part of the spec, so a run is
    reproducible end to end.
    """
    errors = spec.validate()
    if errors:
        raise ValueError("; ".join(errors))
    if images.shape[0] != labels.shape[0]:
        raise ValueError(f"got {images.shape[0]} images but {labels.shape[0]} labels")

    idx = np.nonzero(labels == spec.class_label)[0]
    need = spec.train_count + spec.test_count
    if idx.size < need:
        raise ValueError(
            f"class {spec.class_label} has {idx.size} images, need {need} "
            f"({spec.train_count} train + {spec.test_count} test)"
        )
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.shuffle_seed)))
    idx = rng.permutation(idx)[:need]
    chosen = images[idx]
    if chosen.dtype == np.uint8:
        chosen = chosen.astype(np.float64) / 255.0
    else:
        chosen = np.asarray(chosen, dtype=np.float64)
        if chosen.size and (chosen.min() < 0.0 or chosen.max() > 1.0):
            raise ValueError(
                f"float images must lie in [0, 1], got range "
                f"[{chosen.min():.4g}, {chosen.max():.4g}]; raw byte images "
                f"should stay uint8"
            )

    source_side = chosen.shape[1]
    side = 2 ** (spec.num_data_qubits // 2)
    if spec.resize_policy == "downsample_pow2":
        resized = area_downsample(chosen, side)
        inner_side, inner_offset = side, 0
    else:
        resized, inner_offset = pad_to_canvas(chosen, side)
        inner_side = source_side

    flat = resized.reshape(need, -1)
    return PreparedData(
        train=flat[: spec.train_count],
        test=flat[spec.train_count:],
        canvas_side=side,
        inner_side=inner_side,
        inner_offset=inner_offset,
        source_side=source_side,
    )


def batches(data: np.ndarray, batch_size: int, rng: np.random.Generator,
            drop_last: bool = False):
    """Yield shuffled minibatches covering ``data`` once."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = rng.permutation(data.shape[0])
    for start in range(0, data.shape[0], batch_size):
        chunk = order[start:start + batch_size]
        if drop_last and chunk.size < batch_size:
            return
        yield data[chunk]
