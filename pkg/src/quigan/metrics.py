"""Distribution metrics on pixel features, plus PGM/PNG export.

The Inception-style embedding of the large-scale literature is pointless for
16x16 digit batches, so distances run on a cheap hand-rolled feature map:
4x4 block means plus each image's global mean and spread. ``pixel_mmd`` and
``pixel_frechet`` are the two headline numbers; both are deterministic
functions of their inputs.

Export writes 8-bit grayscale PGM (P5) or PNG; quantization is
round-half-up, so re-reading an exported image stays within 1/510 of the
source intensity.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "IntensityStats",
    "intensity_stats",
    "feature_map",
    "mmd_poly",
    "frechet_gaussian",
    "frechet_from_moments",
    "pixel_mmd",
    "pixel_frechet",
    "save_pgm",
    "load_pgm",
    "save_png",
    "montage",
    "export_images",
    "write_metrics_csv",
]


@dataclass
class IntensityStats:
    """Per-image brightness/contrast on the 0..255 scale, with batch aggregates."""

    brightness: np.ndarray  # per-image mean * 255
    contrast: np.ndarray    # per-image population std * 255
    brightness_mean: float
    brightness_std: float
    contrast_mean: float
    contrast_std: float


def intensity_stats(images) -> IntensityStats:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2:
        raise ValueError(f"expected flattened (B, N) images, got shape {images.shape}")
    brightness = images.mean(axis=1) * 255.0
    contrast = images.std(axis=1) * 255.0
    return IntensityStats(
        brightness=brightness,
        contrast=contrast,
        brightness_mean=float(brightness.mean()),
        brightness_std=float(brightness.std()),
        contrast_mean=float(contrast.mean()),
        contrast_std=float(contrast.std()),
    )


# ----------------------------------------------------------------------
# features and distances


def _square_side(n_pixels: int) -> int:
    side = int(round(np.sqrt(n_pixels)))
    if side * side != n_pixels:
        raise ValueError(f"{n_pixels} pixels is not a square image")
    return side


def feature_map(images, block: int = 4) -> np.ndarray:
    """Per-image features: block means over ``block x block`` tiles, then the
    image's global mean and population std. 16x16 -> 18 dims, 28x28 -> 51."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2:
        raise ValueError(f"expected flattened (B, N) images, got shape {images.shape}")
    side = _square_side(images.shape[1])
    if side % block != 0:
        raise ValueError(f"side {side} is not divisible by block {block}")
    b = images.shape[0]
    tiles = images.reshape(b, side // block, block, side // block, block)
    blocks = tiles.mean(axis=(2, 4)).reshape(b, -1)
    return np.column_stack([blocks, images.mean(axis=1), images.std(axis=1)])


def mmd_poly(x, y, degree: int = 3, coef: float = 1.0, scale: float | None = None) -> float:
    """Unbiased squared MMD with the polynomial kernel (s<u,v> + c)^d.

    ``scale`` defaults to 1/dim. Diagonal terms are excluded, so the value is
    an unbiased estimate and can go slightly negative for matching
    distributions.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"need (m, d) and (n, d) feature arrays, got {x.shape}, {y.shape}")
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("unbiased MMD needs at least 2 samples per side")
    s = 1.0 / x.shape[1] if scale is None else float(scale)

    k_xx = (s * (x @ x.T) + coef) ** degree
    k_yy = (s * (y @ y.T) + coef) ** degree
    k_xy = (s * (x @ y.T) + coef) ** degree
    term_x = (k_xx.sum() - np.trace(k_xx)) / (m * (m - 1))
    term_y = (k_yy.sum() - np.trace(k_yy)) / (n * (n - 1))
    return float(term_x + term_y - 2.0 * k_xy.mean())


def _sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    """Frechet distance between two Gaussians given their moments."""
    mu_a, mu_b = np.asarray(mu_a, float), np.asarray(mu_b, float)
    cov_a, cov_b = np.asarray(cov_a, float), np.asarray(cov_b, float)
    root_a = _sqrtm_psd(cov_a)
    inner = root_a @ cov_b @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    trace_sqrt = np.sqrt(np.clip(vals, 0.0, None)).sum()
    diff = mu_a - mu_b
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * trace_sqrt)


def frechet_gaussian(x, y, eps: float = 1e-6) -> float:
    """Gaussian-fit Frechet distance between two sample sets.

    Covariances are regularized with eps * I; the matrix square root goes
    through symmetric eigendecompositions, so the result is deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"need (m, d) and (n, d) feature arrays, got {x.shape}, {y.shape}")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("covariance estimation needs at least 2 samples per side")
    d = x.shape[1]
    reg = eps * np.eye(d)
    return frechet_from_moments(
        x.mean(axis=0), np.cov(x, rowvar=False) + reg,
        y.mean(axis=0), np.cov(y, rowvar=False) + reg,
    )


def pixel_mmd(images_a, images_b, block: int = 4) -> float:
    """Headline MMD: polynomial-kernel MMD on the block-feature embedding."""
    return mmd_poly(feature_map(images_a, block), feature_map(images_b, block))


def pixel_frechet(images_a, images_b, block: int = 4) -> float:
    """Headline Frechet distance on the block-feature embedding."""
    return frechet_gaussian(feature_map(images_a, block), feature_map(images_b, block))


# ----------------------------------------------------------------------
# image export


def quantize(image: np.ndarray) -> np.ndarray:
    """[0, 1] floats to uint8 by round-half-up."""
    return np.clip(np.floor(np.asarray(image, np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


def save_pgm(path, image: np.ndarray) -> None:
    """Write one 2-D image as binary PGM (P5, maxval 255)."""
    img = quantize(_as_image(image))
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def load_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields = raw.split(maxsplit=4)
    if len(fields) < 5 or fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM file")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = fields[4][: h * w]
    if len(data) != h * w:
        raise ValueError(f"{path}: expected {h * w} pixel bytes, got {len(data)}")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w) / 255.0


def save_png(path, image: np.ndarray) -> None:
    """Write one 2-D image as an 8-bit grayscale PNG (self-contained encoder)."""
    img = quantize(_as_image(image))
    h, w = img.shape
    raw = b"".join(b"\x00" + row.tobytes() for row in img)  # filter 0 per scanline

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body))

    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)  # 8-bit grayscale
    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", header))
        f.write(chunk(b"IDAT", zlib.compress(raw, 9)))
        f.write(chunk(b"IEND", b""))


def _as_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 1:
        side = _square_side(image.shape[0])
        image = image.reshape(side, side)
    if image.ndim != 2:
        raise ValueError(f"expected a single 2-D image, got shape {image.shape}")
    return image


def montage(images, cols: int | None = None) -> np.ndarray:
    """Tile a batch into one 2-D grid image (row-major, zero-filled remainder)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        side = _square_side(images.shape[1])
        images = images.reshape(-1, side, side)
    n, h, w = images.shape
    cols = cols or int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    canvas = np.zeros((rows * h, cols * w))
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        canvas[r * h:(r + 1) * h, c * w:(c + 1) * w] = img
    return canvas


def export_images(images, out_dir, prefix: str = "img", fmt: str = "pgm",
                  montage_name: str | None = None) -> list[Path]:
    """Write each image in the batch, plus an optional montage; returns paths."""
    if fmt not in ("pgm", "png"):
        raise ValueError(f"unsupported format {fmt!r}")
    save = save_pgm if fmt == "pgm" else save_png
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = np.asarray(images, dtype=np.float64)
    paths = []
    for i, img in enumerate(images):
        p = out_dir / f"{prefix}_{i:04d}.{fmt}"
        save(p, img)
        paths.append(p)
    if montage_name is not None:
        p = out_dir / f"{montage_name}.{fmt}"
        save(p, montage(images))
        paths.append(p)
    return paths


def write_metrics_csv(path, rows: list[dict]) -> None:
    """Write metric rows; columns follow the first row's key order."""
    if not rows:
        raise ValueError("no metric rows to write")
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
