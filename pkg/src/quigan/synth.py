"""Synthetic handwritten-zero corpus for demos and smoke tests.

Renders anti-aliased elliptical rings with jittered center, radii, tilt,
stroke width, and ink level, which lands close enough to handwritten zeros
to exercise the full pipeline when the real scans are not on disk. Images
are 8-bit grayscale in the standard IDX container, so every loader-facing
code path (magic numbers, counts, class filtering, resizing) runs unchanged.

A sprinkling of non-target images (filled discs and bars under other
labels) keeps class selection honest.
"""

from __future__ import annotations

import numpy as np

from .data import write_idx_images, write_idx_labels

__all__ = ["render_zeros", "render_distractors", "make_corpus"]


def render_zeros(n: int, side: int = 28, seed: int = 0) -> np.ndarray:
    """Draw ``n`` ring digits as uint8 images of shape (n, side, side)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
    out = np.empty((n, side, side), dtype=np.uint8)
    for i in range(n):
        cx = side / 2 + rng.uniform(-1.5, 1.5)
        cy = side / 2 + rng.uniform(-1.5, 1.5)
        rx = rng.uniform(0.26, 0.34) * side
        ry = rng.uniform(0.30, 0.38) * side
        tilt = rng.uniform(-0.35, 0.35)
        half_width = rng.uniform(0.075, 0.125) * side
        ink = rng.uniform(0.75, 1.0)

        dx, dy = xx - cx, yy - cy
        u = (dx * np.cos(tilt) + dy * np.sin(tilt)) / rx
        v = (-dx * np.sin(tilt) + dy * np.cos(tilt)) / ry
        ring_dist = np.abs(np.hypot(u, v) - 1.0) * min(rx, ry)
        img = ink * np.clip(1.0 - ring_dist / half_width, 0.0, 1.0) ** 0.8
        img = np.clip(img + rng.normal(0.0, 0.015, img.shape), 0.0, 1.0)
        out[i] = np.round(img * 255.0).astype(np.uint8)
    return out


def render_distractors(n: int, side: int = 28, seed: int = 1) -> np.ndarray:
    """Non-ring shapes (discs and bars) to file under non-target labels."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
    out = np.empty((n, side, side), dtype=np.uint8)
    for i in range(n):
        cx = side / 2 + rng.uniform(-2, 2)
        cy = side / 2 + rng.uniform(-2, 2)
        if rng.uniform() < 0.5:  # filled disc
            r = rng.uniform(0.15, 0.3) * side
            dist = np.hypot(xx - cx, yy - cy) - r
        else:  # vertical bar
            w = rng.uniform(0.06, 0.12) * side
            dist = np.abs(xx - cx) - w
        img = rng.uniform(0.7, 1.0) * np.clip(-dist, 0.0, 1.0)
        out[i] = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    return out


def make_corpus(images_path, labels_path, n_target: int = 1400, n_other: int = 100,
                target_label: int = 0, side: int = 28, seed: int = 0) -> None:
    """Write a shuffled IDX image/label pair with ``n_target`` ring digits."""
    rng = np.random.default_rng(seed)
    images = np.concatenate([
        render_zeros(n_target, side, seed),
        render_distractors(n_other, side, seed + 1),
    ])
    labels = np.concatenate([
        np.full(n_target, target_label, dtype=np.uint8),
        rng.choice([d for d in range(10) if d != target_label],
                   size=n_other).astype(np.uint8),
    ])
    order = rng.permutation(len(labels))
    write_idx_images(images_path, images[order])
    write_idx_labels(labels_path, labels[order])


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(
        description="Write a synthetic ring-digit corpus as an IDX pair.")
    parser.add_argument("--images", required=True)
    parser.add_argument("--labels", required=True)
    parser.add_argument("--count", type=int, default=1400)
    parser.add_argument("--other", type=int, default=100)
    parser.add_argument("--side", type=int, default=28)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    make_corpus(args.images, args.labels, args.count, args.other,
                side=args.side, seed=args.seed)
    print(f"wrote {args.count + args.other} images to {args.images}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
