"""Deterministic synthetic test images (diagonal stripes with rectangular holes)."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .imageio import GrayImage, to_bytes, write_pgm

#: image size and stripe profile of the reference fixture
SHAPE = (96, 96)
STRIPE_AMPLITUDE = 40.0
STRIPE_SHARPNESS = 1.5
STRIPE_PERIOD = 32.0

#: the two hole sizes (rows, cols)
HOLES = {"10x10": (10, 10), "64x12": (64, 12)}


def stripe_image(shape=SHAPE, amplitude=STRIPE_AMPLITUDE, sharpness=STRIPE_SHARPNESS,
                 period=STRIPE_PERIOD) -> GrayImage:
    """Smoothed square wave along the diagonal, quantized to 8-bit levels.

    ``128 + A tanh(s sin(2 pi (x + y) / P)) / tanh(s)``
    """
    x, y = np.mgrid[0:shape[0], 0:shape[1]]
    phase = 2.0 * np.pi * (x + y) / period
    values = 128.0 + amplitude * np.tanh(sharpness * np.sin(phase)) / np.tanh(sharpness)
    return GrayImage(to_bytes(values).astype(float))


def centered_mask(shape, hole) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    r0 = (shape[0] - hole[0]) // 2
    c0 = (shape[1] - hole[1]) // 2
    m[r0:r0 + hole[0], c0:c0 + hole[1]] = True
    return m


def damage(image: GrayImage, mask: np.ndarray, rng: np.random.Generator) -> GrayImage:
    """Overwrite the masked pixels with uniform noise."""
    px = image.pixels.copy()
    px[mask] = rng.integers(0, 256, size=int(mask.sum()))
    return GrayImage(px)


def make_fixtures(seed: int, outdir: str | os.PathLike) -> dict[str, Path]:
    """Write the stripe original, its masks and damaged copies as PGM files.

    Returns a mapping from a short name to the written path.  The noise in
    the damaged copies is the only seed-dependent content.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    original = stripe_image()
    paths = {"original": out / "stripes.pgm"}
    write_pgm(original, paths["original"])
    for name, hole in HOLES.items():
        mask = centered_mask(original.pixels.shape, hole)
        paths[f"mask_{name}"] = out / f"mask_{name}.pgm"
        write_pgm(GrayImage(np.where(mask, 255.0, 0.0)), paths[f"mask_{name}"])
        paths[f"damaged_{name}"] = out / f"stripes_damaged_{name}.pgm"
        write_pgm(damage(original, mask, rng), paths[f"damaged_{name}"])
    return paths
