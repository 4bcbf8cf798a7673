"""Crop augmentation: random 44x44 training crops and the deterministic
test-time ten-crop (four corners, center, and the horizontal reflection of
each), plus prediction averaging."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .images import hflip

SOURCE_SIZE = 48
CROP_SIZE = 44
MAX_OFFSET = SOURCE_SIZE - CROP_SIZE  # 4

# deterministic ten-crop offset order: UL, LL, UR, LR, center
TEN_CROP_OFFSETS = ((0, 0), (MAX_OFFSET, 0), (0, MAX_OFFSET),
                    (MAX_OFFSET, MAX_OFFSET), (MAX_OFFSET // 2, MAX_OFFSET // 2))


def _check_source(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.shape != (SOURCE_SIZE, SOURCE_SIZE):
        raise ShapeError(
            f"crop source must be {SOURCE_SIZE}x{SOURCE_SIZE}, got {image.shape}"
        )
    return image


def crop_at(image: np.ndarray, row: int, col: int) -> np.ndarray:
    """Pixel-exact 44x44 subwindow with top-left corner (row, col)."""
    image = _check_source(image)
    if not (0 <= row <= MAX_OFFSET and 0 <= col <= MAX_OFFSET):
        raise ShapeError(f"crop offset ({row},{col}) outside [0,{MAX_OFFSET}]")
    return image[row:row + CROP_SIZE, col:col + CROP_SIZE].copy()


def random_crops(image: np.ndarray, count: int,
                 gen: np.random.Generator) -> list[np.ndarray]:
    """`count` crops with offsets drawn uniformly from {0..4}^2."""
    image = _check_source(image)
    offsets = gen.integers(0, MAX_OFFSET + 1, size=(count, 2))
    return [crop_at(image, int(r), int(c)) for r, c in offsets]


def ten_crop(image: np.ndarray) -> list[np.ndarray]:
    """Corner and center crops followed by the horizontal flip of each."""
    image = _check_source(image)
    crops = [crop_at(image, r, c) for r, c in TEN_CROP_OFFSETS]
    return crops + [hflip(c) for c in crops]


def average_predictions(prob_vectors) -> np.ndarray:
    """Arithmetic mean of equal-length probability vectors, in list order."""
    vectors = [np.asarray(v, dtype=np.float64) for v in prob_vectors]
    if not vectors:
        raise ShapeError("cannot average an empty list of predictions")
    length = vectors[0].shape
    if any(v.shape != length for v in vectors):
        raise ShapeError("prediction vectors have mismatched lengths")
    out = np.zeros_like(vectors[0])
    for v in vectors:
        out += v
    return out / len(vectors)
