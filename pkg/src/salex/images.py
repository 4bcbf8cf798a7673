"""Grayscale image utilities: PGM I/O, bilinear resize, flips, overlays.

Images are 2-D float64 arrays with values in [0,1], row-major. The on-disk
format is binary PGM (P5) with the exact header "P5\\n<w> <h>\\n255\\n"; a pixel
byte v maps to the real v/255. PNG reading is an optional extra handled
through Pillow.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, ShapeError


def validate_gray(img: np.ndarray, what: str = "image") -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ShapeError(f"{what} must be a nonempty 2-D array, got shape {img.shape}")
    if img.min() < 0 or img.max() > 1:
        raise ShapeError(f"{what} values must lie in [0,1]")
    return img


# ---------------------------------------------------------------------------
# PGM (binary P5)
# ---------------------------------------------------------------------------

def write_pgm(path, img: np.ndarray) -> None:
    img = validate_gray(img)
    h, w = img.shape
    data = np.rint(img * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    tokens = []
    pos = 0
    # header: three whitespace-separated tokens after the magic, '#' comments allowed
    while len(tokens) < 4 and pos < len(raw):
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM (P5) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise DataError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise DataError(f"{path}: unsupported PGM maxval {maxval} (only 255)")
    pos += 1  # single whitespace byte after maxval
    pixels = raw[pos:pos + w * h]
    if len(pixels) != w * h:
        raise DataError(f"{path}: PGM payload has {len(pixels)} bytes, expected {w * h}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w) / 255.0


def read_image(path) -> np.ndarray:
    """Read a grayscale image as floats in [0,1].

    PGM is the native format; PNG (or anything Pillow decodes) is accepted as
    an optional convenience and converted to 8-bit grayscale first.
    """
    spath = str(path)
    if spath.lower().endswith(".pgm"):
        return read_pgm(path)
    try:
        from PIL import Image
        with Image.open(path) as im:
            arr = np.asarray(im.convert("L"), dtype=np.float64)
        return arr / 255.0
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"{path}: cannot decode image ({exc})") from None


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def resize_bilinear(img: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resampling with align_corners=False semantics.

    Source coordinate for destination index d is (d + 0.5) * size/new_size
    - 0.5, clamped to the valid range; an identity resize is bit-identical.
    """
    img = validate_gray(img)
    if new_w < 1 or new_h < 1:
        raise ShapeError(f"target dims must be positive, got {new_w}x{new_h}")
    h, w = img.shape
    if (new_h, new_w) == (h, w):
        return img.copy()

    def axis_coords(n_src, n_dst):
        src = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        src = np.clip(src, 0, n_src - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = src - lo
        return lo, hi, frac

    r0, r1, rf = axis_coords(h, new_h)
    c0, c1, cf = axis_coords(w, new_w)
    top = img[np.ix_(r0, c0)] * (1 - cf) + img[np.ix_(r0, c1)] * cf
    bot = img[np.ix_(r1, c0)] * (1 - cf) + img[np.ix_(r1, c1)] * cf
    return top * (1 - rf[:, None]) + bot * rf[:, None]


def hflip(img: np.ndarray) -> np.ndarray:
    """Mirror the image horizontally (columns reversed)."""
    return np.asarray(img)[:, ::-1].copy()


def minmax_normalize(img: np.ndarray) -> np.ndarray:
    """Scale to [0,1] by min/max; a constant input maps to all zeros."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi <= lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def overlay(face: np.ndarray, saliency: np.ndarray, alpha: float) -> np.ndarray:
    """Blend (1-alpha)*face + alpha*saliency, clamped to [0,1]."""
    face = validate_gray(face, "face")
    saliency = validate_gray(saliency, "saliency map")
    if face.shape != saliency.shape:
        raise ShapeError(
            f"face {face.shape} and saliency map {saliency.shape} dims differ"
        )
    if not (0 <= alpha <= 1):
        raise ShapeError(f"alpha must be in [0,1], got {alpha}")
    return np.clip((1 - alpha) * face + alpha * saliency, 0.0, 1.0)
