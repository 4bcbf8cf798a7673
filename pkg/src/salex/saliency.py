"""Saliency map generation.

The built-in backend is the classical spectral-residual algorithm: the
non-smooth residual of the log amplitude spectrum, recombined with the
original phase, localizes visually distinctive regions. It is a
general-purpose predictor with no knowledge of faces. Maps produced by an
external predictor can be ingested from image files instead.

The 2-D FFT here is a from-scratch iterative radix-2 transform (forward
unnormalized, inverse scaled by 1/(H*W)); the tests pin it against a direct
DFT summation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ShapeError
from .images import minmax_normalize, read_image, resize_bilinear, validate_gray


# ---------------------------------------------------------------------------
# radix-2 FFT
# ---------------------------------------------------------------------------

def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=int)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_last_axis(a: np.ndarray, inverse: bool) -> np.ndarray:
    n = a.shape[-1]
    out = a[..., _bit_reverse_indices(n)].astype(np.complex128)
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(*out.shape[:-1], n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        out = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape)
        size *= 2
    return out


def fft2d(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """2-D DFT of a complex array with power-of-two dims.

    Forward is unnormalized; inverse divides by H*W so fft2d(fft2d(x),
    inverse=True) == x.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise ShapeError(f"fft2d expects a 2-D array, got shape {a.shape}")
    h, w = a.shape
    for n in (h, w):
        if n < 1 or n & (n - 1):
            raise ShapeError(f"fft2d dims must be powers of two, got {h}x{w}")
    out = _fft_last_axis(a, inverse)
    out = _fft_last_axis(out.swapaxes(0, 1), inverse).swapaxes(0, 1)
    if inverse:
        out = out / (h * w)
    return out


# ---------------------------------------------------------------------------
# spectral residual
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralParams:
    working_size: int = 64          # power of two >= 8
    smoothing_kernel: int = 3       # box filter width for the log spectrum
    blur_sigma: float | None = None  # defaults to working_size / 16

    def __post_init__(self):
        n = self.working_size
        if n < 8 or n & (n - 1):
            raise ShapeError(f"working_size must be a power of two >= 8, got {n}")

    @property
    def sigma(self) -> float:
        return self.blur_sigma if self.blur_sigma is not None else self.working_size / 16


def _box_filter(a: np.ndarray, size: int) -> np.ndarray:
    """Mean filter with clamped-edge padding."""
    r = size // 2
    padded = np.pad(a, r, mode="edge")
    out = np.zeros_like(a)
    for i in range(size):
        for j in range(size):
            out += padded[i:i + a.shape[0], j:j + a.shape[1]]
    return out / (size * size)


def _gaussian_blur(a: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian with clamped-edge padding."""
    if sigma <= 0:
        return a
    r = max(1, int(np.ceil(3 * sigma)))
    x = np.arange(-r, r + 1)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(a, ((r, r), (0, 0)), mode="edge")
    rows = sum(kernel[i] * padded[i:i + a.shape[0], :] for i in range(2 * r + 1))
    padded = np.pad(rows, ((0, 0), (r, r)), mode="edge")
    return sum(kernel[j] * padded[:, j:j + a.shape[1]] for j in range(2 * r + 1))


def spectral_residual(image: np.ndarray,
                      params: SpectralParams = SpectralParams()) -> np.ndarray:
    """Saliency map of a grayscale image, same dims as the input, in [0,1].

    Pipeline: resize to working_size^2, FFT, subtract the box-smoothed log
    amplitude from the log amplitude, recombine the residual with the
    original phase, inverse FFT, squared magnitude, Gaussian blur, min-max
    normalize, resize back.
    """
    image = validate_gray(image)
    if image.max() == image.min():
        # no structure: the residual would be pure numerical noise
        return np.zeros_like(image)
    n = params.working_size
    small = resize_bilinear(image, n, n)
    spectrum = fft2d(small.astype(np.complex128))
    amplitude = np.abs(spectrum)
    log_amp = np.log(amplitude + 1e-12)
    residual = log_amp - _box_filter(log_amp, params.smoothing_kernel)
    phase = np.where(amplitude > 0, spectrum / np.maximum(amplitude, 1e-300), 1.0)
    recombined = np.exp(residual) * phase
    sal = np.abs(fft2d(recombined, inverse=True)) ** 2
    sal = _gaussian_blur(sal, params.sigma)
    sal = minmax_normalize(sal)
    h, w = image.shape
    # renormalize after resampling so the [0,1] endpoint contract holds exactly
    return minmax_normalize(resize_bilinear(sal, w, h))


def ingest_external_map(source, target_dims: tuple[int, int]) -> np.ndarray:
    """Load an externally produced saliency map file.

    `target_dims` is (width, height). The map is decoded as grayscale,
    bilinearly resized, and min-max normalized.
    """
    w, h = target_dims
    try:
        raw = read_image(source)
    except DataError:
        raise
    except OSError as exc:
        raise DataError(f"{source}: cannot read saliency map ({exc})") from None
    return minmax_normalize(resize_bilinear(raw, w, h))
