"""Synthetic FER2013-format dataset with seven learnable classes.

Each class is a Gaussian bump at a class-specific row on the center column,
over a noisy background. Class difficulty is driven by two mode-invariant
factors: class frequency (rare classes are harder) and positional jitter
(classes with loose positioning are harder). Both survive the saliency
transform, so face-mode and saliency-mode per-class recalls co-vary. The
bumps sit on the mirror axis so ten-crop reflections do not swap classes.

Used as a stand-in when the real FER2013 CSV is not available locally.
"""

import io
import os
from pathlib import Path

import numpy as np

CLASS_ROWS = [6, 12, 18, 24, 30, 36, 42]
CLASS_WEIGHTS = np.array([4.0, 1.0, 3.0, 1.2, 2.5, 1.6, 3.5])
CLASS_JITTER = [1, 6, 2, 6, 3, 5, 1]
CENTER_COL = 24
CONTRAST = 0.55
NOISE_SIGMA = 0.22
BUMP_SIGMA = 3.0


def make_image(label, gen):
    rr, cc = np.mgrid[0:48, 0:48]
    jit = CLASS_JITTER[label]
    r0 = CLASS_ROWS[label] + gen.integers(-jit, jit + 1)
    c0 = CENTER_COL + gen.integers(-jit, jit + 1)
    bump = np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / (2 * BUMP_SIGMA ** 2))
    img = 0.3 + CONTRAST * bump + gen.normal(0, NOISE_SIGMA, (48, 48))
    return np.clip(img, 0.0, 1.0)


def synthetic_fer_csv(n_train, n_test, seed=0):
    """CSV text in FER2013 format: n_train Training + n_test PublicTest rows."""
    gen = np.random.default_rng(seed)
    prior = CLASS_WEIGHTS / CLASS_WEIGHTS.sum()
    buf = io.StringIO()
    buf.write("emotion,pixels,Usage\n")
    for count, usage in ((n_train, "Training"), (n_test, "PublicTest")):
        for _ in range(count):
            label = int(gen.choice(7, p=prior))
            img = make_image(label, gen)
            pixels = " ".join(str(v) for v in
                              np.rint(img * 255).astype(int).ravel())
            buf.write(f"{label},{pixels},{usage}\n")
    return buf.getvalue()


def real_fer2013_path():
    """Path to the official FER2013 CSV if available locally, else None."""
    for cand in (os.environ.get("SALEX_FER2013"),
                 Path(__file__).resolve().parent.parent / "data" / "fer2013.csv"):
        if cand and Path(cand).is_file():
            return Path(cand)
    return None
