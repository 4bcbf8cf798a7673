"""Dataset loading: FER2013 CSV and labeled image directories, plus splits.

FER2013 rows carry `emotion,pixels,Usage` where pixels is 2304
space-separated bytes (48x48 row-major) and Usage routes the row into the
Training / PublicTest / PrivateTest partition. Labeled directories hold one
subdirectory per class name with grayscale images inside; images are resized
to 48x48 on load. Every malformed row or file raises a DataError naming its
line or path; nothing is dropped silently.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .images import read_image, resize_bilinear

log = logging.getLogger(__name__)

IMAGE_SIZE = 48

FER2013_CLASSES = ("angry", "disgust", "fear", "happy", "sad", "surprise", "neutral")
CKPLUS_CLASSES = ("angry", "disgust", "fear", "happy", "sad", "surprise", "contempt")

FER_USAGE_TO_PARTITION = {
    "Training": "Training",
    "PublicTest": "PublicTest",
    "PrivateTest": "PrivateTest",
}


@dataclass
class Sample:
    image: np.ndarray  # 48x48 float64 in [0,1]
    label: int
    origin: str


@dataclass
class DatasetPartition:
    name: str
    taxonomy: tuple[str, ...]
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)


def parse_fer2013_csv(source) -> dict[str, DatasetPartition]:
    """Parse a FER2013-format CSV into its three partitions.

    `source` is a path or a text stream. Raises DataError naming the line for
    any malformed row.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", newline="") as f:
            return parse_fer2013_csv(f)
    parts = {
        name: DatasetPartition(name, FER2013_CLASSES)
        for name in ("Training", "PublicTest", "PrivateTest")
    }
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["emotion", "pixels", "Usage"]:
        raise DataError(f"line 1: expected header 'emotion,pixels,Usage', got {header}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"line {lineno}: expected 3 columns, got {len(row)}")
        emotion_s, pixels_s, usage = row[0].strip(), row[1], row[2].strip()
        try:
            label = int(emotion_s)
        except ValueError:
            raise DataError(f"line {lineno}: non-integer emotion {emotion_s!r}") from None
        if not 0 <= label <= 6:
            raise DataError(f"line {lineno}: emotion {label} outside 0..6")
        if usage not in FER_USAGE_TO_PARTITION:
            raise DataError(f"line {lineno}: unknown Usage {usage!r}")
        tokens = pixels_s.split()
        if len(tokens) != IMAGE_SIZE * IMAGE_SIZE:
            raise DataError(
                f"line {lineno}: expected {IMAGE_SIZE * IMAGE_SIZE} pixels, got {len(tokens)}"
            )
        try:
            values = np.array([int(t) for t in tokens], dtype=np.int64)
        except ValueError:
            raise DataError(f"line {lineno}: non-integer pixel value") from None
        if values.min() < 0 or values.max() > 255:
            raise DataError(f"line {lineno}: pixel value outside 0..255")
        image = values.reshape(IMAGE_SIZE, IMAGE_SIZE) / 255.0
        part = parts[FER_USAGE_TO_PARTITION[usage]]
        part.samples.append(Sample(image, label, f"{part.name}:line{lineno}"))
    return parts


def load_labeled_dir(root, taxonomy: tuple[str, ...]) -> DatasetPartition:
    """Load `<root>/<class_name>/*` as one partition, resizing to 48x48.

    Unknown subdirectory names and undecodable files raise DataError; an
    empty class directory only logs a warning.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    partition = DatasetPartition(root.name, taxonomy)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    for sub in subdirs:
        if sub.name not in taxonomy:
            raise DataError(
                f"{sub}: directory name is not a class in {list(taxonomy)}"
            )
    for label, cls in enumerate(taxonomy):
        cls_dir = root / cls
        if not cls_dir.is_dir():
            continue
        files = sorted(p for p in cls_dir.iterdir() if p.is_file())
        if not files:
            log.warning("class directory %s is empty", cls_dir)
        for path in files:
            img = read_image(path)
            if img.shape != (IMAGE_SIZE, IMAGE_SIZE):
                img = resize_bilinear(img, IMAGE_SIZE, IMAGE_SIZE)
            partition.samples.append(Sample(img, label, f"{cls}/{path.name}"))
    return partition


def kfold_split(n_samples: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle then near-even contiguous chunks.

    Folds are disjoint, cover all indices, and differ in size by at most 1.
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n_samples:
        raise DataError(f"cannot split {n_samples} samples into {k} folds")
    gen = np.random.Generator(np.random.PCG64(seed))
    order = gen.permutation(n_samples)
    base, extra = divmod(n_samples, k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(np.sort(order[pos:pos + size]))
        pos += size
    return folds


def class_histogram(partition: DatasetPartition) -> np.ndarray:
    """Per-class sample counts, length len(taxonomy)."""
    counts = np.zeros(len(partition.taxonomy), dtype=np.int64)
    for s in partition.samples:
        counts[s.label] += 1
    return counts
