"""SGD training loop and ten-crop evaluation.

Training follows the cropping protocol: each epoch draws random 44x44 crops
of the 48x48 samples, shuffles them into mini-batches, and applies SGD with
momentum to the cross-entropy loss with dropout active. A fixed seed gives a
bit-identical run (single-threaded). Evaluation averages the ten deterministic
test crops per sample and accumulates a confusion matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from .augment import CROP_SIZE, average_predictions, crop_at, ten_crop, MAX_OFFSET
from .dataset import DatasetPartition
from .errors import DataError, NumericError, ShapeError
from .metrics import ConfusionMatrix, EvalReport
from .rng import RngState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 20
    batch_size: int = 128
    momentum: float = 0.9
    dropout_rate: float = 0.5
    seed: int = 0
    input_mode: str = "faces"       # faces | saliency
    crops_per_sample: int = 1       # random crops drawn per sample per epoch
    lr_decay_every: int = 0         # 0 disables step decay
    lr_decay_factor: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ShapeError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1 or self.batch_size < 1 or self.crops_per_sample < 1:
            raise ShapeError("epochs, batch_size and crops_per_sample must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ShapeError(f"momentum must be in [0,1), got {self.momentum}")


# full-scale training presets
FER2013_PRESET = TrainConfig(learning_rate=0.01, epochs=250, crops_per_sample=10)
CKPLUS_PRESET = TrainConfig(learning_rate=0.01, epochs=60, crops_per_sample=10)


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    train_acc: float


def sgd_step(params: mdl.Params, grads, velocity, lr: float,
             momentum: float) -> None:
    """In-place momentum SGD: v <- momentum*v - lr*g; p <- p + v."""
    for (w, b), g, v in zip(params, grads, velocity):
        gw, gb = g
        vw, vb = v
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError(
                f"gradient shape {gw.shape}/{gb.shape} does not match "
                f"parameter shape {w.shape}/{b.shape}"
            )
        vw *= momentum
        vw -= lr * gw.astype(vw.dtype)
        w += vw
        vb *= momentum
        vb -= lr * gb.astype(vb.dtype)
        b += vb


def _crop_batch(samples, indices, offsets) -> tuple[np.ndarray, np.ndarray]:
    xs = np.empty((len(indices), 1, CROP_SIZE, CROP_SIZE), dtype=np.float32)
    ys = np.empty(len(indices), dtype=np.int64)
    for out_i, (idx, (r, c)) in enumerate(zip(indices, offsets)):
        s = samples[idx]
        xs[out_i, 0] = crop_at(s.image, r, c)
        ys[out_i] = s.label
    return xs, ys


def train(spec: mdl.NetworkSpec, partition: DatasetPartition,
          config: TrainConfig,
          progress: bool = False) -> tuple[mdl.Checkpoint, list[EpochLog]]:
    """Train from scratch on a partition; returns checkpoint and epoch log."""
    if not partition.samples:
        raise DataError("training partition is empty")
    rng = RngState(config.seed)
    params = mdl.init_params(spec, rng.child("init"))
    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    shuffle_gen = rng.child("shuffle").generator
    crop_gen = rng.child("crops").generator
    dropout_rng = rng.child("dropout")

    n = len(partition.samples)
    logs: list[EpochLog] = []
    lr = config.learning_rate
    last_loss = float("nan")
    for epoch in range(1, config.epochs + 1):
        if config.lr_decay_every and epoch > 1 \
                and (epoch - 1) % config.lr_decay_every == 0:
            lr *= config.lr_decay_factor
        # one entry per (sample, crop); offsets resampled every epoch
        indices = np.repeat(np.arange(n), config.crops_per_sample)
        shuffle_gen.shuffle(indices)
        offsets = crop_gen.integers(0, MAX_OFFSET + 1, size=(len(indices), 2))
        total_loss = 0.0
        correct = 0
        for start in range(0, len(indices), config.batch_size):
            batch_idx = indices[start:start + config.batch_size]
            batch_off = offsets[start:start + config.batch_size]
            xs, ys = _crop_batch(partition.samples, batch_idx, batch_off)
            probs, loss, grads = mdl.forward_backward(
                spec, params, xs, ys, train=True, rng=dropout_rng)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}"
                )
            sgd_step(params, grads, velocity, lr, config.momentum)
            total_loss += loss * len(batch_idx)
            correct += int((probs.argmax(axis=1) == ys).sum())
        last_loss = total_loss / len(indices)
        logs.append(EpochLog(epoch, last_loss, correct / len(indices)))
        if progress:
            log.info("epoch %d: loss %.4f acc %.4f", epoch, last_loss,
                     correct / len(indices))
    ckpt = mdl.Checkpoint(spec, params, epoch=config.epochs,
                          seed=config.seed, loss=last_loss)
    return ckpt, logs


def evaluate(ckpt: mdl.Checkpoint, partition: DatasetPartition,
             tencrop: bool = True, batch_size: int = 256) -> EvalReport:
    """Evaluate a checkpoint; ten-crop averaging or center crop only."""
    if not partition.samples:
        raise DataError("evaluation partition is empty")
    if len(partition.taxonomy) != ckpt.spec.num_classes:
        raise DataError(
            f"taxonomy size {len(partition.taxonomy)} does not match "
            f"checkpoint classes {ckpt.spec.num_classes}"
        )
    cm = ConfusionMatrix.empty(partition.taxonomy)
    center = (MAX_OFFSET // 2, MAX_OFFSET // 2)
    for start in range(0, len(partition.samples), batch_size):
        chunk = partition.samples[start:start + batch_size]
        if tencrop:
            crops = [c for s in chunk for c in ten_crop(s.image)]
            per_sample = 10
        else:
            crops = [crop_at(s.image, *center) for s in chunk]
            per_sample = 1
        xs = np.stack(crops).astype(np.float32)[:, None, :, :]
        probs = mdl.forward(ckpt.spec, ckpt.params, xs, train=False)
        for i, s in enumerate(chunk):
            vecs = probs[i * per_sample:(i + 1) * per_sample]
            avg = average_predictions(list(vecs))
            cm.add(s.label, int(avg.argmax()))
    return EvalReport(cm)


def epoch_log_csv(logs: list[EpochLog]) -> str:
    lines = ["epoch,mean_loss,train_acc"]
    lines += [f"{e.epoch},{e.mean_loss:.6f},{e.train_acc:.6f}" for e in logs]
    return "\n".join(lines) + "\n"
