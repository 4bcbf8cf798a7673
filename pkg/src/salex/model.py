"""Declarative network specs, forward/backward execution, and checkpoints.

A NetworkSpec is an ordered list of layer descriptors validated by shape
propagation. Parameters live outside the spec as a list of (weight, bias)
pairs, one per conv/linear layer in declaration order, so the optimizer can
enumerate them directly.

Checkpoint binary layout (version 1, little-endian throughout):
    8-byte magic "SALEXNET", u32 version, u32 spec-text length,
    spec canonical text (UTF-8), u64 seed, u32 epoch, f64 loss,
    u64 float count, then that many float32 parameter values in
    declaration order (weight then bias per layer).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import tensor_ops as ops
from .errors import DataError, ShapeError
from .rng import RngState

MAGIC = b"SALEXNET"
VERSION = 1


@dataclass(frozen=True)
class Conv:
    out_channels: int
    kernel: int = 3
    pad: int = 1


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class MaxPool2:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Linear:
    out_features: int


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Conv | Relu | MaxPool2 | Dropout | Flatten | Linear | Softmax


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[Layer, ...]
    input_shape: tuple[int, int, int]  # (C, H, W)
    num_classes: int

    def __post_init__(self):
        shapes = propagate_shapes(self)
        final = shapes[-1]
        if final != (self.num_classes,):
            raise ShapeError(
                f"spec output shape {final} does not match num_classes {self.num_classes}"
            )
        softmaxes = [i for i, l in enumerate(self.layers) if isinstance(l, Softmax)]
        if softmaxes != [len(self.layers) - 1]:
            raise ShapeError("spec must contain exactly one softmax, as the last layer")


def propagate_shapes(spec: NetworkSpec) -> list[tuple]:
    """Shape after each layer; raises ShapeError naming the failing layer index."""
    shape: tuple = spec.input_shape
    out = []
    for i, layer in enumerate(spec.layers):
        try:
            if isinstance(layer, Conv):
                c, h, w = shape
                hh = ops.conv_output_size(h, layer.kernel, 1, layer.pad)
                ww = ops.conv_output_size(w, layer.kernel, 1, layer.pad)
                if hh < 1 or ww < 1:
                    raise ShapeError(f"conv kernel {layer.kernel} too large for {h}x{w}")
                shape = (layer.out_channels, hh, ww)
            elif isinstance(layer, MaxPool2):
                c, h, w = shape
                if h < 2 or w < 2:
                    raise ShapeError(f"maxpool2 needs spatial dims >= 2, got {h}x{w}")
                shape = (c, h // 2, w // 2)
            elif isinstance(layer, Flatten):
                shape = (int(np.prod(shape)),)
            elif isinstance(layer, Linear):
                if len(shape) != 1:
                    raise ShapeError(f"linear needs a flat input, got shape {shape}")
                shape = (layer.out_features,)
            elif isinstance(layer, (Relu, Dropout, Softmax)):
                pass
            else:
                raise ShapeError(f"unknown layer type {layer!r}")
        except (ShapeError, ValueError) as exc:
            raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        out.append(shape)
    return out


# ---------------------------------------------------------------------------
# spec canonical text
# ---------------------------------------------------------------------------

def spec_to_text(spec: NetworkSpec) -> str:
    lines = [
        "input {}x{}x{}".format(*spec.input_shape),
        f"classes {spec.num_classes}",
    ]
    for layer in spec.layers:
        if isinstance(layer, Conv):
            lines.append(f"conv {layer.out_channels} k{layer.kernel} p{layer.pad}")
        elif isinstance(layer, Relu):
            lines.append("relu")
        elif isinstance(layer, MaxPool2):
            lines.append("maxpool2")
        elif isinstance(layer, Dropout):
            lines.append(f"dropout {layer.rate!r}")
        elif isinstance(layer, Flatten):
            lines.append("flatten")
        elif isinstance(layer, Linear):
            lines.append(f"linear {layer.out_features}")
        elif isinstance(layer, Softmax):
            lines.append("softmax")
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> NetworkSpec:
    input_shape = None
    num_classes = None
    layers: list[Layer] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "input":
                c, h, w = (int(v) for v in parts[1].split("x"))
                input_shape = (c, h, w)
            elif parts[0] == "classes":
                num_classes = int(parts[1])
            elif parts[0] == "conv":
                layers.append(Conv(int(parts[1]), int(parts[2][1:]), int(parts[3][1:])))
            elif parts[0] == "relu":
                layers.append(Relu())
            elif parts[0] == "maxpool2":
                layers.append(MaxPool2())
            elif parts[0] == "dropout":
                layers.append(Dropout(float(parts[1])))
            elif parts[0] == "flatten":
                layers.append(Flatten())
            elif parts[0] == "linear":
                layers.append(Linear(int(parts[1])))
            elif parts[0] == "softmax":
                layers.append(Softmax())
            else:
                raise ValueError(f"unknown layer keyword {parts[0]!r}")
        except (ValueError, IndexError) as exc:
            raise DataError(f"bad spec text at line {lineno}: {raw!r} ({exc})") from None
    if input_shape is None or num_classes is None:
        raise DataError("spec text missing input/classes header")
    return NetworkSpec(tuple(layers), input_shape, num_classes)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

VGG19_CHANNEL_PLAN = (64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
                      512, 512, 512, 512, "M", 512, 512, 512, 512, "M")


def build_vgg19_custom(num_classes: int = 7,
                       input_shape: tuple[int, int, int] = (1, 44, 44),
                       hidden: int = 512,
                       dropout_rate: float = 0.5) -> NetworkSpec:
    """VGG-19 conv stack with a single dropout before one hidden FC layer,
    then the classifier FC + softmax. On 44x44 input the spatial trace is
    44 -> 22 -> 11 -> 5 -> 2 -> 1."""
    layers: list[Layer] = []
    for entry in VGG19_CHANNEL_PLAN:
        if entry == "M":
            layers.append(MaxPool2())
        else:
            layers.append(Conv(int(entry), kernel=3, pad=1))
            layers.append(Relu())
    layers += [
        Flatten(),
        Dropout(dropout_rate),
        Linear(hidden),
        Relu(),
        Linear(num_classes),
        Softmax(),
    ]
    return NetworkSpec(tuple(layers), input_shape, num_classes)


def build_tiny(num_classes: int = 7,
               input_shape: tuple[int, int, int] = (1, 44, 44),
               dropout_rate: float = 0.5) -> NetworkSpec:
    """Desk-scale surrogate (<200k parameters) with the same structural
    pattern: conv blocks, dropout before one hidden FC, then FC + softmax."""
    layers: list[Layer] = [
        Conv(8), Relu(), MaxPool2(),
        Conv(16), Relu(), MaxPool2(),
        Conv(32), Relu(), MaxPool2(),
        Flatten(),
        Dropout(dropout_rate),
        Linear(64), Relu(),
        Linear(num_classes),
        Softmax(),
    ]
    return NetworkSpec(tuple(layers), input_shape, num_classes)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

Params = list[tuple[np.ndarray, np.ndarray]]


def param_shapes(spec: NetworkSpec) -> list[tuple[tuple, tuple]]:
    """(weight_shape, bias_shape) for each parametric layer in order."""
    shapes = []
    cur: tuple = spec.input_shape
    for layer, out_shape in zip(spec.layers, propagate_shapes(spec)):
        if isinstance(layer, Conv):
            shapes.append(((layer.out_channels, cur[0], layer.kernel, layer.kernel),
                           (layer.out_channels,)))
        elif isinstance(layer, Linear):
            shapes.append(((layer.out_features, cur[0]), (layer.out_features,)))
        cur = out_shape
    return shapes


def param_count(spec: NetworkSpec) -> int:
    return sum(int(np.prod(w) + np.prod(b)) for w, b in param_shapes(spec))


def init_params(spec: NetworkSpec, rng: RngState,
                dtype=np.float32) -> Params:
    """He initialization: weights ~ N(0, 2/fan_in), biases zero.

    The final classifier layer instead gets a small fixed scale (std 0.01) so
    a fresh network starts near-uniform and its initial loss is ~ln K.
    """
    gen = rng.generator
    shapes = param_shapes(spec)
    params: Params = []
    for i, (wshape, bshape) in enumerate(shapes):
        if i == len(shapes) - 1:
            std = 0.01
        else:
            fan_in = int(np.prod(wshape[1:]))
            std = np.sqrt(2.0 / fan_in)
        w = gen.normal(0.0, std, size=wshape).astype(dtype)
        b = np.zeros(bshape, dtype=dtype)
        params.append((w, b))
    return params


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------

def forward(spec: NetworkSpec, params: Params, x: np.ndarray,
            train: bool = False, rng: RngState | None = None) -> np.ndarray:
    """Class probabilities for input (C,H,W) or batch (N,C,H,W)."""
    probs, _ = _run_forward(spec, params, x, train, rng, keep_cache=False)
    return probs


def _run_forward(spec, params, x, train, rng, keep_cache):
    single = x.ndim == len(spec.input_shape)
    xb = x[None] if single else x
    if tuple(xb.shape[1:]) != tuple(spec.input_shape):
        raise ShapeError(
            f"input shape {tuple(xb.shape[1:])} does not match spec {spec.input_shape}"
        )
    gen = rng.generator if rng is not None else None
    cache = []
    cur = xb
    p = 0
    for layer in spec.layers:
        if isinstance(layer, Conv):
            w, b = params[p]
            p += 1
            out = ops.conv2d(cur, w, b, stride=1, pad=layer.pad)
            cache.append(("conv", cur, layer))
        elif isinstance(layer, Relu):
            out = ops.relu(cur)
            cache.append(("relu", cur, layer))
        elif isinstance(layer, MaxPool2):
            out, idx = ops.maxpool2(cur)
            cache.append(("pool", (cur, idx), layer))
        elif isinstance(layer, Dropout):
            out, mask = ops.dropout(cur, layer.rate, train, gen)
            cache.append(("dropout", mask, layer))
        elif isinstance(layer, Flatten):
            out = cur.reshape(cur.shape[0], -1)
            cache.append(("flatten", cur.shape, layer))
        elif isinstance(layer, Linear):
            w, b = params[p]
            p += 1
            out = ops.linear(cur, w, b)
            cache.append(("linear", cur, layer))
        else:  # Softmax
            out = ops.softmax(cur)
            cache.append(("softmax", None, layer))
        cur = out
        if not keep_cache:
            cache[-1] = None
    probs = cur[0] if single else cur
    return probs, (cache if keep_cache else None)


def forward_backward(spec: NetworkSpec, params: Params, x: np.ndarray,
                     labels: np.ndarray, train: bool = True,
                     rng: RngState | None = None
                     ) -> tuple[np.ndarray, float, list[tuple[np.ndarray, np.ndarray]]]:
    """One forward + backward pass over a batch.

    Returns (probs, mean cross-entropy loss, grads) with grads shaped like
    `params`.
    """
    single = x.ndim == len(spec.input_shape)
    xb = x[None] if single else x
    labs = np.atleast_1d(np.asarray(labels))
    probs, cache = _run_forward(spec, params, xb, train, rng, keep_cache=True)
    loss = ops.cross_entropy(probs, labs)

    grads: list = [None] * len(params)
    p = len(params)
    grad = None
    for entry in reversed(cache):
        kind, saved, layer = entry
        if kind == "softmax":
            grad = ops.softmax_xent_backward(probs, labs)
        elif kind == "linear":
            p -= 1
            w, _ = params[p]
            grad, gw, gb = ops.linear_backward(saved, w, grad)
            grads[p] = (gw, gb)
        elif kind == "flatten":
            grad = grad.reshape(saved)
        elif kind == "dropout":
            grad = ops.dropout_backward(saved, grad)
        elif kind == "pool":
            xin, idx = saved
            grad = ops.maxpool2_backward(xin, idx, grad)
        elif kind == "relu":
            grad = ops.relu_backward(saved, grad)
        elif kind == "conv":
            p -= 1
            w, _ = params[p]
            grad, gw, gb = ops.conv2d_backward(saved, w, grad, stride=1, pad=layer.pad)
            grads[p] = (gw, gb)
    return (probs[0] if single else probs), loss, grads


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: Params
    epoch: int = 0
    seed: int = 0
    loss: float = 0.0


def save_checkpoint(ckpt: Checkpoint, sink) -> None:
    """Write a checkpoint to a path or binary file object."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as f:
            save_checkpoint(ckpt, f)
        return
    text = spec_to_text(ckpt.spec).encode()
    flat = np.concatenate(
        [np.concatenate([w.ravel(), b.ravel()]) for w, b in ckpt.params]
    ).astype("<f4")
    sink.write(MAGIC)
    sink.write(struct.pack("<I", VERSION))
    sink.write(struct.pack("<I", len(text)))
    sink.write(text)
    sink.write(struct.pack("<QId", ckpt.seed, ckpt.epoch, ckpt.loss))
    sink.write(struct.pack("<Q", flat.size))
    sink.write(flat.tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataError(f"truncated checkpoint: expected {n} bytes for {what}")
    return data


def load_checkpoint(source, expected_spec: NetworkSpec | None = None) -> Checkpoint:
    """Read a checkpoint from a path or binary file object.

    Rejects bad magic/version, truncation, parameter-count mismatch, and (if
    `expected_spec` is given) any spec that differs from the expected one.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as f:
            return load_checkpoint(f, expected_spec)
    magic = _read_exact(source, len(MAGIC), "magic")
    if magic != MAGIC:
        raise DataError(f"not a checkpoint file (magic {magic!r})")
    (version,) = struct.unpack("<I", _read_exact(source, 4, "version"))
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    (text_len,) = struct.unpack("<I", _read_exact(source, 4, "spec length"))
    spec = spec_from_text(_read_exact(source, text_len, "spec text").decode())
    seed, epoch, loss = struct.unpack("<QId", _read_exact(source, 20, "metadata"))
    (count,) = struct.unpack("<Q", _read_exact(source, 8, "float count"))
    if count != param_count(spec):
        raise DataError(
            f"checkpoint holds {count} floats but spec needs {param_count(spec)}"
        )
    flat = np.frombuffer(_read_exact(source, count * 4, "parameters"), dtype="<f4")
    if expected_spec is not None and spec != expected_spec:
        raise DataError("checkpoint spec does not match the expected network spec")
    params: Params = []
    pos = 0
    for wshape, bshape in param_shapes(spec):
        wn, bn = int(np.prod(wshape)), int(np.prod(bshape))
        w = flat[pos:pos + wn].reshape(wshape).copy()
        pos += wn
        b = flat[pos:pos + bn].reshape(bshape).copy()
        pos += bn
        params.append((w, b))
    return Checkpoint(spec, params, epoch=epoch, seed=seed, loss=loss)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(ckpt, buf)
    return buf.getvalue()
