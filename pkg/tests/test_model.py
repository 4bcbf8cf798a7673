"""Network specs, initialization, forward/backward, checkpoints."""

import io

import numpy as np
import pytest

from salex import model as mdl
from salex import tensor_ops as ops
from salex.errors import DataError, ShapeError
from salex.rng import RngState


def pool_trace(size, n_pools):
    """Independent floor-division pooling trace."""
    out = [size]
    for _ in range(n_pools):
        size //= 2
        out.append(size)
    return out


# ---------------------------------------------------------------------------
# spec construction
# ---------------------------------------------------------------------------

def test_vgg19_output_length():
    spec = mdl.build_vgg19_custom(num_classes=7)
    shapes = mdl.propagate_shapes(spec)
    assert shapes[-1] == (7,)


def test_vgg19_spatial_trace():
    assert pool_trace(44, 5) == [44, 22, 11, 5, 2, 1]
    spec = mdl.build_vgg19_custom()
    shapes = mdl.propagate_shapes(spec)
    flatten_i = next(i for i, l in enumerate(spec.layers)
                     if isinstance(l, mdl.Flatten))
    assert shapes[flatten_i - 1] == (512, 1, 1)


def test_vgg19_single_dropout_after_conv_stack():
    spec = mdl.build_vgg19_custom()
    dropouts = [i for i, l in enumerate(spec.layers) if isinstance(l, mdl.Dropout)]
    assert len(dropouts) == 1
    last_conv = max(i for i, l in enumerate(spec.layers) if isinstance(l, mdl.Conv))
    first_linear = min(i for i, l in enumerate(spec.layers)
                       if isinstance(l, mdl.Linear))
    assert last_conv < dropouts[0] < first_linear


def test_vgg19_single_hidden_fc():
    spec = mdl.build_vgg19_custom()
    linears = [l for l in spec.layers if isinstance(l, mdl.Linear)]
    assert len(linears) == 2  # one hidden FC, one classifier FC
    assert linears[-1].out_features == 7


def test_tiny_parameter_budget():
    assert mdl.param_count(mdl.build_tiny()) < 200_000


def test_tiny_structure_pattern():
    spec = mdl.build_tiny()
    kinds = [type(l).__name__ for l in spec.layers]
    # dropout before the single hidden FC, classifier FC + softmax at the end
    assert kinds[-5:] == ["Dropout", "Linear", "Relu", "Linear", "Softmax"]


def test_spec_rejects_missing_softmax():
    with pytest.raises(ShapeError, match="softmax"):
        mdl.NetworkSpec((mdl.Flatten(), mdl.Linear(7)), (1, 4, 4), 7)


def test_spec_rejects_wrong_output_size():
    with pytest.raises(ShapeError):
        mdl.NetworkSpec((mdl.Flatten(), mdl.Linear(5), mdl.Softmax()), (1, 4, 4), 7)


def test_shape_propagation_names_failing_layer():
    with pytest.raises(ShapeError, match="layer 1"):
        mdl.NetworkSpec((mdl.Flatten(), mdl.MaxPool2(), mdl.Softmax()), (1, 2, 2), 4)


# ---------------------------------------------------------------------------
# init
# ---------------------------------------------------------------------------

def test_init_biases_zero():
    params = mdl.init_params(mdl.build_tiny(), RngState(3))
    assert all(np.all(b == 0) for _, b in params)


def test_init_he_variance():
    spec = mdl.NetworkSpec(
        (mdl.Flatten(), mdl.Linear(100), mdl.Relu(), mdl.Linear(7), mdl.Softmax()),
        (1, 12, 12), 7)
    params = mdl.init_params(spec, RngState(11), dtype=np.float64)
    w = params[0][0]  # 100 x 144, >= 10^4 draws
    target = 2.0 / 144
    assert 0.8 * target <= w.var() <= 1.2 * target


def test_init_seed_reproducible():
    a = mdl.init_params(mdl.build_tiny(), RngState(9))
    b = mdl.init_params(mdl.build_tiny(), RngState(9))
    assert all(np.array_equal(wa, wb) and np.array_equal(ba, bb)
               for (wa, ba), (wb, bb) in zip(a, b))


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_net():
    spec = mdl.build_tiny()
    return spec, mdl.init_params(spec, RngState(42))


def test_forward_eval_deterministic(tiny_net):
    spec, params = tiny_net
    x = np.random.default_rng(0).random((1, 44, 44)).astype(np.float32)
    p1 = mdl.forward(spec, params, x)
    p2 = mdl.forward(spec, params, x)
    assert np.array_equal(p1, p2)


def test_forward_probs_sum_to_one(tiny_net):
    spec, params = tiny_net
    x = np.random.default_rng(1).random((3, 1, 44, 44)).astype(np.float32)
    probs = mdl.forward(spec, params, x)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_forward_zero_image_near_uniform(tiny_net):
    spec, params = tiny_net
    probs = mdl.forward(spec, params, np.zeros((1, 44, 44), dtype=np.float32))
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)


def test_forward_rejects_wrong_dims(tiny_net):
    spec, params = tiny_net
    with pytest.raises(ShapeError):
        mdl.forward(spec, params, np.zeros((1, 48, 48), dtype=np.float32))


def test_overfit_single_sample():
    spec = mdl.build_tiny(dropout_rate=0.0)
    params = mdl.init_params(spec, RngState(7))
    gen = np.random.default_rng(5)
    x = gen.random((1, 44, 44)).astype(np.float32)
    label = np.array([4])
    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    for _ in range(150):
        _, loss, grads = mdl.forward_backward(spec, params, x[None], label,
                                              train=True)
        for (w, b), (gw, gb), (vw, vb) in zip(params, grads, velocity):
            vw *= 0.9
            vw -= 0.05 * gw
            w += vw
            vb *= 0.9
            vb -= 0.05 * gb
            b += vb
    probs = mdl.forward(spec, params, x)
    assert probs[4] > 0.99


def test_end_to_end_gradient_check():
    # finite differences on a handful of randomly chosen parameters
    spec = mdl.build_tiny(dropout_rate=0.0)
    params = [(w.astype(np.float64), b.astype(np.float64))
              for w, b in mdl.init_params(spec, RngState(13))]
    gen = np.random.default_rng(3)
    x = gen.random((2, 1, 44, 44))
    labels = np.array([1, 5])
    _, _, grads = mdl.forward_backward(spec, params, x, labels, train=False)

    eps = 1e-5
    for _ in range(8):
        li = int(gen.integers(0, len(params)))
        w = params[li][0]
        flat_i = int(gen.integers(0, w.size))
        orig = w.flat[flat_i]
        w.flat[flat_i] = orig + eps
        _, lp, _ = mdl.forward_backward(spec, params, x, labels, train=False)
        w.flat[flat_i] = orig - eps
        _, lm, _ = mdl.forward_backward(spec, params, x, labels, train=False)
        w.flat[flat_i] = orig
        numeric = (lp - lm) / (2 * eps)
        analytic = grads[li][0].flat[flat_i]
        denom = max(abs(numeric) + abs(analytic), 1e-6)
        assert abs(numeric - analytic) / denom < 1e-3


# ---------------------------------------------------------------------------
# spec text round-trip
# ---------------------------------------------------------------------------

def test_spec_text_roundtrip():
    for spec in (mdl.build_tiny(), mdl.build_vgg19_custom()):
        assert mdl.spec_from_text(mdl.spec_to_text(spec)) == spec


def test_spec_text_rejects_garbage():
    with pytest.raises(DataError, match="line"):
        mdl.spec_from_text("input 1x44x44\nclasses 7\nwarp 9\nsoftmax\n")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tiny_net, tmp_path):
    spec, params = tiny_net
    ckpt = mdl.Checkpoint(spec, params, epoch=12, seed=42, loss=1.25)
    path = tmp_path / "m.ckpt"
    mdl.save_checkpoint(ckpt, path)
    loaded = mdl.load_checkpoint(path)
    assert loaded.spec == spec
    assert loaded.epoch == 12 and loaded.seed == 42 and loaded.loss == 1.25
    for (w, b), (lw, lb) in zip(params, loaded.params):
        assert w.tobytes() == lw.tobytes()
        assert b.tobytes() == lb.tobytes()


def test_checkpoint_truncated_rejected(tiny_net, tmp_path):
    spec, params = tiny_net
    path = tmp_path / "m.ckpt"
    mdl.save_checkpoint(mdl.Checkpoint(spec, params), path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(DataError, match="truncated"):
        mdl.load_checkpoint(path)


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\0" * 64)
    with pytest.raises(DataError, match="magic"):
        mdl.load_checkpoint(path)


def test_checkpoint_spec_mismatch_rejected(tiny_net):
    spec, params = tiny_net
    blob = mdl.checkpoint_bytes(mdl.Checkpoint(spec, params))
    other = mdl.build_tiny(num_classes=5, input_shape=(1, 44, 44))
    with pytest.raises(DataError, match="match"):
        mdl.load_checkpoint(io.BytesIO(blob), expected_spec=other)
