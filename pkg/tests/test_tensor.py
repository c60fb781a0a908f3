import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsteer.tensor import (
    PRIMITIVES,
    NonFiniteError,
    Primitive,
    ShapeError,
    Tape,
    Tensor,
    backward,
    checkpoint,
    gradient_check,
    ops,
)

from oracles import conv2d_direct


def _rand(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape).astype(np.float64))


# -- forward behaviour ---------------------------------------------------------------------------

def test_identity_kernel_conv_leaves_image_unchanged():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(7, 9, 3)).astype(np.float32)
    kernel = np.zeros((1, 1, 3, 3), np.float32)
    kernel[0, 0] = np.eye(3)
    out = ops.conv2d(Tensor(img), Tensor(kernel), stride=1)
    np.testing.assert_array_equal(out.data, img)


def test_softmax_of_equal_logits_is_uniform():
    out = ops.softmax(Tensor(np.full(200, 3.7)))
    np.testing.assert_allclose(out.data, 1 / 200, rtol=1e-12)


def test_strided_conv_matches_hand_summed_values():
    img = np.arange(1, 17, dtype=np.float64).reshape(4, 4, 1)
    k = np.array([[1, 0, -1], [2, 0, -2], [1, 0, -1]], dtype=np.float64).reshape(3, 3, 1, 1)
    out = ops.conv2d(Tensor(img), Tensor(k), stride=2).data[..., 0]
    # same padding on a 4x4 input with a 3x3 kernel at stride 2 pads 0 before, 1 after;
    # the frozen numbers were summed by hand, the loop oracle confirms them
    expected = np.array([[-8.0, 28.0], [-6.0, 41.0]])
    np.testing.assert_allclose(out, expected)
    np.testing.assert_allclose(conv2d_direct(img, k, 2)[..., 0], expected)


@settings(max_examples=25, deadline=None)
@given(h=st.integers(3, 9), w=st.integers(3, 9), k=st.sampled_from([1, 3, 5]),
       stride=st.sampled_from([1, 2]), seed=st.integers(0, 10_000))
def test_conv_matches_direct_summation(h, w, k, stride, seed):
    rng = np.random.default_rng(seed)
    img = rng.normal(size=(h, w, 2))
    ker = rng.normal(size=(k, k, 2, 3))
    out = ops.conv2d(Tensor(img), Tensor(ker), stride=stride)
    np.testing.assert_allclose(out.data, conv2d_direct(img, ker, stride), atol=1e-10)


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_results_are_rejected():
    with pytest.raises(NonFiniteError):
        ops.multiply(Tensor(np.array([1e30], np.float32)), Tensor(np.array([1e30], np.float32)))


def test_tensors_are_read_only():
    t = Tensor(np.zeros(3))
    with pytest.raises(ValueError):
        t.data[0] = 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_softmax_is_a_distribution(xs):
    out = ops.softmax(Tensor(np.array(xs, dtype=np.float32))).data
    assert np.all(out >= 0)
    assert abs(float(out.sum()) - 1.0) <= 1e-6


def test_inverted_dropout_preserves_expected_sum():
    rng = np.random.default_rng(1)
    x = Tensor(rng.uniform(-1, 1, size=(8, 16)))
    keep = 0.5
    sums = np.array([ops.reduce_sum(ops.dropout(x, rng.random(x.shape) < keep, keep)).item()
                     for _ in range(2000)])
    target = float(x.data.sum())
    band = 3 * sums.std(ddof=1) / np.sqrt(len(sums))
    assert abs(sums.mean() - target) <= band


# -- reverse mode --------------------------------------------------------------------------------

def test_identity_tape_gradient_is_one():
    x = Tensor(np.array([2.0, -3.0]))
    with Tape() as tape:
        ops.reshape(x, (2,))
    g = backward(tape, np.ones(2))
    np.testing.assert_array_equal(g[x.id].data, [1.0, 1.0])


def test_bilinear_gradient_equals_other_factor():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=False)
    b = Tensor(rng.normal(size=(3, 4)))
    with Tape() as tape:
        ops.reduce_sum(ops.multiply(a, b))
    g = backward(tape, 1.0)
    np.testing.assert_array_equal(g[b.id].data, a.data)


def test_unused_leaf_gets_zero_gradient():
    x = Tensor(np.ones(3))
    unused = Tensor(np.ones((2, 2)))
    with Tape() as tape:
        tape.watch(unused)
        ops.reduce_sum(ops.tanh(x))
    g = backward(tape, 1.0)
    np.testing.assert_array_equal(g[unused.id].data, np.zeros((2, 2)))


def test_seed_shape_mismatch_is_rejected():
    x = Tensor(np.ones((2, 3)))
    with Tape() as tape:
        ops.tanh(x)
    with pytest.raises(ShapeError):
        backward(tape, np.ones(5))


def test_empty_tape_is_rejected():
    with pytest.raises(ValueError):
        backward(Tape(), 1.0)


def test_replay_is_bit_identical():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 5)).astype(np.float32))
    w = Tensor(rng.normal(size=(5, 2)).astype(np.float32))
    with Tape() as tape:
        ops.softmax(ops.tanh(ops.matmul(x, w)))
    np.testing.assert_array_equal(tape.replay().output.data, tape.output.data)


# -- gradient oracle ------------------------------------------------------------------------------

def _unary_cases(rng):
    x = _rand(rng, 3, 4)
    away = Tensor(np.sign(x.data) * (0.1 + np.abs(x.data)))   # keep relu/abs away from their kink
    return {
        "tanh": lambda: ops.tanh(x),
        "sigmoid": lambda: ops.sigmoid(x),
        "relu": lambda: ops.relu(away),
        "abs": lambda: ops.abs(away),
        "softmax": lambda: ops.softmax(x, axis=0),
        "reduce_sum": lambda: ops.reduce_sum(x, axis=1, keepdims=True),
        "reshape": lambda: ops.reshape(x, (2, 6)),
        "slice": lambda: x[1:3, ::2],
        "dropout": lambda: ops.dropout(x, rng.random(x.shape) < 0.5, 0.5),
    }


def test_every_primitive_passes_gradient_check():
    rng = np.random.default_rng(4)
    a, b = _rand(rng, 3, 4), _rand(rng, 4)
    cases = dict(_unary_cases(rng))
    cases.update({
        "add": lambda: ops.add(a, b),
        "multiply": lambda: ops.multiply(a, b),
        "matmul": lambda: ops.matmul(a, _rand(rng, 4, 2)),
        "concat": lambda: ops.concat([a, _rand(rng, 3, 2)], axis=1),
        "conv2d": lambda: ops.conv2d(_rand(rng, 2, 6, 7, 2), _rand(rng, 3, 3, 2, 3), stride=2),
    })
    assert set(cases) == set(PRIMITIVES), "every registered primitive needs a case"
    for name, build in cases.items():
        with Tape() as tape:
            build()
        report = gradient_check(tape, tolerance=1e-4)
        assert report.passed, f"{name}\n{report.summary()}"


def test_linear_layer_passes():
    rng = np.random.default_rng(5)
    x, w, b = _rand(rng, 5, 3), _rand(rng, 3, 4), _rand(rng, 4)
    with Tape() as tape:
        ops.add(ops.matmul(x, w), b)
    assert gradient_check(tape, 1e-4).passed


def test_softmax_plus_l1_passes():
    rng = np.random.default_rng(6)
    logits, target = _rand(rng, 6), rng.uniform(size=6)
    with Tape() as tape:
        ops.reduce_sum(ops.abs(ops.subtract(ops.softmax(logits), target)))
    assert gradient_check(tape, 1e-4).passed


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_random_three_layer_compositions_pass(seed):
    rng = np.random.default_rng(seed)
    unary = [ops.tanh, ops.sigmoid, lambda t: ops.softmax(t, axis=-1), lambda t: ops.multiply(t, t)]
    x = _rand(rng, 4, 3)
    with Tape() as tape:
        h = x
        for _ in range(3):
            h = ops.add(ops.matmul(h, _rand(rng, h.shape[1], 3)), _rand(rng, 3))
            h = unary[rng.integers(len(unary))](h)
        ops.reduce_sum(h)
    report = gradient_check(tape, 1e-4)
    assert report.passed, report.summary()


def test_corrupted_adjoint_is_caught_and_named(monkeypatch):
    good = PRIMITIVES["tanh"]

    def bad_backward(attrs, saved, g, x):
        (gx,) = good.backward(attrs, saved, g, x)
        return (gx * 1.01,)

    monkeypatch.setitem(PRIMITIVES, "tanh", Primitive("tanh", good.forward, bad_backward))
    rng = np.random.default_rng(7)
    x, w = _rand(rng, 3, 4), _rand(rng, 4, 2)
    with Tape() as tape:
        ops.reduce_sum(ops.tanh(ops.matmul(x, w)))
    report = gradient_check(tape, 1e-4)
    assert not report.passed
    assert report.failing_primitives == ["tanh"]


def test_gradient_check_rejects_non_positive_tolerance():
    with Tape() as tape:
        ops.tanh(Tensor(np.ones(2)))
    with pytest.raises(ValueError):
        gradient_check(tape, 0.0)


# -- checkpoints -----------------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    params = {"b/w": rng.normal(size=(3, 4)).astype(np.float32), "a": np.float32([1.5]),
              "scalar": np.array(2.0, np.float32)}
    checkpoint.save(tmp_path / "p.ckpt", params)
    back = checkpoint.load(tmp_path / "p.ckpt")
    assert set(back) == set(params)
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])


def test_checkpoint_byte_layout():
    blob = checkpoint.dumps({"w": np.array([[1.0, 2.0]], np.float32)})
    expected = (b"CAPT1" + struct.pack("<I", 1) + b"w" + struct.pack("<I", 2)
                + struct.pack("<qq", 1, 2) + struct.pack("<ff", 1.0, 2.0))
    assert blob == expected


@pytest.mark.parametrize("blob", [b"NOPE", b"CAPT1\x05\x00\x00\x00ab", b"CAPT1" + struct.pack("<I", 1) + b"w"
                                  + struct.pack("<I", 1) + struct.pack("<q", 4) + b"\x00" * 8])
def test_corrupt_checkpoints_are_rejected(blob):
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(blob)
