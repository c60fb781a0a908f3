import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsteer import decoder as dec
from attnsteer.decoder import DecoderConfig, LstmState
from attnsteer.params import cast
from attnsteer.tensor import Tape, Tensor, gradient_check, ops

from oracles import lstm_cell_reference, softmax_reference

SMALL = DecoderConfig(depth=3, locations=6, hidden=4, attn_hidden=5, out_hidden=5)


def _params(cfg=SMALL, seed=0, dtype=np.float64):
    return cast(dec.init_decoder(cfg, seed), dtype)


def _cube(rng, cfg=SMALL, *lead):
    return Tensor(rng.normal(size=lead + (cfg.locations, cfg.depth)), requires_grad=False)


def _state(rng, cfg=SMALL):
    return LstmState(Tensor(rng.normal(size=cfg.hidden)), Tensor(rng.normal(size=cfg.hidden)))


def _zero(params, *names):
    out = dict(params)
    for n in names:
        out[n] = Tensor(np.zeros(params[n].shape))
    return out


def test_init_state_matches_direct_formula():
    rng = np.random.default_rng(1)
    p = _params()
    cube = _cube(rng)
    st_ = dec.init_state(cube, p)
    m = cube.data.mean(axis=0)
    np.testing.assert_allclose(st_.c.data, np.tanh(m @ p["decoder/init_c/w"].data + p["decoder/init_c/b"].data))
    np.testing.assert_allclose(st_.h.data, np.tanh(m @ p["decoder/init_h/w"].data + p["decoder/init_h/b"].data))


def test_init_state_of_constant_cube_depends_only_on_the_vector():
    p = _params()
    v = np.array([0.3, -1.0, 2.0])
    a = dec.init_state(Tensor(np.tile(v, (6, 1))), p)
    b = dec.init_state(Tensor(np.tile(v, (2, 1))), p)
    c = dec.init_state(Tensor(v[None]), p)
    np.testing.assert_array_equal(a.h.data, b.h.data)
    np.testing.assert_allclose(a.h.data, c.h.data, rtol=1e-12)


def test_zero_cube_gives_zero_state():
    s = dec.init_state(Tensor(np.zeros((6, 3))), _params())
    assert not s.h.data.any() and not s.c.data.any()


def test_equal_logits_give_uniform_attention():
    p = _zero(_params(), "decoder/attn/v")
    alpha = dec.attend(_cube(np.random.default_rng(2)), Tensor(np.ones(4)), p)
    np.testing.assert_allclose(alpha.data, 1 / 6, rtol=1e-12)


def test_saturated_logit():
    logits = np.zeros(6)
    logits[2] = 50.0
    alpha = ops.softmax(Tensor(logits)).data
    assert alpha[2] >= 1 - 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_attention_matches_reference_softmax(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed=seed)
    cube, h = _cube(rng), Tensor(rng.normal(size=4))
    logits = dec.attention_logits(cube, h, p).data
    alpha = dec.attend(cube, h, p).data
    assert abs(alpha.sum() - 1) <= 1e-6 and (alpha >= 0).all()
    np.testing.assert_allclose(alpha, softmax_reference(logits), atol=1e-12)
    shifted = ops.softmax(Tensor(logits + 123.0)).data
    np.testing.assert_allclose(shifted, alpha, atol=1e-6)


def test_one_hot_context():
    rng = np.random.default_rng(3)
    p = _params()
    cube, h = _cube(rng), Tensor(rng.normal(size=4))
    alpha = np.zeros(6)
    alpha[4] = 1.0
    y = dec.make_context(cube, Tensor(alpha), h, p).data.reshape(6, 3)
    beta = dec.gate(h, p).data.item()
    np.testing.assert_allclose(y[4], beta * cube.data[4])
    assert not np.delete(y, 4, axis=0).any()


def test_context_size_is_depth_times_locations():
    assert DecoderConfig().context_size == 12800
    rng = np.random.default_rng(4)
    y = dec.make_context(_cube(rng), Tensor(np.full(6, 1 / 6)), Tensor(np.zeros(4)), _params())
    assert y.shape == (18,)


def test_strongly_negative_gate_silences_context():
    rng = np.random.default_rng(5)
    p = dict(_params())
    p["decoder/beta/b"] = Tensor(np.array([-40.0]))
    y = dec.make_context(_cube(rng), Tensor(np.full(6, 1 / 6)), Tensor(np.zeros(4)), p)
    assert np.abs(y.data).max() < 1e-15


def test_context_scales_linearly_with_gate():
    rng = np.random.default_rng(6)
    p = _params()
    cube, alpha, h = _cube(rng), Tensor(np.full(6, 1 / 6)), Tensor(rng.normal(size=4))
    y = dec.make_context(cube, alpha, h, p).data
    raw = dec.make_context(cube, alpha, h, p, use_beta=False).data
    beta = dec.gate(h, p).data.item()
    np.testing.assert_allclose(y, beta * raw, rtol=1e-12)
    np.testing.assert_allclose(3 * y, (3 * beta) * raw, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_lstm_cell_matches_reference(seed):
    rng = np.random.default_rng(seed)
    p = _params(seed=seed, dtype=np.float32)
    y = rng.normal(size=(2, 18)).astype(np.float32)
    h = rng.normal(size=(2, 4)).astype(np.float32)
    c = rng.normal(size=(2, 4)).astype(np.float32)
    h1, c1 = dec.lstm_cell(Tensor(y), Tensor(h), Tensor(c), p)
    rh, rc = lstm_cell_reference(y.astype(float), h.astype(float), c.astype(float),
                                 *(p[k].data.astype(float) for k in ("decoder/lstm/wy", "decoder/lstm/wh", "decoder/lstm/b")))
    np.testing.assert_allclose(h1.data, rh, atol=1e-5)
    np.testing.assert_allclose(c1.data, rc, atol=1e-5)


def test_step_is_deterministic_without_dropout():
    rng = np.random.default_rng(7)
    p, cube, s = _params(), _cube(rng), _state(rng)
    a = dec.step(cube, s, p, SMALL)
    b = dec.step(cube, s, p, SMALL)
    np.testing.assert_array_equal(a[0].data, b[0].data)
    np.testing.assert_array_equal(a[1].data, b[1].data)
    np.testing.assert_array_equal(a[2].h.data, b[2].h.data)


def test_zero_network_predicts_zero():
    rng = np.random.default_rng(8)
    p = {k: Tensor(np.zeros(v.shape)) for k, v in _params().items()}
    u, _, _ = dec.step(_cube(rng), _state(rng), p, SMALL)
    assert u.data.item() == 0.0


def test_train_mode_requires_rng():
    rng = np.random.default_rng(9)
    with pytest.raises(ValueError):
        dec.step(_cube(rng), _state(rng), _params(), SMALL, train_mode=True)


def test_single_step_rollout_equals_init_then_step():
    rng = np.random.default_rng(10)
    p, cube = _params(), _cube(rng)
    u, alpha = dec.rollout(Tensor(cube.data[None]), p, SMALL)
    u2, a2, _ = dec.step(cube, dec.init_state(cube, p), p, SMALL)
    assert u.shape == (1,) and alpha.shape == (1, 6)
    np.testing.assert_array_equal(u.data[0], u2.data)
    np.testing.assert_array_equal(alpha.data[0], a2.data)


def test_repeated_cube_without_lstm_input_is_constant_after_first_step():
    rng = np.random.default_rng(11)
    p = _zero(_params(), "decoder/lstm/wy", "decoder/lstm/wh", "decoder/init_c/w")
    cube = rng.normal(size=(6, 3))
    u, _ = dec.rollout(Tensor(np.tile(cube, (8, 1, 1))), p, SMALL)
    # c starts at zero and the gates see only their (zero) biases, so c stays
    # zero and h is zero after the first update; every later step is identical
    np.testing.assert_array_equal(u.data[2:], np.full(6, u.data[1]))


def test_attention_is_normalised_over_random_rollouts():
    rng = np.random.default_rng(12)
    cfg = DecoderConfig(depth=8, locations=50, hidden=16, attn_hidden=16, out_hidden=16)
    p = dec.init_decoder(cfg, 0)
    for _ in range(100):
        _, alpha = dec.rollout(Tensor(rng.normal(size=(20, 50, 8)).astype(np.float32)), p, cfg)
        assert np.abs(alpha.data.sum(axis=-1) - 1).max() <= 1e-6
        assert (alpha.data >= 0).all()


def test_batched_rollout_matches_per_sequence():
    rng = np.random.default_rng(13)
    p = _params()
    cubes = rng.normal(size=(3, 4, 6, 3))
    ub, ab = dec.rollout(Tensor(cubes), p, SMALL)
    for i in range(3):
        u, a = dec.rollout(Tensor(cubes[i]), p, SMALL)
        np.testing.assert_allclose(ub.data[i], u.data, rtol=1e-12)
        np.testing.assert_allclose(ab.data[i], a.data, rtol=1e-12)


@pytest.mark.parametrize("train_mode", [False, True])
def test_full_step_gradient_check(train_mode):
    rng = np.random.default_rng(14)
    p = _params()
    with Tape() as tape:
        u, alpha, s = dec.step(_cube(rng), _state(rng), p, SMALL, train_mode=train_mode,
                               rng=np.random.default_rng(0))
        ops.add(ops.reduce_sum(ops.multiply(alpha, alpha)), ops.add(u, ops.reduce_sum(s.c)))
    report = gradient_check(tape, 1e-4)
    assert report.passed, report.summary()
