"""Soft-attention LSTM decoder.

At each step the previous hidden state scores every feature vector, a softmax
turns the scores into attention weights, and the weighted feature vectors are
kept *separate* (concatenated, not averaged) and scaled by a sigmoid gate
before entering a single LSTM layer. A small output head reads the context and
the new hidden state and predicts the inverse turning radius.

All functions accept a leading batch axis: feature cubes are ``B x L x D``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .params import Params, xavier_init, zeros
from .tensor import Tensor, ops


@dataclass(frozen=True)
class DecoderConfig:
    depth: int = 64          # D
    locations: int = 200     # L
    hidden: int = 64         # LSTM width
    attn_hidden: int = 64
    out_hidden: int = 64
    keep_prob: float = 0.5
    use_beta: bool = True
    output_scale: float = 1.0

    @property
    def context_size(self) -> int:
        return self.depth * self.locations

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        return cls(**d)


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


def init_decoder(config: DecoderConfig, seed) -> Params:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    D, H, A, O, Y = config.depth, config.hidden, config.attn_hidden, config.out_hidden, config.context_size
    shapes = {
        "decoder/init_c/w": (D, H), "decoder/init_h/w": (D, H),
        "decoder/attn/wx": (D, A), "decoder/attn/wh": (H, A), "decoder/attn/v": (A, 1),
        "decoder/beta/w": (H, 1),
        "decoder/lstm/wy": (Y, 4 * H), "decoder/lstm/wh": (H, 4 * H),
        "decoder/out/wy": (Y, O), "decoder/out/wh": (H, O), "decoder/out/v": (O, 1),
    }
    params: Params = {k: xavier_init(s, rng, name=k) for k, s in shapes.items()}
    for k, n in {
        "decoder/init_c/b": H, "decoder/init_h/b": H, "decoder/attn/b": A, "decoder/beta/b": 1,
        "decoder/lstm/b": 4 * H, "decoder/out/b": O, "decoder/out/c": 1,
    }.items():
        params[k] = zeros((n,), name=k)
    return params


def init_state(cube: Tensor, params: Params) -> LstmState:
    """Initial ``(h, c)`` from the mean feature vector of the first cube."""
    mean = ops.mean(cube, axis=-2)
    c = ops.tanh(ops.add(ops.matmul(_rows(mean), params["decoder/init_c/w"]), params["decoder/init_c/b"]))
    h = ops.tanh(ops.add(ops.matmul(_rows(mean), params["decoder/init_h/w"]), params["decoder/init_h/b"]))
    return LstmState(h=_unrows(h, mean), c=_unrows(c, mean))


def _rows(x: Tensor) -> Tensor:
    return ops.reshape(x, (1, x.shape[0])) if x.ndim == 1 else x


def _unrows(x: Tensor, like: Tensor) -> Tensor:
    return ops.reshape(x, (x.shape[1],)) if like.ndim == 1 else x


def attention_logits(cube: Tensor, h_prev: Tensor, params: Params) -> Tensor:
    """One tanh hidden layer over ``[x_i, h]`` shared across locations -> ``B x L``."""
    batched = cube.ndim == 3
    x = cube if batched else ops.reshape(cube, (1,) + cube.shape)
    h = _rows(h_prev)
    hx = ops.matmul(x, params["decoder/attn/wx"])                      # B x L x A
    hh = ops.matmul(h, params["decoder/attn/wh"])                      # B x A
    hh = ops.reshape(hh, (hh.shape[0], 1, hh.shape[1]))
    e = ops.tanh(ops.add(ops.add(hx, hh), params["decoder/attn/b"]))
    logits = ops.matmul(e, params["decoder/attn/v"])                   # B x L x 1
    logits = ops.reshape(logits, logits.shape[:2])
    return logits if batched else ops.reshape(logits, (logits.shape[1],))


def attend(cube: Tensor, h_prev: Tensor, params: Params) -> Tensor:
    """Softmax attention weights over the ``L`` locations."""
    return ops.softmax(attention_logits(cube, h_prev, params), axis=-1)


def gate(h_prev: Tensor, params: Params) -> Tensor:
    """Scalar context gate ``sigmoid(f_beta(h))`` per batch row (``B x 1``)."""
    return ops.sigmoid(ops.add(ops.matmul(_rows(h_prev), params["decoder/beta/w"]), params["decoder/beta/b"]))


def make_context(cube: Tensor, alpha: Tensor, h_prev: Tensor, params: Params,
                 use_beta: bool = True) -> Tensor:
    """Gated, flattened ``{alpha_i * x_i}``: block ``i`` of length D is ``beta * alpha_i * x_i``."""
    batched = cube.ndim == 3
    x = cube if batched else ops.reshape(cube, (1,) + cube.shape)
    a = alpha if batched else ops.reshape(alpha, (1,) + alpha.shape)
    b, l, d = x.shape
    weighted = ops.multiply(x, ops.reshape(a, (b, l, 1)))
    y = ops.reshape(weighted, (b, l * d))
    if use_beta:
        y = ops.multiply(y, gate(h_prev, params))
    return y if batched else ops.reshape(y, (l * d,))


def lstm_cell(y: Tensor, h: Tensor, c: Tensor, params: Params) -> tuple[Tensor, Tensor]:
    """Standard LSTM update; gate order in the packed weights is i, f, o, g."""
    n = h.shape[-1]
    z = ops.add(
        ops.add(ops.matmul(_rows(y), params["decoder/lstm/wy"]), ops.matmul(_rows(h), params["decoder/lstm/wh"])),
        params["decoder/lstm/b"],
    )
    i = ops.sigmoid(z[:, 0:n])
    f = ops.sigmoid(z[:, n:2 * n])
    o = ops.sigmoid(z[:, 2 * n:3 * n])
    g = ops.tanh(z[:, 3 * n:4 * n])
    c_new = ops.add(ops.multiply(f, _rows(c)), ops.multiply(i, g))
    h_new = ops.multiply(o, ops.tanh(c_new))
    return _unrows(h_new, h), _unrows(c_new, c)


def output_head(y: Tensor, h: Tensor, params: Params, scale: float = 1.0) -> Tensor:
    hidden = ops.tanh(ops.add(
        ops.add(ops.matmul(_rows(y), params["decoder/out/wy"]), ops.matmul(_rows(h), params["decoder/out/wh"])),
        params["decoder/out/b"],
    ))
    u = ops.add(ops.matmul(hidden, params["decoder/out/v"]), params["decoder/out/c"])
    u = ops.reshape(u, (u.shape[0],))
    if scale != 1.0:
        u = ops.multiply(u, scale)
    return u if h.ndim == 2 else ops.reshape(u, ())


def _drop(h: Tensor, config: DecoderConfig, rng) -> Tensor:
    mask = rng.random(h.shape) < config.keep_prob
    return ops.dropout(h, mask, config.keep_prob)


def step(cube: Tensor, state: LstmState, params: Params, config: DecoderConfig,
         train_mode: bool = False, rng=None) -> tuple[Tensor, Tensor, LstmState]:
    """One decoder step: returns ``(u_hat, alpha, next_state)``.

    In train mode dropout is applied to the hidden state where it feeds the
    attention layer and the output head; the recurrent path is untouched.
    """
    if train_mode and rng is None:
        raise ValueError("train_mode needs an rng for dropout masks")
    h_attn = _drop(state.h, config, rng) if train_mode else state.h
    alpha = attend(cube, h_attn, params)
    y = make_context(cube, alpha, state.h, params, use_beta=config.use_beta)
    h, c = lstm_cell(y, state.h, state.c, params)
    h_out = _drop(h, config, rng) if train_mode else h
    u = output_head(y, h_out, params, config.output_scale)
    return u, alpha, LstmState(h=h, c=c)


def rollout(cubes: Tensor, params: Params, config: DecoderConfig, train_mode: bool = False,
            rng=None) -> tuple[Tensor, Tensor]:
    """Run ``T`` steps over ``(B,) T x L x D`` cubes.

    Returns predictions ``(B,) T`` and attention ``(B,) T x L``; the state is
    initialised from the first cube.
    """
    if not isinstance(cubes, Tensor):
        cubes = Tensor(np.asarray(cubes, dtype=np.float32), requires_grad=False)
    batched = cubes.ndim == 4
    x = cubes if batched else ops.reshape(cubes, (1,) + cubes.shape)
    b, t_len, l, d = x.shape
    if t_len < 1:
        raise ValueError("rollout needs at least one time step")
    frames = [ops.reshape(x[:, t:t + 1], (b, l, d)) for t in range(t_len)]
    state = init_state(frames[0], params)
    us, alphas = [], []
    for t in range(t_len):
        u, alpha, state = step(frames[t], state, params, config, train_mode, rng)
        us.append(ops.reshape(u, (b, 1)))
        alphas.append(ops.reshape(alpha, (b, 1, l)))
    u_seq = ops.concat(us, axis=1) if t_len > 1 else us[0]
    a_seq = ops.concat(alphas, axis=1) if t_len > 1 else alphas[0]
    if not batched:
        u_seq = ops.reshape(u_seq, (t_len,))
        a_seq = ops.reshape(a_seq, (t_len, l))
    return u_seq, a_seq
