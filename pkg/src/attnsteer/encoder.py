"""Strided convolutional encoder producing the feature cube.

Five same-padded convolutions without pooling: three stride-2 layers then two
stride-1 layers, so the spatial extent shrinks by exactly eight. The cube is
viewed as ``L = H' * W'`` feature vectors; flattened row ``i`` is grid cell
``(i // W', i % W')``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import Params, xavier_init, zeros
from .tensor import ShapeError, Tensor, ops
from .tensor.ops import same_padding


@dataclass(frozen=True)
class ConvLayer:
    kernel: int
    stride: int
    channels: int


DEFAULT_LAYERS = (
    ConvLayer(5, 2, 24),
    ConvLayer(5, 2, 36),
    ConvLayer(5, 2, 48),
    ConvLayer(3, 1, 64),
    ConvLayer(3, 1, 64),
)


@dataclass(frozen=True)
class EncoderConfig:
    layers: tuple[ConvLayer, ...] = DEFAULT_LAYERS
    input_size: tuple[int, int] = (80, 160)
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(
            l if isinstance(l, ConvLayer) else ConvLayer(*l) for l in self.layers
        ))
        object.__setattr__(self, "input_size", tuple(self.input_size))
        h, w = self.input_size
        if h % self.total_stride or w % self.total_stride:
            raise ValueError(f"input {self.input_size} not divisible by total stride {self.total_stride}")

    @property
    def total_stride(self) -> int:
        return int(np.prod([l.stride for l in self.layers]))

    @property
    def grid(self) -> tuple[int, int]:
        h, w = self.input_size
        for l in self.layers:
            h = same_padding(h, l.kernel, l.stride)[0]
            w = same_padding(w, l.kernel, l.stride)[0]
        return h, w

    @property
    def depth(self) -> int:
        return self.layers[-1].channels

    @property
    def num_locations(self) -> int:
        h, w = self.grid
        return h * w

    def to_dict(self) -> dict:
        return {
            "layers": [[l.kernel, l.stride, l.channels] for l in self.layers],
            "input_size": list(self.input_size),
            "in_channels": self.in_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncoderConfig":
        return cls(
            layers=tuple(ConvLayer(*l) for l in d.get("layers", [[l.kernel, l.stride, l.channels] for l in DEFAULT_LAYERS])),
            input_size=tuple(d.get("input_size", (80, 160))),
            in_channels=d.get("in_channels", 3),
        )


def init_encoder(config: EncoderConfig, seed) -> Params:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: Params = {}
    c_in = config.in_channels
    for k, layer in enumerate(config.layers):
        name = f"encoder/conv{k}"
        params[f"{name}/w"] = xavier_init((layer.kernel, layer.kernel, c_in, layer.channels), rng, name=f"{name}/w")
        params[f"{name}/b"] = zeros((layer.channels,), name=f"{name}/b")
        c_in = layer.channels
    return params


def encode(frames, params: Params, config: EncoderConfig = EncoderConfig()) -> Tensor:
    """Run the encoder on ``H x W x 3`` or ``N x H x W x 3`` frames.

    Returns the feature cube ``(N,) H' x W' x D`` with ReLU activations.
    """
    x = frames if isinstance(frames, Tensor) else Tensor(np.asarray(frames, dtype=np.float32), requires_grad=False)
    single = x.ndim == 3
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    expected = tuple(config.input_size) + (config.in_channels,)
    if x.ndim != 4 or x.shape[1:] != expected:
        raise ShapeError(f"encoder expects frames of shape {expected}, got {x.shape}")
    for k, layer in enumerate(config.layers):
        w = params[f"encoder/conv{k}/w"]
        b = params[f"encoder/conv{k}/b"]
        if w.shape[:2] != (layer.kernel, layer.kernel) or w.shape[3] != layer.channels:
            raise ShapeError(f"encoder/conv{k}/w has shape {w.shape}, config wants {layer}")
        x = ops.relu(ops.add(ops.conv2d(x, w, layer.stride), b))
    if single:
        x = ops.reshape(x, x.shape[1:])
    return x


def flatten_cube(cube: Tensor) -> Tensor:
    """``(N,) H' x W' x D`` -> ``(N,) L x D`` in row-major grid order."""
    if cube.ndim == 3:
        h, w, d = cube.shape
        return ops.reshape(cube, (h * w, d))
    n, h, w, d = cube.shape
    return ops.reshape(cube, (n, h * w, d))


def unflatten_cube(flat: Tensor, grid: tuple[int, int]) -> Tensor:
    h, w = grid
    if flat.ndim == 2:
        return ops.reshape(flat, (h, w, flat.shape[-1]))
    return ops.reshape(flat, (flat.shape[0], h, w, flat.shape[-1]))


def receptive_fields(config: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """Inclusive input row and column ranges seen by each output cell.

    Returns arrays of shape ``(H', 2)`` and ``(W', 2)``; ranges are clipped to
    the image because padding contributes only zeros.
    """
    def axis_ranges(size: int) -> np.ndarray:
        steps = []
        cur = size
        for layer in config.layers:
            cur, before, _ = same_padding(cur, layer.kernel, layer.stride)
            steps.append((layer, before))
        lo = np.arange(cur)
        hi = np.arange(cur)
        for layer, before in reversed(steps):
            lo = lo * layer.stride - before
            hi = hi * layer.stride - before + layer.kernel - 1
        return np.stack([np.clip(lo, 0, size - 1), np.clip(hi, 0, size - 1)], axis=1)

    h, w = config.input_size
    return axis_ranges(h), axis_ranges(w)
